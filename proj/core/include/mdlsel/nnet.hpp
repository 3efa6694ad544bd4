#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "mdlsel/rng.hpp"
#include "mdlsel/taskgen.hpp"

namespace mdlsel {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kLn2 = 0.69314718055994530942;

struct MlpArchitecture {
    int input_dim = 3072;
    int hidden_dim = 256;
    int n_hidden_layers = 2;
    int n_classes = 2;

    void validate() const;
    friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

/// Weight is (out x in); activations are rows.
struct Layer {
    Matrix weight;
    Vector bias;
};

/// ReLU feed-forward classifier; the last layer is the linear head.
struct MlpModel {
    MlpArchitecture arch;
    std::vector<Layer> layers;

    std::size_t parameter_count() const;
};

using Gradients = std::vector<Layer>;

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    int batch_size = 64;
    int patience_epochs = 3;
    /// Required drop of the validation loss (nats per sample) to reset patience.
    double min_improvement = 5e-4;
    int max_epochs = 500;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const MlpArchitecture& a);
void from_json(const nlohmann::json& j, MlpArchitecture& a);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
    Gradients m;
    Gradients v;
    long step = 0;

    static AdamState zeros_like(const MlpModel& model);
};

/// Flattened inputs (one row per sample) with integer class labels.
struct LabeledData {
    Matrix x;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
};

/// Rows [first, first+count) of a dataset's rendered images, flattened channel-last.
LabeledData to_labeled(const Dataset& ds, std::size_t first, std::size_t count);
LabeledData to_labeled(const Dataset& ds);
LabeledData head(const LabeledData& d, std::size_t count);

MlpModel init_xavier(const MlpArchitecture& arch, Rng& rng);
/// Model with every parameter zero.
MlpModel zero_model(const MlpArchitecture& arch);

Matrix forward(const MlpModel& model, const Matrix& x);
Matrix softmax(const Matrix& logits);

/// -log2 p(y_i | x_i) per row.
std::vector<double> label_bits(const Matrix& logits, std::span<const int> labels);
/// Mean of label_bits.
double cross_entropy_bits(const Matrix& logits, std::span<const int> labels);

/// Gradient of the mean natural-log cross-entropy over the batch. The loss of the
/// same forward pass is stored in `mean_loss_nats` when given.
Gradients backward(const MlpModel& model, const Matrix& x, std::span<const int> labels,
                   double* mean_loss_nats = nullptr);

/// Decoupled weight decay: w -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * w).
void adamw_step(MlpModel& model, const Gradients& grads, AdamState& state, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;  ///< nats per sample, averaged over the epoch's batches
    double val_loss = 0.0;    ///< nats per sample
};

struct TrainResult {
    MlpModel model;  ///< best-validation snapshot
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

TrainResult train_until_converged(const LabeledData& train, const LabeledData& val,
                                  const TrainConfig& cfg, const MlpArchitecture& arch);

struct Evaluation {
    double mean_bits = 0.0;
    double accuracy = 0.0;
};

Evaluation evaluate(const MlpModel& model, const LabeledData& data);
Evaluation evaluate(const MlpModel& model, const Dataset& data);
/// Top-1 predictions, evaluated in chunks.
std::vector<int> predict(const MlpModel& model, const Matrix& x);

/// JSON header + raw little-endian 64-bit parameter block.
std::vector<std::uint8_t> save_checkpoint(const MlpModel& model, const TrainConfig& cfg);
MlpModel load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace mdlsel
