#include "mdlsel/nnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdlsel/error.hpp"

namespace mdlsel {

void MlpArchitecture::validate() const {
    if (input_dim <= 0 || hidden_dim <= 0 || n_hidden_layers < 0 || n_classes < 2)
        throw InvalidArgument("architecture dimensions must be positive");
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || weight_decay < 0.0 || batch_size <= 0 || patience_epochs < 1 ||
        min_improvement < 0.0 || max_epochs < 1 || !(beta1 >= 0.0 && beta1 < 1.0) ||
        !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
        throw InvalidArgument("invalid training configuration");
}

void to_json(nlohmann::json& j, const MlpArchitecture& a) {
    j = {{"input_dim", a.input_dim},
         {"hidden_dim", a.hidden_dim},
         {"n_hidden_layers", a.n_hidden_layers},
         {"n_classes", a.n_classes}};
}

void from_json(const nlohmann::json& j, MlpArchitecture& a) {
    MlpArchitecture d;
    a.input_dim = j.value("input_dim", d.input_dim);
    a.hidden_dim = j.value("hidden_dim", d.hidden_dim);
    a.n_hidden_layers = j.value("n_hidden_layers", d.n_hidden_layers);
    a.n_classes = j.value("n_classes", d.n_classes);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate},     {"weight_decay", c.weight_decay},
         {"batch_size", c.batch_size},           {"patience_epochs", c.patience_epochs},
         {"min_improvement", c.min_improvement}, {"max_epochs", c.max_epochs},
         {"beta1", c.beta1},                     {"beta2", c.beta2},
         {"epsilon", c.epsilon},                 {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.patience_epochs = j.value("patience_epochs", d.patience_epochs);
    c.min_improvement = j.value("min_improvement", d.min_improvement);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.epsilon = j.value("epsilon", d.epsilon);
    c.seed = j.value("seed", d.seed);
}

AdamState AdamState::zeros_like(const MlpModel& model) {
    AdamState s;
    for (const auto& l : model.layers) {
        s.m.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    s.v = s.m;
    return s;
}

LabeledData to_labeled(const Dataset& ds, std::size_t first, std::size_t count) {
    if (first + count > ds.size()) throw InvalidArgument("row range outside dataset");
    const auto dim = static_cast<Eigen::Index>(ds.config().input_dim());
    LabeledData out;
    out.x.resize(static_cast<Eigen::Index>(count), dim);
    out.y.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Sample& s = ds[first + i];
        if (static_cast<Eigen::Index>(s.image.size()) != dim)
            throw ShapeMismatch("sample image missing or of the wrong size");
        for (Eigen::Index k = 0; k < dim; ++k) {
            out.x(static_cast<Eigen::Index>(i), k) = s.image[static_cast<std::size_t>(k)];
        }
        out.y[i] = s.label;
    }
    return out;
}

LabeledData to_labeled(const Dataset& ds) { return to_labeled(ds, 0, ds.size()); }

LabeledData head(const LabeledData& d, std::size_t count) {
    if (count > d.size()) throw InvalidArgument("head longer than data");
    LabeledData out;
    out.x = d.x.topRows(static_cast<Eigen::Index>(count));
    out.y.assign(d.y.begin(), d.y.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
}

namespace {

std::vector<int> layer_sizes(const MlpArchitecture& a) {
    std::vector<int> sizes{a.input_dim};
    for (int i = 0; i < a.n_hidden_layers; ++i) sizes.push_back(a.hidden_dim);
    sizes.push_back(a.n_classes);
    return sizes;
}

void check_batch(const MlpModel& model, const Matrix& x) {
    if (x.cols() != model.arch.input_dim) throw ShapeMismatch("input width differs from input_dim");
}

void check_labels(const Matrix& logits, std::span<const int> labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw ShapeMismatch("label count differs from batch size");
    for (int y : labels) {
        if (y < 0 || y >= logits.cols()) throw InvalidArgument("label out of range");
    }
}

}  // namespace

MlpModel zero_model(const MlpArchitecture& arch) {
    arch.validate();
    MlpModel m;
    m.arch = arch;
    const auto sizes = layer_sizes(arch);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        m.layers.push_back({Matrix::Zero(sizes[l + 1], sizes[l]), Vector::Zero(sizes[l + 1])});
    }
    return m;
}

MlpModel init_xavier(const MlpArchitecture& arch, Rng& rng) {
    MlpModel m = zero_model(arch);
    for (auto& l : m.layers) {
        const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
            l.weight.data()[i] = rng.uniform(-bound, bound);
        }
    }
    return m;
}

Matrix forward(const MlpModel& model, const Matrix& x) {
    check_batch(model, x);
    Matrix a = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        Matrix z = a * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        if (l + 1 < model.layers.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

std::vector<double> label_bits(const Matrix& logits, std::span<const int> labels) {
    check_labels(logits, labels);
    std::vector<double> out(labels.size());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        out[static_cast<std::size_t>(i)] = (lse - logits(i, labels[static_cast<std::size_t>(i)])) / kLn2;
    }
    return out;
}

double cross_entropy_bits(const Matrix& logits, std::span<const int> labels) {
    if (labels.empty()) throw InvalidArgument("cross-entropy of an empty batch");
    const auto bits = label_bits(logits, labels);
    return std::accumulate(bits.begin(), bits.end(), 0.0) / static_cast<double>(bits.size());
}

Gradients backward(const MlpModel& model, const Matrix& x, std::span<const int> labels,
                   double* mean_loss_nats) {
    check_batch(model, x);
    if (static_cast<std::size_t>(x.rows()) != labels.size())
        throw ShapeMismatch("label count differs from batch size");
    if (labels.empty()) throw InvalidArgument("gradient of an empty batch");

    const std::size_t nl = model.layers.size();
    std::vector<Matrix> acts;  // acts[l] is the input of layer l
    acts.reserve(nl + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < nl; ++l) {
        Matrix z = acts.back() * model.layers[l].weight.transpose();
        z.rowwise() += model.layers[l].bias.transpose();
        if (l + 1 < nl) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
    }

    Matrix delta = softmax(acts.back());
    check_labels(delta, labels);
    if (mean_loss_nats != nullptr) {
        double sum = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            sum -= std::log(std::max(delta(static_cast<Eigen::Index>(i), labels[i]),
                                     std::numeric_limits<double>::min()));
        }
        *mean_loss_nats = sum / static_cast<double>(labels.size());
    }
    for (std::size_t i = 0; i < labels.size(); ++i) delta(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
    delta /= static_cast<double>(labels.size());

    Gradients g(nl);
    for (std::size_t l = nl; l-- > 0;) {
        g[l].weight = delta.transpose() * acts[l];
        g[l].bias = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix prev = delta * model.layers[l].weight;
            // ReLU mask: acts[l] is the post-activation of layer l-1
            delta = prev.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return g;
}

void adamw_step(MlpModel& model, const Gradients& grads, AdamState& state, const TrainConfig& cfg) {
    if (grads.size() != model.layers.size() || state.m.size() != model.layers.size())
        throw ShapeMismatch("optimizer state does not match model");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double lr = cfg.learning_rate;
    const double wd = cfg.weight_decay;

    auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        auto step = ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon)).matrix();
        w = w - lr * step - (lr * wd) * w;
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        update(model.layers[l].weight, grads[l].weight, state.m[l].weight, state.v[l].weight);
        update(model.layers[l].bias, grads[l].bias, state.m[l].bias, state.v[l].bias);
    }
}

namespace {

constexpr Eigen::Index kEvalChunk = 1024;

double mean_nats(const MlpModel& model, const LabeledData& data) {
    double sum = 0.0;
    for (Eigen::Index start = 0; start < data.x.rows(); start += kEvalChunk) {
        const Eigen::Index n = std::min(kEvalChunk, data.x.rows() - start);
        const auto bits = label_bits(forward(model, data.x.middleRows(start, n)),
                                     std::span(data.y).subspan(static_cast<std::size_t>(start),
                                                               static_cast<std::size_t>(n)));
        for (double b : bits) sum += b * kLn2;
    }
    return sum / static_cast<double>(data.size());
}

}  // namespace

TrainResult train_until_converged(const LabeledData& train, const LabeledData& val,
                                  const TrainConfig& cfg, const MlpArchitecture& arch) {
    cfg.validate();
    arch.validate();
    if (train.size() == 0 || val.size() == 0) throw InvalidArgument("training needs non-empty train and validation sets");
    if (train.x.cols() != arch.input_dim || val.x.cols() != arch.input_dim)
        throw ShapeMismatch("data width differs from input_dim");

    Rng init_rng(cfg.seed, 0, "init");
    MlpModel model = init_xavier(arch, init_rng);
    AdamState state = AdamState::zeros_like(model);

    TrainResult result;
    result.model = model;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;

    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    Matrix batch;
    std::vector<int> batch_labels;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(cfg.seed, static_cast<std::uint64_t>(epoch), "shuffle");
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t bs = std::min(static_cast<std::size_t>(cfg.batch_size), n - start);
            batch.resize(static_cast<Eigen::Index>(bs), train.x.cols());
            batch_labels.resize(bs);
            for (std::size_t k = 0; k < bs; ++k) {
                batch.row(static_cast<Eigen::Index>(k)) = train.x.row(static_cast<Eigen::Index>(order[start + k]));
                batch_labels[k] = train.y[order[start + k]];
            }
            double loss = 0.0;
            const Gradients g = backward(model, batch, batch_labels, &loss);
            epoch_loss += loss * static_cast<double>(bs);
            adamw_step(model, g, state, cfg);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(n);
        rec.val_loss = mean_nats(model, val);
        result.history.push_back(rec);

        if (rec.val_loss < best - cfg.min_improvement) {
            best = rec.val_loss;
            result.model = model;
            result.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience_epochs) {
            break;
        }
    }
    return result;
}

Evaluation evaluate(const MlpModel& model, const LabeledData& data) {
    if (data.size() == 0) throw InvalidArgument("evaluation of an empty dataset");
    Evaluation e;
    double bits = 0.0;
    std::size_t correct = 0;
    for (Eigen::Index start = 0; start < data.x.rows(); start += kEvalChunk) {
        const Eigen::Index n = std::min(kEvalChunk, data.x.rows() - start);
        const Matrix logits = forward(model, data.x.middleRows(start, n));
        const auto labels = std::span(data.y).subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(n));
        for (double b : label_bits(logits, labels)) bits += b;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index arg = 0;
            logits.row(i).maxCoeff(&arg);
            if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    e.mean_bits = bits / static_cast<double>(data.size());
    e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return e;
}

Evaluation evaluate(const MlpModel& model, const Dataset& data) {
    return evaluate(model, to_labeled(data));
}

std::vector<int> predict(const MlpModel& model, const Matrix& x) {
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index start = 0; start < x.rows(); start += kEvalChunk) {
        const Eigen::Index n = std::min(kEvalChunk, x.rows() - start);
        const Matrix logits = forward(model, x.middleRows(start, n));
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index arg = 0;
            logits.row(i).maxCoeff(&arg);
            out[static_cast<std::size_t>(start + i)] = static_cast<int>(arg);
        }
    }
    return out;
}

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t& pos) {
    if (b.size() - pos < 8) throw FormatError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[pos + static_cast<std::size_t>(i)]} << (8 * i);
    pos += 8;
    return v;
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const MlpModel& model, const TrainConfig& cfg) {
    const nlohmann::json header{{"format", "mdlsel-mlp"},
                                {"architecture", model.arch},
                                {"train", cfg},
                                {"seed", cfg.seed},
                                {"parameters", model.parameter_count()}};
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& l : model.layers) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(l.weight.data()[i]));
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(l.bias[i]));
    }
    return out;
}

MlpModel load_checkpoint(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    const std::uint64_t len = get_u64(bytes, pos);
    if (bytes.size() - pos < len) throw FormatError("checkpoint header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    pos += len;
    MlpModel m = zero_model(header.at("architecture").get<MlpArchitecture>());
    for (auto& l : m.layers) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = std::bit_cast<double>(get_u64(bytes, pos));
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = std::bit_cast<double>(get_u64(bytes, pos));
    }
    if (pos != bytes.size()) throw FormatError("checkpoint has trailing bytes");
    return m;
}

}  // namespace mdlsel
