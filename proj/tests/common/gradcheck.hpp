#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mdlsel/nnet.hpp"

namespace mdlsel::fixture {

struct GradCheck {
    int input_dim = 0;
    int hidden_layers = 0;
    double worst_relative_error = 0.0;
};

inline double loss_nats(const MlpModel& m, const Matrix& x, const std::vector<int>& y) {
    return cross_entropy_bits(forward(m, x), y) * kLn2;
}

/// Random MLP (in <= 48, width 8, one or two hidden layers) on 8 random samples.
/// Each sample is redrawn until every hidden pre-activation is at least `margin`
/// from the ReLU kink, so a step of eps cannot cross it.
inline GradCheck gradient_check(Rng& rng, double eps, double margin = 0.02) {
    GradCheck out;
    out.input_dim = 4 + static_cast<int>(rng.below(45));
    out.hidden_layers = 1 + static_cast<int>(rng.below(2));
    MlpArchitecture a;
    a.input_dim = out.input_dim;
    a.hidden_dim = 8;
    a.n_hidden_layers = out.hidden_layers;
    MlpModel m = init_xavier(a, rng);
    for (auto& l : m.layers) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.5, 0.5);
    }

    auto clear_of_kinks = [&](const Eigen::RowVectorXd& row) {
        Eigen::RowVectorXd h = row;
        for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
            const Eigen::RowVectorXd z = h * m.layers[l].weight.transpose() + m.layers[l].bias.transpose();
            if (z.cwiseAbs().minCoeff() < margin) return false;
            h = z.cwiseMax(0.0);
        }
        return true;
    };
    Matrix x(8, out.input_dim);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::RowVectorXd row(out.input_dim);
        do {
            for (Eigen::Index c = 0; c < row.size(); ++c) row[c] = rng.normal();
        } while (!clear_of_kinks(row));
        x.row(r) = row;
    }
    std::vector<int> y(8);
    for (auto& v : y) v = static_cast<int>(rng.below(2));

    const Gradients g = backward(m, x, y);
    auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + eps;
        const double up = loss_nats(m, x, y);
        param = saved - eps;
        const double down = loss_nats(m, x, y);
        param = saved;
        const double numeric = (up - down) / (2 * eps);
        const double rel = std::abs(numeric - analytic) / std::max(1e-6, std::abs(numeric) + std::abs(analytic));
        out.worst_relative_error = std::max(out.worst_relative_error, rel);
    };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (Eigen::Index i = 0; i < m.layers[l].weight.size(); ++i)
            check(m.layers[l].weight.data()[i], g[l].weight.data()[i]);
        for (Eigen::Index i = 0; i < m.layers[l].bias.size(); ++i) check(m.layers[l].bias[i], g[l].bias[i]);
    }
    return out;
}

}  // namespace mdlsel::fixture
