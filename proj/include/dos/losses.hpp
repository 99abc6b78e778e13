#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dos/errors.hpp"
#include "dos/kernels.hpp"
#include "dos/tensor.hpp"

namespace dos {

// Probabilities are clamped below at this value inside cross-entropy so a
// saturated wrong prediction yields a large finite loss instead of inf.
inline constexpr double kProbClamp = 1e-12;

template <typename T>
double cross_entropy(const Tensor<T>& probs, int y) {
    if (y < 0 || static_cast<std::size_t>(y) >= probs.size()) {
        throw DataError("cross_entropy: label " + std::to_string(y) +
                        " out of range for " + std::to_string(probs.size()) + " classes");
    }
    double p = static_cast<double>(probs[static_cast<std::size_t>(y)]);
    return -std::log(std::max(p, kProbClamp));
}

namespace detail {

template <typename T>
void check_uniform_dim(const Tensor<T>& fx, const std::vector<Tensor<T>>& neighbors) {
    for (const auto& v : neighbors) {
        if (v.size() != fx.size()) {
            throw DimensionError("neighbor dimension " + std::to_string(v.size()) +
                                 " does not match embedding dimension " +
                                 std::to_string(fx.size()));
        }
    }
}

} // namespace detail

// Sum of squared errors between the embedding and every element of N(x).
// Minimized when fx is the arithmetic mean of the neighbor set.
template <typename T>
double loss_f(const Tensor<T>& fx, const std::vector<Tensor<T>>& neighbors) {
    if (neighbors.empty()) throw DataError("loss_f: neighbor set is empty");
    detail::check_uniform_dim(fx, neighbors);
    double s = 0.0;
    for (const auto& v : neighbors) {
        s += static_cast<double>(detail::sq_dist(fx.data(), v.data(), fx.size()));
    }
    return s;
}

// Normalized exponential weights exp(-||fx - v||^2) / Z.  A max-shift in the
// exponent keeps Z away from underflow; the normalized result is unchanged.
template <typename T>
std::vector<double> rho(const Tensor<T>& fx, const std::vector<Tensor<T>>& neighbors) {
    if (neighbors.empty()) throw DataError("rho: neighbor set is empty");
    detail::check_uniform_dim(fx, neighbors);
    std::vector<double> expo(neighbors.size());
    double mx = -1e300;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        expo[i] = -static_cast<double>(detail::sq_dist(fx.data(), neighbors[i].data(), fx.size()));
        mx = std::max(mx, expo[i]);
    }
    double z = 0.0;
    for (double& e : expo) {
        e = std::exp(e - mx);
        z += e;
    }
    for (double& e : expo) e /= z;
    return expo;
}

// Weighted sum of cross-entropies over the classifier outputs for N(x).
template <typename T>
double loss_g(const std::vector<Tensor<T>>& g_outputs, int y, const std::vector<double>& weights) {
    if (g_outputs.size() != weights.size()) {
        throw DataError("loss_g: " + std::to_string(g_outputs.size()) + " outputs vs " +
                        std::to_string(weights.size()) + " weights");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < g_outputs.size(); ++i) {
        s += weights[i] * cross_entropy(g_outputs[i], y);
    }
    return s;
}

// Weighted instance variant: sum_i w_i ||fx - v_i||^2, minimized at the
// weighted mean sum_i w_i v_i.
template <typename T>
double weighted_loss_f(const Tensor<T>& fx, const std::vector<Tensor<T>>& neighbors,
                       const Tensor<T>& w) {
    if (w.size() != neighbors.size()) {
        throw DataError("weighted_loss_f: weight arity " + std::to_string(w.size()) +
                        " does not match neighbor count " + std::to_string(neighbors.size()));
    }
    if (neighbors.empty()) throw DataError("weighted_loss_f: neighbor set is empty");
    detail::check_uniform_dim(fx, neighbors);
    double s = 0.0;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        s += static_cast<double>(w[i]) *
             static_cast<double>(detail::sq_dist(fx.data(), neighbors[i].data(), fx.size()));
    }
    return s;
}

// exp(-w_i ||fx - v_i||^2) / Z', same stabilization as rho.
template <typename T>
std::vector<double> rho_weighted(const Tensor<T>& fx, const std::vector<Tensor<T>>& neighbors,
                                 const Tensor<T>& w) {
    if (w.size() != neighbors.size()) {
        throw DataError("rho_weighted: weight arity " + std::to_string(w.size()) +
                        " does not match neighbor count " + std::to_string(neighbors.size()));
    }
    if (neighbors.empty()) throw DataError("rho_weighted: neighbor set is empty");
    detail::check_uniform_dim(fx, neighbors);
    std::vector<double> expo(neighbors.size());
    double mx = -1e300;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        expo[i] = -static_cast<double>(w[i]) *
                  static_cast<double>(detail::sq_dist(fx.data(), neighbors[i].data(), fx.size()));
        mx = std::max(mx, expo[i]);
    }
    double z = 0.0;
    for (double& e : expo) {
        e = std::exp(e - mx);
        z += e;
    }
    for (double& e : expo) e /= z;
    return expo;
}

template <typename T>
double weighted_loss_g(const std::vector<Tensor<T>>& g_outputs, int y,
                       const std::vector<double>& rho_w) {
    if (g_outputs.size() != rho_w.size()) {
        throw DataError("weighted_loss_g: " + std::to_string(g_outputs.size()) + " outputs vs " +
                        std::to_string(rho_w.size()) + " weights");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < g_outputs.size(); ++i) {
        s += rho_w[i] * cross_entropy(g_outputs[i], y);
    }
    return s;
}

} // namespace dos
