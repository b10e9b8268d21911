#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace zoomroi {

// Small dense approximators with all parameters in one flat vector, so that
// optimizers and finite-difference checks can treat them uniformly.
//
//   forward(x)                 -> std::array<double, Out>
//   accumulate_gradient(x, dy, grad)   grad += (d output / d params)^T dy

template <typename Net>
concept DenseNet = requires(Net n, const Net cn, std::span<const double> x,
                            const typename Net::Output& dy, std::span<double> g) {
    typename Net::Output;
    { cn.forward(x) } -> std::same_as<typename Net::Output>;
    cn.accumulate_gradient(x, dy, g);
    { n.params() } -> std::same_as<std::span<double>>;
    { cn.params() } -> std::same_as<std::span<const double>>;
    { cn.inputs() } -> std::same_as<std::size_t>;
};

inline void check_input(std::span<const double> x, std::size_t expected) {
    if (x.size() != expected) {
        throw InvalidArgument("feature length " + std::to_string(x.size()) +
                              " does not match model input " + std::to_string(expected));
    }
}

/// y = W x + b. Parameters: W row-major (Out x F), then b.
template <std::size_t Out>
class LinearNet {
public:
    using Output = std::array<double, Out>;
    static constexpr std::size_t outputs = Out;

    LinearNet() = default;
    explicit LinearNet(std::size_t inputs) : inputs_(inputs), params_(Out * inputs + Out, 0.0) {}

    std::size_t inputs() const { return inputs_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    std::span<const double> weights(std::size_t o) const {
        return std::span<const double>(params_).subspan(o * inputs_, inputs_);
    }
    double bias(std::size_t o) const { return params_[Out * inputs_ + o]; }

    Output forward(std::span<const double> x) const {
        check_input(x, inputs_);
        Output y{};
        for (std::size_t o = 0; o < Out; ++o) {
            const double* w = &params_[o * inputs_];
            double acc = params_[Out * inputs_ + o];
            for (std::size_t i = 0; i < inputs_; ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    void accumulate_gradient(std::span<const double> x, const Output& dy,
                             std::span<double> grad) const {
        check_input(x, inputs_);
        for (std::size_t o = 0; o < Out; ++o) {
            if (dy[o] == 0.0) continue;
            double* g = &grad[o * inputs_];
            for (std::size_t i = 0; i < inputs_; ++i) g[i] += dy[o] * x[i];
            grad[Out * inputs_ + o] += dy[o];
        }
    }

private:
    std::size_t inputs_ = 0;
    std::vector<double> params_;
};

/// F -> hidden (rectifier) -> Out. Parameters: W1 (H x F), b1 (H), W2 (Out x H), b2 (Out).
template <std::size_t Out>
class MlpNet {
public:
    using Output = std::array<double, Out>;
    static constexpr std::size_t outputs = Out;
    static constexpr std::size_t kDefaultHidden = 64;

    MlpNet() = default;
    MlpNet(std::size_t inputs, std::size_t hidden)
        : inputs_(inputs), hidden_(hidden), params_(hidden * inputs + hidden + Out * hidden + Out, 0.0) {}

    /// He-normal first layer, Glorot-scaled output layer, zero biases.
    MlpNet(std::size_t inputs, std::size_t hidden, Rng& rng) : MlpNet(inputs, hidden) {
        const double s1 = std::sqrt(2.0 / static_cast<double>(inputs));
        const double s2 = std::sqrt(1.0 / static_cast<double>(hidden));
        for (std::size_t i = 0; i < hidden_ * inputs_; ++i) params_[i] = s1 * rng.normal();
        for (std::size_t i = 0; i < Out * hidden_; ++i) params_[w2() + i] = s2 * rng.normal();
    }

    std::size_t inputs() const { return inputs_; }
    std::size_t hidden() const { return hidden_; }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    Output forward(std::span<const double> x) const {
        std::vector<double> h(hidden_);
        return forward_cached(x, h);
    }

    void accumulate_gradient(std::span<const double> x, const Output& dy,
                             std::span<double> grad) const {
        backprop(x, [&](const Output&) { return dy; }, grad);
    }

    /// One forward pass; dy is computed from the output by `dy_of`. Returns the output.
    template <typename DyFn>
    Output backprop(std::span<const double> x, DyFn&& dy_of, std::span<double> grad) const {
        std::vector<double> h(hidden_);
        const Output y = forward_cached(x, h);
        const Output dy = dy_of(y);
        std::vector<double> dh(hidden_, 0.0);
        for (std::size_t o = 0; o < Out; ++o) {
            if (dy[o] == 0.0) continue;
            const double* w = &params_[w2() + o * hidden_];
            double* g = &grad[w2() + o * hidden_];
            for (std::size_t j = 0; j < hidden_; ++j) {
                g[j] += dy[o] * h[j];
                dh[j] += dy[o] * w[j];
            }
            grad[b2() + o] += dy[o];
        }
        for (std::size_t j = 0; j < hidden_; ++j) {
            if (h[j] <= 0.0 || dh[j] == 0.0) continue;  // rectifier gate
            double* g = &grad[j * inputs_];
            for (std::size_t i = 0; i < inputs_; ++i) g[i] += dh[j] * x[i];
            grad[b1() + j] += dh[j];
        }
        return y;
    }

private:
    std::size_t b1() const { return hidden_ * inputs_; }
    std::size_t w2() const { return b1() + hidden_; }
    std::size_t b2() const { return w2() + Out * hidden_; }

    Output forward_cached(std::span<const double> x, std::vector<double>& h) const {
        check_input(x, inputs_);
        for (std::size_t j = 0; j < hidden_; ++j) {
            const double* w = &params_[j * inputs_];
            double acc = params_[b1() + j];
            for (std::size_t i = 0; i < inputs_; ++i) acc += w[i] * x[i];
            h[j] = acc > 0.0 ? acc : 0.0;
        }
        Output y{};
        for (std::size_t o = 0; o < Out; ++o) {
            const double* w = &params_[w2() + o * hidden_];
            double acc = params_[b2() + o];
            for (std::size_t j = 0; j < hidden_; ++j) acc += w[j] * h[j];
            y[o] = acc;
        }
        return y;
    }

    std::size_t inputs_ = 0;
    std::size_t hidden_ = 0;
    std::vector<double> params_;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
        }
    }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    long long t_ = 0;
};

}  // namespace zoomroi
