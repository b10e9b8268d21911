#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "feature_table.hpp"
#include "format.hpp"
#include "nn.hpp"
#include "random.hpp"
#include "scoring.hpp"
#include "selection.hpp"

namespace zoomroi {

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// One labelled tile. `features` points into the FeatureTable it was sampled
/// from, which must outlive the example.
struct Example {
    std::span<const double> features;
    double label = 0.0;
    TileAddr addr;
    std::size_t slide = 0;
};

struct Dataset {
    std::vector<Example> examples;
    std::vector<std::uint64_t> seeds;  // one per sample_tiles call merged in

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }

    void append(const Dataset& other) {
        examples.insert(examples.end(), other.examples.begin(), other.examples.end());
        seeds.insert(seeds.end(), other.seeds.begin(), other.seeds.end());
    }
};

/// `per_level` tiles at every level, uniform with replacement over the
/// in-image tiles of that level, labelled with their exact reward.
inline Dataset sample_tiles(const RewardMap& map, const FeatureTable& table, std::size_t per_level,
                            std::uint64_t seed, std::size_t slide = 0) {
    if (per_level == 0) throw InvalidArgument("sample_tiles: per_level must be at least 1");
    Rng rng(seed);
    Dataset d;
    d.seeds.push_back(seed);
    for (std::uint32_t l = 0; l <= map.max_depth(); ++l) {
        const std::vector<TileAddr> tiles = map.tiles_at(l);
        for (std::size_t i = 0; i < per_level; ++i) {
            const TileAddr& a = tiles[rng.below(tiles.size())];
            d.examples.push_back({table.at(a), map.reward(a), a, slide});
        }
    }
    return d;
}

struct LossPoint {
    std::size_t epoch = 0;
    std::string split;  // "train" or "validation"
    double mse = 0.0;

    friend bool operator==(const LossPoint&, const LossPoint&) = default;
};

inline void write_loss_csv(std::span<const LossPoint> curve, std::ostream& out) {
    out << "epoch,split,mse\n";
    for (const LossPoint& p : curve)
        out << p.epoch << ',' << p.split << ',' << format_double(p.mse) << '\n';
}

/// Anything that maps a feature vector to a clamped score in [0, 1].
template <typename M>
concept ValueModel = requires(const M m, std::span<const double> x) {
    { m.raw(x) } -> std::same_as<double>;
    { m.predict(x) } -> std::same_as<double>;
};

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

/// Mean squared error of the raw (unclamped) output.
template <ValueModel M>
double mse(const M& m, std::span<const Example> data) {
    if (data.empty()) return 0.0;
    double s = 0.0;
    for (const Example& e : data) {
        const double d = m.raw(e.features) - e.label;
        s += d * d;
    }
    return s / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Linear baseline
// ---------------------------------------------------------------------------

struct LinearModel {
    LinearNet<1> net;
    double l2 = 0.0;

    LinearModel() = default;
    explicit LinearModel(std::size_t inputs, double l2_lambda = 0.0) : net(inputs), l2(l2_lambda) {}

    double raw(std::span<const double> x) const { return net.forward(x)[0]; }
    double predict(std::span<const double> x) const { return clamp_unit(raw(x)); }
};

/// (1/n) sum (y - yhat)^2 + l2 * |w|^2 (bias not penalized); gradient into `grad` if non-empty.
inline double linear_objective(const LinearModel& m, std::span<const Example> batch,
                               std::span<double> grad = {}) {
    const bool want_grad = !grad.empty();
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (const Example& e : batch) {
        const double err = m.raw(e.features) - e.label;
        loss += err * err;
        if (want_grad) m.net.accumulate_gradient(e.features, {2.0 * err / n}, grad);
    }
    loss /= n;
    const auto w = m.net.weights(0);
    double norm = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        norm += w[i] * w[i];
        if (want_grad) grad[i] += 2.0 * m.l2 * w[i];
    }
    return loss + m.l2 * norm;
}

/// One gradient step on `batch`; returns the objective before the step.
inline double linear_sgd_step(LinearModel& m, std::span<const Example> batch, double lr) {
    if (batch.empty()) throw InvalidArgument("linear_sgd_step: empty batch");
    std::vector<double> grad(m.net.params().size());
    const double before = linear_objective(m, batch, grad);
    if (!std::isfinite(before)) throw DivergenceError("linear regressor: non-finite loss");
    auto p = m.net.params();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
    return before;
}

struct LinearTrainConfig {
    double learning_rate = 1e-4;
    double l2 = 1e-4;
    std::size_t batch_size = 1;
    std::size_t max_epochs = 100;
    double tolerance = 1e-3;  // stop once an epoch improves the objective by less
};

struct LinearFit {
    LinearModel model;
    std::vector<LossPoint> curve;
    std::size_t epochs = 0;
};

/// SGD from zero weights with a seeded shuffle every epoch.
inline LinearFit train_linear(const Dataset& data, const LinearTrainConfig& cfg, std::uint64_t seed,
                              const Dataset* validation = nullptr) {
    if (data.empty()) throw InvalidArgument("train_linear: empty dataset");
    if (!(cfg.learning_rate > 0.0) || cfg.l2 < 0.0 || cfg.batch_size == 0 || cfg.max_epochs == 0)
        throw InvalidArgument("train_linear: invalid configuration");
    Rng rng(seed);
    LinearFit fit{LinearModel(data.examples.front().features.size(), cfg.l2), {}, 0};
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<Example> batch;
    double previous = linear_objective(fit.model, data.examples);
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
                batch.push_back(data.examples[order[i]]);
            linear_sgd_step(fit.model, batch, cfg.learning_rate);
        }
        const double objective = linear_objective(fit.model, data.examples);
        if (!std::isfinite(objective)) throw DivergenceError("linear regressor diverged");
        fit.curve.push_back({epoch, "train", mse(fit.model, data.examples)});
        if (validation && !validation->empty())
            fit.curve.push_back({epoch, "validation", mse(fit.model, validation->examples)});
        fit.epochs = epoch;
        if (previous - objective < cfg.tolerance) break;
        previous = objective;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// MLP scorer
// ---------------------------------------------------------------------------

struct MlpModel {
    MlpNet<1> net;

    MlpModel() = default;
    explicit MlpModel(MlpNet<1> n) : net(std::move(n)) {}

    double raw(std::span<const double> x) const { return net.forward(x)[0]; }
    double predict(std::span<const double> x) const { return clamp_unit(raw(x)); }
};

namespace detail {

// Squared loss over examples get(0..n-1); grad is overwritten.
template <typename Get>
double mlp_batch_loss(const MlpModel& m, std::size_t n, Get&& get, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double scale = 2.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Example& e = get(i);
        m.net.backprop(
            e.features,
            [&](const MlpNet<1>::Output& y) {
                const double err = y[0] - e.label;
                loss += err * err;
                return MlpNet<1>::Output{scale * err};
            },
            grad);
    }
    return loss / static_cast<double>(n);
}

}  // namespace detail

/// Mean squared error on the raw output and its gradient.
inline double mlp_loss_and_gradient(const MlpModel& m, std::span<const Example> batch,
                                    std::span<double> grad) {
    return detail::mlp_batch_loss(m, batch.size(), [&](std::size_t i) -> const Example& { return batch[i]; }, grad);
}

struct MlpTrainConfig {
    std::size_t hidden = MlpNet<1>::kDefaultHidden;
    AdamConfig adam;  // defaults: lr 1e-3, betas 0.9 / 0.999, denominator guard 1e-8
    std::size_t batch_size = 64;
    std::size_t epochs = 9;
};

struct MlpFit {
    MlpModel model;
    std::vector<LossPoint> curve;
};

/// Mini-batch Adam on squared loss; records train and validation MSE per epoch.
inline MlpFit train_mlp(const Dataset& train, const Dataset& validation, const MlpTrainConfig& cfg,
                        std::uint64_t seed) {
    if (train.empty()) throw InvalidArgument("train_mlp: empty training set");
    if (cfg.batch_size == 0 || cfg.epochs == 0 || cfg.hidden == 0)
        throw InvalidArgument("train_mlp: invalid configuration");
    Rng rng(seed);
    MlpFit fit{MlpModel(MlpNet<1>(train.examples.front().features.size(), cfg.hidden, rng)), {}};
    Adam opt(fit.model.net.params().size(), cfg.adam);
    std::vector<double> grad(fit.model.net.params().size());
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        // Train loss is the example-weighted mean of the pre-step batch losses.
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(order.size() - start, cfg.batch_size);
            const double loss = detail::mlp_batch_loss(
                fit.model, n, [&](std::size_t i) -> const Example& { return train.examples[order[start + i]]; },
                grad);
            if (!std::isfinite(loss))
                throw DivergenceError("mlp regressor: non-finite loss in epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(n);
            opt.step(fit.model.net.params(), grad);
        }
        fit.curve.push_back({epoch, "train", epoch_loss / static_cast<double>(order.size())});
        if (!validation.empty())
            fit.curve.push_back({epoch, "validation", mse(fit.model, validation.examples)});
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Reporting helpers
// ---------------------------------------------------------------------------

/// Fraction of examples where prediction and label fall on the same side of 0.5.
template <ValueModel M>
double threshold_agreement(const M& m, std::span<const Example> data) {
    if (data.empty()) return 0.0;
    std::size_t agree = 0;
    for (const Example& e : data) agree += (m.predict(e.features) >= 0.5) == (e.label >= 0.5);
    return static_cast<double>(agree) / static_cast<double>(data.size());
}

/// Histogram of |prediction - label| in `bins` equal bins over [0, 1], as CSV.
template <ValueModel M>
void write_error_histogram_csv(const M& m, std::span<const Example> data, std::size_t bins,
                               std::ostream& out) {
    std::vector<std::size_t> counts(bins, 0);
    for (const Example& e : data) {
        const double err = std::abs(m.predict(e.features) - e.label);
        counts[std::min(bins - 1, static_cast<std::size_t>(err * static_cast<double>(bins)))]++;
    }
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < bins; ++b) {
        out << format_double(static_cast<double>(b) / static_cast<double>(bins)) << ','
            << format_double(static_cast<double>(b + 1) / static_cast<double>(bins)) << ','
            << counts[b] << '\n';
    }
}

/// Number of leaves selected for a top fraction p of n: ceil(p * n), at least 1.
inline std::size_t top_fraction_count(double p, std::size_t n) {
    if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("top fraction must lie in (0, 1]");
    // The small slack keeps products like 0.1 * 30 from rounding up past an integer.
    const double k = std::ceil(p * static_cast<double>(n) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

/// Scores every in-image leaf and keeps the best ceil(p * N), ties by (row, col).
template <ValueModel M>
SelectionReport full_scan_select(const RewardMap& map, const FeatureTable& table, const M& model,
                                 double p, std::size_t threads = 1) {
    const std::vector<TileAddr> leaves = map.leaves();
    const std::size_t k = top_fraction_count(p, leaves.size());
    std::vector<double> score(leaves.size());
    parallel_for(leaves.size(), threads,
                 [&](std::size_t i) { score[i] = model.predict(table.at(leaves[i])); });
    std::vector<std::size_t> idx(leaves.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return ranks_before(score[a], leaves[a], score[b], leaves[b]);
                      });
    std::vector<SelectedTile> chosen;
    for (std::size_t i = 0; i < k; ++i) chosen.push_back({leaves[idx[i]], score[idx[i]], 0.0});
    return evaluate_selection("scan", std::move(chosen), map);
}

}  // namespace zoomroi
