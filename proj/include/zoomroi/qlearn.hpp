#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "env.hpp"
#include "error.hpp"
#include "feature_table.hpp"
#include "format.hpp"
#include "nn.hpp"
#include "random.hpp"

namespace zoomroi {

using ActionValues = std::array<double, 4>;

/// What an approximator sees of a state. Tabular variants key on (slide, addr);
/// parametric ones read the features.
struct StateView {
    std::size_t slide = 0;
    TileAddr addr;
    std::span<const double> features;
};

/// A regression sample for the TD loss: Q(state, action) should move toward target.
struct QSample {
    StateView state;
    Quadrant action = Quadrant::NW;
    double target = 0.0;
};

template <typename Q>
concept QFunction = requires(Q q, const Q cq, const StateView& s, std::span<const QSample> batch,
                             double lr) {
    { cq.values(s) } -> std::same_as<ActionValues>;
    { q.update(batch, lr) } -> std::same_as<double>;
};

// ---------------------------------------------------------------------------
// Exploration
// ---------------------------------------------------------------------------

struct EpsilonSchedule {
    double start = 0.9;
    double end = 0.02;
    std::uint64_t total_iters = 100000;

    void validate() const {
        if (!(0.0 <= end && end <= start && start <= 1.0))
            throw InvalidArgument("epsilon schedule needs 0 <= end <= start <= 1");
    }
};

/// Linear ramp from start to end over total_iters; clamped to end afterwards.
inline double epsilon(std::uint64_t iter, const EpsilonSchedule& s) {
    if (iter >= s.total_iters) return s.end;
    return s.start + (s.end - s.start) * static_cast<double>(iter) /
                         static_cast<double>(s.total_iters);
}

/// Argmax over `valid`, ties to the earliest action in NW, NE, SW, SE order.
inline Quadrant greedy_action(const ActionValues& v, ActionSet valid) {
    if (valid.empty()) throw InvalidArgument("greedy_action: no valid actions");
    std::optional<Quadrant> best;
    for (Quadrant q : kQuadrants) {
        if (!valid.contains(q)) continue;
        if (!best || v[index(q)] > v[index(*best)]) best = q;
    }
    return *best;
}

/// Epsilon-greedy: one uniform draw decides explore vs exploit, a second picks
/// the random action among the valid ones.
template <QFunction Q>
Quadrant select_action(const Q& q, const StateView& s, ActionSet valid, double eps, Rng& rng) {
    if (valid.empty()) throw InvalidArgument("select_action: no valid actions");
    if (rng.uniform() < eps) {
        const auto acts = valid.list();
        return acts[rng.below(acts.size())];
    }
    return greedy_action(q.values(s), valid);
}

/// reward for terminal steps, otherwise reward + gamma * max over the valid next actions.
template <QFunction Q>
double td_target(const Transition& t, const Q& q, double gamma, const StateView& next) {
    if (t.terminal || t.next_valid.empty()) return t.reward;
    const ActionValues v = q.values(next);
    double best = -std::numeric_limits<double>::infinity();
    for (Quadrant a : kQuadrants)
        if (t.next_valid.contains(a)) best = std::max(best, v[index(a)]);
    return t.reward + gamma * best;
}

// ---------------------------------------------------------------------------
// Approximators
// ---------------------------------------------------------------------------

namespace detail {

inline void check_loss(double loss, const char* who, std::span<const QSample> batch) {
    if (std::isfinite(loss)) return;
    std::string msg = std::string(who) + ": non-finite TD loss over a batch of " +
                      std::to_string(batch.size());
    if (!batch.empty()) {
        msg += " (first sample " + to_string(batch.front().state.addr) + " target " +
               format_double(batch.front().target) + ")";
    }
    throw DivergenceError(msg);
}

}  // namespace detail

/// One value per (slide, tile, action), zero-initialized.
class TabularQ {
public:
    struct Key {
        std::size_t slide = 0;
        TileAddr addr;
        friend auto operator<=>(const Key&, const Key&) = default;
    };

    ActionValues values(const StateView& s) const {
        const auto it = table_.find(Key{s.slide, s.addr});
        return it == table_.end() ? ActionValues{} : it->second;
    }

    ActionValues& at(std::size_t slide, const TileAddr& a) { return table_[Key{slide, a}]; }

    /// Q(s,a) += lr * (y - Q(s,a)) for each sample in order; returns the mean
    /// squared error measured before any change.
    double update(std::span<const QSample> batch, double lr) {
        if (batch.empty()) throw InvalidArgument("update: empty batch");
        double loss = 0.0;
        for (const QSample& b : batch) {
            const double err = b.target - values(b.state)[index(b.action)];
            loss += err * err;
        }
        loss /= static_cast<double>(batch.size());
        detail::check_loss(loss, "tabular update", batch);
        for (const QSample& b : batch) {
            double& q = table_[Key{b.state.slide, b.state.addr}][index(b.action)];
            q += lr * (b.target - q);
        }
        return loss;
    }

    const std::map<Key, ActionValues>& entries() const { return table_; }

    friend bool operator==(const TabularQ&, const TabularQ&) = default;

private:
    std::map<Key, ActionValues> table_;
};

/// Parametric Q over features: one network output per action.
template <DenseNet Net>
    requires(Net::outputs == 4)
class NetworkQ {
public:
    NetworkQ() = default;
    explicit NetworkQ(Net net) : net_(std::move(net)) {}

    const Net& net() const { return net_; }
    Net& net() { return net_; }

    ActionValues values(const StateView& s) const { return net_.forward(s.features); }

    /// Mean squared TD error with targets held fixed; gradient written to `grad`.
    double loss_and_gradient(std::span<const QSample> batch, std::span<double> grad) const {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double n = static_cast<double>(batch.size());
        double loss = 0.0;
        for (const QSample& b : batch) {
            const ActionValues q = net_.forward(b.state.features);
            const double err = b.target - q[index(b.action)];
            loss += err * err;
            ActionValues dy{};
            dy[index(b.action)] = -2.0 * err / n;
            net_.accumulate_gradient(b.state.features, dy, grad);
        }
        return loss / n;
    }

    /// One SGD step on the batch; returns the pre-step loss.
    double update(std::span<const QSample> batch, double lr) {
        if (batch.empty()) throw InvalidArgument("update: empty batch");
        std::vector<double> grad(net_.params().size());
        const double loss = loss_and_gradient(batch, grad);
        detail::check_loss(loss, "network update", batch);
        auto p = net_.params();
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
        return loss;
    }

private:
    Net net_;
};

using LinearQ = NetworkQ<LinearNet<4>>;
using MlpQ = NetworkQ<MlpNet<4>>;

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// FIFO buffer with uniform sampling with replacement.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
        if (capacity == 0) throw InvalidArgument("replay capacity must be positive");
    }

    void push(const Transition& t) {
        if (items_.size() == capacity_) items_.pop_front();
        items_.push_back(t);
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }

    std::vector<Transition> sample(std::size_t n) {
        if (items_.empty()) throw InvalidArgument("sample from an empty replay buffer");
        std::vector<Transition> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(items_[rng_.below(items_.size())]);
        return out;
    }

private:
    std::size_t capacity_;
    Rng rng_;
    std::deque<Transition> items_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 5e-4;
    std::size_t batch_size = 32;
    std::uint64_t iterations = 100000;
    double gamma = 1.0;
    std::size_t buffer_capacity = 10000;
    std::uint64_t seed = 0;
    double eps_start = 0.9;
    double eps_end = 0.02;

    EpsilonSchedule schedule() const { return {eps_start, eps_end, iterations}; }

    void validate() const {
        if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
        if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
        if (iterations == 0) throw InvalidArgument("iterations must be positive");
        if (buffer_capacity == 0) throw InvalidArgument("buffer_capacity must be positive");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
        schedule().validate();
    }
};

struct CurvePoint {
    std::size_t episode = 0;
    std::uint64_t iteration = 0;  // iterations completed when the episode ended
    double epsilon = 0.0;         // exploration rate at the episode's last step
    double episode_return = 0.0;
    std::size_t slide = 0;  // environment slide index; not part of the CSV

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

inline void write_curve_csv(std::span<const CurvePoint> curve, std::ostream& out) {
    out << "episode,iteration,epsilon,return\n";
    for (const CurvePoint& p : curve) {
        out << p.episode << ',' << p.iteration << ',' << format_double(p.epsilon) << ','
            << format_double(p.episode_return) << '\n';
    }
}

/// Looks up features for (slide, tile). An empty table list yields empty
/// feature spans, which is all the tabular variant needs.
class StateViews {
public:
    explicit StateViews(std::span<const FeatureTable> tables = {}) : tables_(tables) {}

    StateView operator()(std::size_t slide, const TileAddr& a) const {
        if (tables_.empty()) return {slide, a, {}};
        return {slide, a, tables_[slide].at(a)};
    }

private:
    std::span<const FeatureTable> tables_;
};

/// Epsilon-greedy Q-learning with uniform replay. Each iteration is one
/// environment step followed by one update on a sampled batch whose targets
/// are computed from the pre-update parameters. Episodes cycle over the
/// environments in a seeded shuffled order, reshuffled every pass.
template <QFunction Q>
std::vector<CurvePoint> train(Q& q, std::span<ZoomEnv> envs, const StateViews& views,
                              const TrainConfig& cfg) {
    cfg.validate();
    if (envs.empty()) throw InvalidArgument("train: need at least one environment");
    for (const ZoomEnv& e : envs)
        if (e.max_depth() == 0) throw InvalidArgument("train: environment without zoom levels");

    Rng rng(cfg.seed);
    ReplayBuffer buffer(cfg.buffer_capacity, rng.fork());
    const EpsilonSchedule schedule = cfg.schedule();

    std::vector<std::size_t> order(envs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t next_in_order = order.size();

    std::vector<CurvePoint> curve;
    ZoomEnv* env = nullptr;
    double ep_return = 0.0;
    std::vector<QSample> samples;
    for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
        if (env == nullptr) {
            if (next_in_order == order.size()) {
                rng.shuffle(order);
                next_in_order = 0;
            }
            env = &envs[order[next_in_order++]];
            env->reset();
            ep_return = 0.0;
        }
        const double eps = epsilon(it, schedule);
        const StateView s = views(env->slide_index(), env->current());
        const Quadrant a = select_action(q, s, env->valid_actions(), eps, rng);
        const Transition t = env->step(a);
        ep_return += t.reward;
        buffer.push(t);

        const std::vector<Transition> batch = buffer.sample(cfg.batch_size);
        samples.clear();
        for (const Transition& b : batch) {
            const double y = td_target(b, q, cfg.gamma, views(b.slide, b.next_state));
            samples.push_back({views(b.slide, b.state), b.action, y});
        }
        q.update(samples, cfg.learning_rate);

        if (t.terminal) {
            curve.push_back({curve.size(), it + 1, eps, ep_return, env->slide_index()});
            env = nullptr;
        }
    }
    return curve;
}

/// Greedy episode from the root.
template <QFunction Q>
std::vector<Transition> greedy_rollout(const Q& q, ZoomEnv& env, const StateViews& views) {
    std::vector<Transition> path;
    env.reset();
    while (!env.done()) {
        const StateView s = views(env.slide_index(), env.current());
        path.push_back(env.step(greedy_action(q.values(s), env.valid_actions())));
    }
    return path;
}

// ---------------------------------------------------------------------------
// Exact oracle
// ---------------------------------------------------------------------------

/// Exact Q* for every in-image state. Entries for invalid actions are zero
/// and excluded from every max.
class QTable {
public:
    QTable() = default;
    explicit QTable(std::uint32_t max_depth) : max_depth_(max_depth) {
        for (std::uint32_t l = 0; l <= max_depth; ++l) {
            offsets_.push_back(values_.size());
            values_.resize(values_.size() + grid_side(l) * grid_side(l));
        }
        valid_.resize(values_.size());
    }

    std::uint32_t max_depth() const { return max_depth_; }
    ActionValues& at(const TileAddr& a) { return values_[slot(a)]; }
    const ActionValues& at(const TileAddr& a) const { return values_[slot(a)]; }
    ActionSet& valid(const TileAddr& a) { return valid_[slot(a)]; }
    ActionSet valid(const TileAddr& a) const { return valid_[slot(a)]; }

    /// max over valid actions, 0 when there are none.
    double state_value(const TileAddr& a) const {
        const ActionSet v = valid(a);
        if (v.empty()) return 0.0;
        double best = -std::numeric_limits<double>::infinity();
        for (Quadrant q : kQuadrants)
            if (v.contains(q)) best = std::max(best, at(a)[index(q)]);
        return best;
    }

    /// Lets the table act as a read-only QFunction for greedy rollouts.
    ActionValues values(const StateView& s) const { return at(s.addr); }
    double update(std::span<const QSample>, double) {
        throw InvalidArgument("QTable is an exact oracle and cannot be trained");
    }

private:
    std::size_t slot(const TileAddr& a) const {
        if (a.level > max_depth_ || a.col >= grid_side(a.level) || a.row >= grid_side(a.level))
            throw InvalidArgument("tile " + to_string(a) + " is outside the Q table");
        return offsets_[a.level] + static_cast<std::size_t>(a.row) * grid_side(a.level) + a.col;
    }

    std::uint32_t max_depth_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<ActionValues> values_;
    std::vector<ActionSet> valid_;
};

/// Q*(s,a) = R(child) + gamma * max_{a' valid} Q*(child, a'), leaves upward.
inline QTable backward_induction(const RewardMap& map, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
    QTable table(map.max_depth());
    for (std::uint32_t l = map.max_depth(); l-- > 0;) {
        for (const TileAddr& s : map.tiles_at(l)) {
            const ActionSet valid = valid_actions_at(map, s);
            table.valid(s) = valid;
            for (Quadrant a : kQuadrants) {
                if (!valid.contains(a)) continue;
                const TileAddr c = child_unchecked(s, a);
                table.at(s)[index(a)] = map.reward(c) + gamma * table.state_value(c);
            }
        }
    }
    return table;
}

/// Largest |Q(s,a) - (R(s') + gamma max Q(s',.))| over every valid pair.
inline double max_bellman_residual(const QTable& table, const RewardMap& map, double gamma) {
    double worst = 0.0;
    for (std::uint32_t l = 0; l < map.max_depth(); ++l) {
        for (const TileAddr& s : map.tiles_at(l)) {
            for (Quadrant a : valid_actions_at(map, s).list()) {
                const TileAddr c = child_unchecked(s, a);
                double next = 0.0;
                const ActionSet cv = valid_actions_at(map, c);
                if (!cv.empty()) {
                    next = -std::numeric_limits<double>::infinity();
                    for (Quadrant b : cv.list()) next = std::max(next, table.at(c)[index(b)]);
                }
                const double r = table.at(s)[index(a)] - (map.reward(c) + gamma * next);
                worst = std::max(worst, std::abs(r));
            }
        }
    }
    return worst;
}

/// Largest |Q(s,a) - Q*(s,a)| over every valid non-leaf pair of one slide.
template <QFunction Q>
double max_q_error(const Q& q, const QTable& star, const RewardMap& map, std::size_t slide,
                   const StateViews& views) {
    double worst = 0.0;
    for (std::uint32_t l = 0; l < map.max_depth(); ++l) {
        for (const TileAddr& s : map.tiles_at(l)) {
            const ActionValues v = q.values(views(slide, s));
            for (Quadrant a : valid_actions_at(map, s).list())
                worst = std::max(worst, std::abs(v[index(a)] - star.at(s)[index(a)]));
        }
    }
    return worst;
}

}  // namespace zoomroi
