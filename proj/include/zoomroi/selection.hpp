#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "scoring.hpp"

namespace zoomroi {

struct SelectedTile {
    TileAddr addr;
    double score = 0.0;   // the method's own value for the tile
    double reward = 0.0;  // ground truth

    friend bool operator==(const SelectedTile&, const SelectedTile&) = default;
};

/// Buckets matching how selections are usually reported: no cancer, some, all.
struct RewardHistogram {
    std::size_t zero = 0;
    std::size_t partial = 0;
    std::size_t full = 0;

    std::size_t total() const { return zero + partial + full; }
    friend bool operator==(const RewardHistogram&, const RewardHistogram&) = default;
};

struct SelectionReport {
    std::string method;
    std::vector<SelectedTile> tiles;
    double mean_reward = 0.0;
    RewardHistogram histogram;
    double optimal_mean = 0.0;  // brute-force top-k mean for the same k
    double regret = 0.0;        // optimal_mean - mean_reward, never negative
};

/// Ranks by descending key with ties in (level, row, col) order.
inline bool ranks_before(double key_a, const TileAddr& a, double key_b, const TileAddr& b) {
    if (key_a != key_b) return key_a > key_b;
    return a < b;
}

/// Exact top-k in-image leaves by ground-truth reward.
inline std::vector<TileAddr> brute_force_topk(const RewardMap& map, std::size_t k) {
    std::vector<TileAddr> leaves = map.leaves();
    if (k > leaves.size()) {
        throw InvalidArgument("brute_force_topk: k = " + std::to_string(k) + " exceeds the " +
                              std::to_string(leaves.size()) + " in-image leaves");
    }
    std::vector<double> reward(leaves.size());
    std::vector<std::size_t> idx(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        reward[i] = map.reward(leaves[i]);
        idx[i] = i;
    }
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t x, std::size_t y) {
                          return ranks_before(reward[x], leaves[x], reward[y], leaves[y]);
                      });
    std::vector<TileAddr> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(leaves[idx[i]]);
    return out;
}

namespace detail {

// Summing in descending order makes the mean of equal multisets bit-identical
// and keeps optimal_mean >= mean_reward under rounding.
inline double canonical_mean(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end(), std::greater<>());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace detail

/// Fills in ground-truth rewards, mean, histogram and regret for chosen leaves.
inline SelectionReport evaluate_selection(std::string method, std::vector<SelectedTile> chosen,
                                          const RewardMap& map) {
    SelectionReport rep;
    rep.method = std::move(method);
    std::vector<double> rewards;
    for (SelectedTile& t : chosen) {
        if (!map.contains(t.addr) || t.addr.level != map.max_depth() || !map.in_image(t.addr))
            throw InvalidArgument("selection contains " + to_string(t.addr) +
                                  ", which is not an in-image leaf");
        t.reward = map.reward(t.addr);
        rewards.push_back(t.reward);
        if (t.reward == 0.0)
            ++rep.histogram.zero;
        else if (t.reward == 1.0)
            ++rep.histogram.full;
        else
            ++rep.histogram.partial;
    }
    rep.tiles = std::move(chosen);
    rep.mean_reward = detail::canonical_mean(rewards);
    std::vector<double> best;
    for (const TileAddr& a : brute_force_topk(map, rep.tiles.size())) best.push_back(map.reward(a));
    rep.optimal_mean = detail::canonical_mean(best);
    rep.regret = rep.optimal_mean - rep.mean_reward;
    return rep;
}

/// k distinct in-image leaves drawn uniformly at random.
inline SelectionReport random_select(const RewardMap& map, std::size_t k, Rng& rng) {
    std::vector<TileAddr> leaves = map.leaves();
    if (k == 0 || k > leaves.size())
        throw InvalidArgument("random_select: k must lie in [1, " + std::to_string(leaves.size()) + "]");
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(leaves.size() - i));
        std::swap(leaves[i], leaves[j]);
    }
    std::vector<SelectedTile> chosen;
    for (std::size_t i = 0; i < k; ++i) chosen.push_back({leaves[i], 0.0, 0.0});
    return evaluate_selection("random", std::move(chosen), map);
}

}  // namespace zoomroi
