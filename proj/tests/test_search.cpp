#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"

using namespace zoomroi;
using namespace zoomroi::testing;

namespace {

// Best leaf hidden in a low-mean quadrant: the NW quadrant holds one fully
// cancerous leaf and nothing else, the NE quadrant is uniformly 40% cancer.
Slide decoy_slide() {
    return slide_where(512, 512, [](std::size_t x, std::size_t y) {
        if (x < 64 && y < 64) return true;
        if (x >= 256 && y < 256) return (x + y) % 5 < 2;
        return false;
    });
}

Slide noisy_slide(std::uint64_t seed, std::size_t side = 256, std::uint32_t ts = 16) {
    Rng rng(seed);
    std::vector<double> density(16 * 16);
    for (double& d : density) d = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
    Rng pix(seed + 1);
    std::vector<std::uint8_t> bits(side * side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            bits[y * side + x] = pix.uniform() < density[(y * 16 / side) * 16 + x * 16 / side];
    return slide_where(side, side, [&](std::size_t x, std::size_t y) { return bits[y * side + x] != 0; }, ts);
}

double max_leaf_reward(const RewardMap& m) {
    double best = 0.0;
    for (const TileAddr& a : m.leaves()) best = std::max(best, m.reward(a));
    return best;
}

double path_sum_to(const RewardMap& m, TileAddr leaf) {
    double s = 0.0;
    while (leaf.level > 0) {
        s += m.reward(leaf);
        leaf = parent(leaf);
    }
    return s;
}

}  // namespace

TEST(Greedy, QStarMaximizesReturn) {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const Slide s = noisy_slide(seed);
        const QTable star = backward_induction(s.rewards, 1.0);
        const GreedyResult g = greedy_descend(s.pyramid.geometry(), qstar_binding(star));
        EXPECT_NEAR(path_sum_to(s.rewards, g.leaf), star.state_value({0, 0, 0}), 1e-12);
    }
}

TEST(Greedy, QStarFindsSingleHotspot) {
    const Slide s = slide_where(512, 512, [](auto x, auto y) { return x >= 320 && x < 384 && y >= 64 && y < 128; });
    const QTable star = backward_induction(s.rewards, 1.0);
    const GreedyResult g = greedy_descend(s.pyramid.geometry(), qstar_binding(star));
    EXPECT_EQ(s.rewards.reward(g.leaf), max_leaf_reward(s.rewards));
    EXPECT_EQ(g.leaf, (TileAddr{3, 5, 1}));
    EXPECT_EQ(g.trajectory.size(), 3u);
}

TEST(Greedy, MyopicRewardMissesHiddenLeaf) {
    const Slide s = decoy_slide();
    const GreedyResult g = greedy_descend(s.pyramid.geometry(), oracle_reward_binding(s.rewards));
    const TileAddr best = brute_force_topk(s.rewards, 1).front();
    EXPECT_EQ(best, (TileAddr{3, 0, 0}));
    EXPECT_EQ(s.rewards.reward(best), 1.0);
    EXPECT_LT(s.rewards.reward(g.leaf), 0.5);
    EXPECT_EQ(g.trajectory.front().path.front(), Quadrant::NE);
}

TEST(Greedy, ConstantBindingFollowsTieBreak) {
    const Slide s = noisy_slide(9);
    const GreedyResult g = greedy_descend(s.pyramid.geometry(), constant_binding(0.3));
    EXPECT_EQ(g.leaf, (TileAddr{s.rewards.max_depth(), 0, 0}));
    for (const BeamEntry& e : g.trajectory)
        for (Quadrant q : e.path) EXPECT_EQ(q, Quadrant::NW);
}

TEST(Greedy, SkipsPaddedQuadrants) {
    const Slide s = slide_where(64, 200, [](auto, auto y) { return y >= 128; }, 16);
    const GreedyResult g = greedy_descend(s.pyramid.geometry(), oracle_reward_binding(s.rewards));
    EXPECT_TRUE(s.rewards.in_image(g.leaf));
    EXPECT_EQ(s.rewards.reward(g.leaf), 1.0);
}

TEST(Beam, ExhaustiveWidthEqualsBruteForce) {
    for (std::uint64_t seed : {11u, 12u}) {
        const Slide s = noisy_slide(seed);
        const std::size_t leaves = s.rewards.leaves().size();
        for (std::size_t k : {1u, 4u, 16u, 100u}) {
            const auto beam = beam_search_leaves(s.pyramid.geometry(), oracle_reward_binding(s.rewards), k, leaves);
            const auto brute = brute_force_topk(s.rewards, k);
            ASSERT_EQ(beam.size(), brute.size());
            for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(beam[i].addr, brute[i]);
        }
    }
}

TEST(Beam, WidthOneReducesToGreedy) {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        const Slide s = noisy_slide(seed);
        for (const ScorerBinding& b : {oracle_reward_binding(s.rewards), constant_binding(1.0)}) {
            const auto beam = beam_search_leaves(s.pyramid.geometry(), b, 1, 1);
            EXPECT_EQ(beam.front().addr, greedy_descend(s.pyramid.geometry(), b).leaf);
        }
        const QTable star = backward_induction(s.rewards, 1.0);
        EXPECT_EQ(beam_search_leaves(s.pyramid.geometry(), qstar_binding(star), 1, 1).front().addr,
                  greedy_descend(s.pyramid.geometry(), qstar_binding(star)).leaf);
    }
}

TEST(Beam, NorthwestSlideFindsAllCancerLeaves) {
    const Slide s = slide_where(128, 128, [](auto x, auto y) { return x < 64 && y < 64; }, 32);
    const SelectionReport r = beam_search(s, oracle_reward_binding(s.rewards), 4, 4);
    ASSERT_EQ(r.tiles.size(), 4u);
    for (const SelectedTile& t : r.tiles) EXPECT_EQ(t.reward, 1.0);
    EXPECT_EQ(r.mean_reward, 1.0);
    EXPECT_EQ(r.histogram.full, 4u);
    EXPECT_EQ(r.method, "beam");
}

TEST(Beam, RejectsWidthBelowK) {
    const Slide s = nw_cancer_slide_128();
    EXPECT_THROW(beam_search(s, constant_binding(0), 4, 2), InvalidArgument);
    EXPECT_THROW(beam_search(s, constant_binding(0), 0, 2), InvalidArgument);
}

TEST(Beam, DistinctLeavesAndThreadIndependence) {
    const Slide s = noisy_slide(31);
    const auto one = beam_search_leaves(s.pyramid.geometry(), oracle_reward_binding(s.rewards), 8, 12, 1);
    const auto many = beam_search_leaves(s.pyramid.geometry(), oracle_reward_binding(s.rewards), 8, 12, 4);
    ASSERT_EQ(one.size(), many.size());
    std::set<TileAddr> seen;
    for (std::size_t i = 0; i < one.size(); ++i) {
        EXPECT_EQ(one[i].addr, many[i].addr);
        EXPECT_EQ(one[i].value, many[i].value);
        EXPECT_TRUE(seen.insert(one[i].addr).second);
    }
}

TEST(BruteForce, SingleBlackPixel) {
    const Slide s = slide_where(256, 256, [](auto x, auto y) { return x == 200 && y == 37; }, 16);
    EXPECT_EQ(brute_force_topk(s.rewards, 1).front(), (TileAddr{4, 12, 2}));
}

TEST(BruteForce, AllCancerTakesTieOrder) {
    const Slide s = slide_where(256, 256, [](auto, auto) { return true; }, 16);
    const auto top = brute_force_topk(s.rewards, 20);
    const auto leaves = s.rewards.leaves();
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_EQ(top[i], leaves[i]);
        EXPECT_EQ(s.rewards.reward(top[i]), 1.0);
    }
    EXPECT_THROW(brute_force_topk(s.rewards, leaves.size() + 1), InvalidArgument);
}

TEST(BruteForce, MatchesFullSort) {
    const Slide s = noisy_slide(41);
    auto leaves = s.rewards.leaves();
    ASSERT_GE(leaves.size(), 100u);
    std::stable_sort(leaves.begin(), leaves.end(), [&](const TileAddr& a, const TileAddr& b) {
        return s.rewards.reward(a) > s.rewards.reward(b);
    });
    const auto top = brute_force_topk(s.rewards, 100);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(top[i], leaves[i]);
}

TEST(Evaluate, OptimalSelectionHasZeroRegret) {
    const Slide s = noisy_slide(51);
    std::vector<SelectedTile> chosen;
    for (const TileAddr& a : brute_force_topk(s.rewards, 10)) chosen.push_back({a, 0.0, 0.0});
    std::reverse(chosen.begin(), chosen.end());
    const SelectionReport r = evaluate_selection("oracle", chosen, s.rewards);
    EXPECT_EQ(r.regret, 0.0);
    EXPECT_EQ(r.mean_reward, r.optimal_mean);
    EXPECT_EQ(r.histogram.total(), 10u);
}

TEST(Evaluate, ZeroRewardSelection) {
    const Slide s = nw_cancer_slide_128();
    const SelectionReport r =
        evaluate_selection("x", {{{1, 1, 0}, 0, 0}, {{1, 1, 1}, 0, 0}, {{1, 0, 1}, 0, 0}}, s.rewards);
    EXPECT_EQ(r.mean_reward, 0.0);
    EXPECT_EQ(r.histogram.zero, 3u);
    EXPECT_EQ(r.optimal_mean, 1.0 / 3.0);
    EXPECT_GT(r.regret, 0.0);
}

TEST(Evaluate, RejectsNonLeaves) {
    const Slide s = noisy_slide(52);
    EXPECT_THROW(evaluate_selection("x", {{{0, 0, 0}, 0, 0}}, s.rewards), InvalidArgument);
    const Slide padded = slide_where(100, 64, [](auto, auto) { return false; }, 16);
    EXPECT_THROW(evaluate_selection("x", {{{3, 0, 7}, 0, 0}}, padded.rewards), InvalidArgument);
}

TEST(Evaluate, RandomSelectionMeanWithinThreeSigma) {
    // Staggered stripes: a quarter of all pixels, leaves at 0 or 0.5.
    const Slide s = slide_where(256, 256, [](auto x, auto y) { return (x / 8 + y / 32) % 4 == 0; }, 16);
    const auto leaves = s.rewards.leaves();
    double mu = 0.0, var = 0.0;
    for (const TileAddr& a : leaves) mu += s.rewards.reward(a);
    mu /= static_cast<double>(leaves.size());
    for (const TileAddr& a : leaves) var += std::pow(s.rewards.reward(a) - mu, 2);
    var /= static_cast<double>(leaves.size());
    EXPECT_NEAR(mu, 0.25, 1e-12);
    Rng rng(3);
    const std::size_t k = 16, draws = 200;
    double total = 0.0;
    for (std::size_t i = 0; i < draws; ++i) total += random_select(s.rewards, k, rng).mean_reward;
    const double n = static_cast<double>(leaves.size());
    const double sigma = std::sqrt(var / k * (n - k) / (n - 1) / draws);
    EXPECT_LT(std::abs(total / draws - mu), 3 * sigma + 1e-12);
}

TEST(Evaluate, RandomSelectionIsDistinct) {
    const Slide s = noisy_slide(53);
    Rng rng(1);
    const SelectionReport r = random_select(s.rewards, 256, rng);
    std::set<TileAddr> seen;
    for (const SelectedTile& t : r.tiles) EXPECT_TRUE(seen.insert(t.addr).second);
    EXPECT_THROW(random_select(s.rewards, 257, rng), InvalidArgument);
}

TEST(Overlay, DimensionsAndOutline) {
    const Slide s = slide_where(1000, 600, [](auto x, auto) { return x < 100; }, 64);
    const RgbImage img = render_overlay(s.pyramid, nullptr, {{{s.pyramid.max_depth(), 0, 0}, 0, 0}});
    EXPECT_EQ(img.width, 500u);
    EXPECT_EQ(img.height, 300u);
    EXPECT_EQ(img.at(0, 0)[2], 255);
    EXPECT_EQ(img.at(31, 10)[2], 255);
}
