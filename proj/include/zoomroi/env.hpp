#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "pyramid.hpp"
#include "scoring.hpp"

namespace zoomroi {

/// A slide with its ground truth: what one environment (and one search) runs over.
struct Slide {
    std::string id;
    TilePyramid pyramid;
    RewardMap rewards;
};

inline Slide make_slide(std::string id, SlideRaster raster, const MaskRaster& mask,
                        std::uint32_t tile_size = kDefaultTileSize, std::size_t threads = 1) {
    TilePyramid pyr(std::move(raster), tile_size);
    RewardMap map = compute_reward_map(pyr.geometry(), mask, threads);
    return Slide{std::move(id), std::move(pyr), std::move(map)};
}

inline Slide load_slide_with_mask(const std::filesystem::path& slide_png,
                                  const std::filesystem::path& mask_png,
                                  std::uint32_t tile_size = kDefaultTileSize,
                                  std::uint8_t threshold = kDefaultMaskThreshold,
                                  std::size_t threads = 1) {
    TilePyramid pyr = load_slide(slide_png, tile_size);
    const MaskRaster mask = load_mask(mask_png, threshold, pyr.width(), pyr.height());
    RewardMap map = compute_reward_map(pyr.geometry(), mask, threads);
    return Slide{slide_png.stem().string(), std::move(pyr), std::move(map)};
}

/// Small set of quadrants, one bit per action.
class ActionSet {
public:
    constexpr ActionSet() = default;
    constexpr explicit ActionSet(std::uint8_t bits) : bits_(bits & 0xF) {}

    static constexpr ActionSet all() { return ActionSet(0xF); }

    constexpr bool contains(Quadrant q) const { return (bits_ >> index(q)) & 1u; }
    constexpr void insert(Quadrant q) { bits_ |= static_cast<std::uint8_t>(1u << index(q)); }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::size_t size() const { return std::popcount(bits_); }
    constexpr std::uint8_t bits() const { return bits_; }

    /// Members in tie-break order NW, NE, SW, SE.
    std::vector<Quadrant> list() const {
        std::vector<Quadrant> out;
        for (Quadrant q : kQuadrants)
            if (contains(q)) out.push_back(q);
        return out;
    }

    friend constexpr bool operator==(ActionSet, ActionSet) = default;

private:
    std::uint8_t bits_ = 0;
};

/// Children of `a` that contain at least one image pixel. Empty at leaves.
inline ActionSet valid_actions_at(const RewardMap& map, const TileAddr& a) {
    ActionSet s;
    if (a.level >= map.max_depth()) return s;
    for (Quadrant q : kQuadrants)
        if (map.in_image(child_unchecked(a, q))) s.insert(q);
    return s;
}

struct Transition {
    std::size_t slide = 0;  // index of the environment the step came from
    TileAddr state;
    Quadrant action = Quadrant::NW;
    TileAddr next_state;
    double reward = 0.0;
    bool terminal = false;
    ActionSet next_valid;  // valid actions at next_state; empty when terminal
};

/// Deterministic zoom MDP. States are tile addresses, actions the four
/// quadrants, and the reward of a step is the ground-truth fraction of the tile
/// it lands on. An episode is one root-to-leaf descent.
///
/// Holds a non-owning reference to the reward map, which must outlive it.
class ZoomEnv {
public:
    explicit ZoomEnv(const RewardMap& rewards, std::size_t slide_index = 0)
        : rewards_(&rewards), slide_index_(slide_index) {
        reset();
    }

    TileAddr reset() {
        current_ = {0, 0, 0};
        done_ = rewards_->max_depth() == 0;
        return current_;
    }

    const TileAddr& current() const { return current_; }
    bool done() const { return done_; }
    std::uint32_t max_depth() const { return rewards_->max_depth(); }
    const RewardMap& rewards() const { return *rewards_; }
    std::size_t slide_index() const { return slide_index_; }

    ActionSet valid_actions() const {
        if (done_) throw InvalidArgument("valid_actions called on a terminal state");
        return valid_actions_at(*rewards_, current_);
    }

    Transition step(Quadrant action) {
        if (done_) throw InvalidArgument("step called on a terminal state");
        if (!valid_actions().contains(action)) {
            throw InvalidArgument("action " + std::string(to_string(action)) + " from " +
                                  to_string(current_) + " leads into a fully padded quadrant");
        }
        Transition t;
        t.slide = slide_index_;
        t.state = current_;
        t.action = action;
        t.next_state = child_unchecked(current_, action);
        t.reward = rewards_->reward(t.next_state);
        t.terminal = t.next_state.level == rewards_->max_depth();
        t.next_valid = valid_actions_at(*rewards_, t.next_state);
        current_ = t.next_state;
        done_ = t.terminal;
        return t;
    }

private:
    const RewardMap* rewards_;
    std::size_t slide_index_;
    TileAddr current_;
    bool done_ = false;
};

/// Undiscounted sum of rewards along one root-to-leaf episode.
inline double episode_return(std::span<const Transition> path) {
    double total = 0.0;
    TileAddr expected{0, 0, 0};
    for (std::size_t i = 0; i < path.size(); ++i) {
        const Transition& t = path[i];
        if (t.state != expected) {
            throw InvalidArgument("episode is not contiguous at step " + std::to_string(i));
        }
        if (t.next_state != child_unchecked(t.state, t.action)) {
            throw InvalidArgument("step " + std::to_string(i) + " does not follow its action");
        }
        if (t.terminal != (i + 1 == path.size())) {
            throw InvalidArgument("episode must end exactly at its terminal step");
        }
        total += t.reward;
        expected = t.next_state;
    }
    return total;
}

/// Episode trace as CSV `step,level,col,row,action,reward` where the address
/// is the tile reached by that step.
inline void write_trace_csv(std::span<const Transition> path, std::ostream& out) {
    out << "step,level,col,row,action,reward\n";
    for (std::size_t i = 0; i < path.size(); ++i) {
        const Transition& t = path[i];
        out << i << ',' << t.next_state.level << ',' << t.next_state.col << ','
            << t.next_state.row << ',' << to_string(t.action) << ',' << format_double(t.reward)
            << '\n';
    }
}

}  // namespace zoomroi
