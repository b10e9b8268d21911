#pragma once

#include <algorithm>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "env.hpp"
#include "feature_table.hpp"
#include "parallel.hpp"
#include "png_io.hpp"
#include "pyramid.hpp"
#include "qlearn.hpp"
#include "regressor.hpp"
#include "scoring.hpp"
#include "selection.hpp"

namespace zoomroi {

/// How search values a candidate child tile. The callable receives the parent,
/// the zoom action and the resulting child, so Q-functions (which score the
/// action) and value models (which score the child) fit the same shape.
class ScorerBinding {
public:
    using ChildScorer =
        std::function<double(const TileAddr& parent, Quadrant action, const TileAddr& child)>;

    ScorerBinding(std::string name, ChildScorer scorer)
        : name_(std::move(name)), scorer_(std::move(scorer)) {}

    double score(const TileAddr& parent, Quadrant action, const TileAddr& child) const {
        return scorer_(parent, action, child);
    }

    const std::string& name() const { return name_; }

private:
    std::string name_;
    ChildScorer scorer_;
};

/// Scores a child by its ground-truth reward (the myopic supervised target).
inline ScorerBinding oracle_reward_binding(const RewardMap& map) {
    return {"oracle-reward",
            [&map](const TileAddr&, Quadrant, const TileAddr& c) { return map.reward(c); }};
}

/// Scores an action by the exact optimal Q*(parent, action).
inline ScorerBinding qstar_binding(const QTable& table) {
    return {"oracle-qstar", [&table](const TileAddr& p, Quadrant a, const TileAddr&) {
                return table.at(p)[index(a)];
            }};
}

template <QFunction Q>
ScorerBinding q_function_binding(const Q& q, const StateViews& views, std::size_t slide = 0) {
    return {"q-function", [&q, views, slide](const TileAddr& p, Quadrant a, const TileAddr&) {
                return q.values(views(slide, p))[index(a)];
            }};
}

template <ValueModel M>
ScorerBinding value_model_binding(const M& model, const FeatureTable& table) {
    return {"value-model", [&model, &table](const TileAddr&, Quadrant, const TileAddr& c) {
                return model.predict(table.at(c));
            }};
}

inline ScorerBinding constant_binding(double value) {
    return {"constant", [value](const TileAddr&, Quadrant, const TileAddr&) { return value; }};
}

struct BeamEntry {
    TileAddr addr;
    double value = 0.0;
    std::vector<Quadrant> path;  // actions from the root
};

struct GreedyResult {
    TileAddr leaf;
    std::vector<BeamEntry> trajectory;  // one entry per step, in order
};

/// In-image children of `a`, in NW, NE, SW, SE order.
inline std::vector<std::pair<Quadrant, TileAddr>> valid_children(const PyramidGeometry& geo,
                                                                 const TileAddr& a) {
    std::vector<std::pair<Quadrant, TileAddr>> out;
    if (a.level >= geo.max_depth) return out;
    for (Quadrant q : kQuadrants) {
        const TileAddr c = child_unchecked(a, q);
        if (geo.in_image_pixels(c) > 0) out.emplace_back(q, c);
    }
    return out;
}

/// Repeatedly zooms into the valid child with the highest score (ties to the
/// earlier quadrant) until a leaf.
inline GreedyResult greedy_descend(const PyramidGeometry& geo, const ScorerBinding& binding,
                                   const TileAddr& start = {0, 0, 0}) {
    geo.check(start);
    GreedyResult res{start, {}};
    std::vector<Quadrant> path;
    TileAddr cur = start;
    while (cur.level < geo.max_depth) {
        const auto kids = valid_children(geo, cur);
        if (kids.empty()) throw InvalidArgument("greedy_descend: " + to_string(cur) + " has no in-image child");
        std::size_t best = 0;
        double best_score = binding.score(cur, kids[0].first, kids[0].second);
        for (std::size_t i = 1; i < kids.size(); ++i) {
            const double s = binding.score(cur, kids[i].first, kids[i].second);
            if (s > best_score) {
                best = i;
                best_score = s;
            }
        }
        path.push_back(kids[best].first);
        cur = kids[best].second;
        res.trajectory.push_back({cur, best_score, path});
    }
    res.leaf = cur;
    return res;
}

/// Level-synchronous beam search from the root. Each level keeps the
/// `beam_width` best children by their own value (ties in (level, row, col)
/// order); the best `k` distinct leaves of the final level are returned.
inline std::vector<BeamEntry> beam_search_leaves(const PyramidGeometry& geo,
                                                 const ScorerBinding& binding, std::size_t k,
                                                 std::size_t beam_width, std::size_t threads = 1) {
    if (k == 0) throw InvalidArgument("beam_search: k must be at least 1");
    if (beam_width < k)
        throw InvalidArgument("beam_search: beam_width " + std::to_string(beam_width) +
                              " is smaller than k " + std::to_string(k));
    const auto better = [](const BeamEntry& a, const BeamEntry& b) {
        return ranks_before(a.value, a.addr, b.value, b.addr);
    };
    std::vector<BeamEntry> beam{{TileAddr{0, 0, 0}, 0.0, {}}};
    for (std::uint32_t level = 0; level < geo.max_depth; ++level) {
        std::vector<BeamEntry> candidates;
        std::set<TileAddr> seen;
        for (const BeamEntry& e : beam) {
            for (const auto& [q, c] : valid_children(geo, e.addr)) {
                if (!seen.insert(c).second) continue;
                BeamEntry next{c, 0.0, e.path};
                next.path.push_back(q);
                candidates.push_back(std::move(next));
            }
        }
        // Scores are written by index, so the result does not depend on scheduling.
        parallel_for(candidates.size(), threads, [&](std::size_t i) {
            const BeamEntry& cand = candidates[i];
            candidates[i].value = binding.score(parent(cand.addr), cand.path.back(), cand.addr);
        });
        const std::size_t keep = std::min(beam_width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), better);
        candidates.resize(keep);
        beam = std::move(candidates);
    }
    std::sort(beam.begin(), beam.end(), better);
    if (beam.size() > k) beam.resize(k);
    return beam;
}

inline SelectionReport beam_search(const Slide& slide, const ScorerBinding& binding, std::size_t k,
                                   std::size_t beam_width, std::size_t threads = 1) {
    std::vector<SelectedTile> chosen;
    for (const BeamEntry& e : beam_search_leaves(slide.pyramid.geometry(), binding, k, beam_width, threads))
        chosen.push_back({e.addr, e.value, 0.0});
    return evaluate_selection("beam", std::move(chosen), slide.rewards);
}

inline SelectionReport greedy_select(const Slide& slide, const ScorerBinding& binding) {
    const GreedyResult g = greedy_descend(slide.pyramid.geometry(), binding);
    const double score = g.trajectory.empty() ? 0.0 : g.trajectory.back().value;
    return evaluate_selection("greedy", {{g.leaf, score, 0.0}}, slide.rewards);
}

// ---------------------------------------------------------------------------
// Overlay
// ---------------------------------------------------------------------------

/// Downsampled slide (longest side at most `max_side`), cancer pixels tinted
/// red when a mask is given, and chosen leaf regions outlined in blue.
inline RgbImage render_overlay(const TilePyramid& pyr, const MaskRaster* mask,
                               const std::vector<SelectedTile>& tiles, std::size_t max_side = 512) {
    const std::size_t factor =
        std::max<std::size_t>(1, (std::max(pyr.width(), pyr.height()) + max_side - 1) / max_side);
    const std::size_t w = (pyr.width() + factor - 1) / factor;
    const std::size_t h = (pyr.height() + factor - 1) / factor;
    RgbImage out(w, h);
    const SlideRaster& src = pyr.slide();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::array<std::uint64_t, 3> sum{};
            std::uint64_t n = 0, cancer = 0;
            for (std::size_t yy = y * factor; yy < std::min<std::size_t>((y + 1) * factor, pyr.height()); ++yy) {
                for (std::size_t xx = x * factor; xx < std::min<std::size_t>((x + 1) * factor, pyr.width()); ++xx) {
                    const std::uint8_t* p = src.at(xx, yy);
                    for (int c = 0; c < 3; ++c) sum[c] += p[c];
                    ++n;
                    if (mask && mask->at(xx, yy)) ++cancer;
                }
            }
            std::uint8_t* o = out.at(x, y);
            for (int c = 0; c < 3; ++c) o[c] = static_cast<std::uint8_t>((sum[c] + n / 2) / n);
            if (cancer * 2 > n) {
                o[0] = static_cast<std::uint8_t>((o[0] + 255) / 2);
                o[1] = static_cast<std::uint8_t>(o[1] / 2);
                o[2] = static_cast<std::uint8_t>(o[2] / 2);
            }
        }
    }
    const auto paint = [&](std::size_t x, std::size_t y) {
        if (x >= w || y >= h) return;
        std::uint8_t* o = out.at(x, y);
        o[0] = 0;
        o[1] = 64;
        o[2] = 255;
    };
    for (const SelectedTile& t : tiles) {
        const Region r = pyr.region(t.addr);
        const std::size_t x0 = r.x0 / factor, y0 = r.y0 / factor;
        const std::size_t x1 = (r.x0 + r.side - 1) / factor, y1 = (r.y0 + r.side - 1) / factor;
        for (std::size_t x = x0; x <= x1; ++x) {
            paint(x, y0);
            paint(x, y1);
        }
        for (std::size_t y = y0; y <= y1; ++y) {
            paint(x0, y);
            paint(x1, y);
        }
    }
    return out;
}

}  // namespace zoomroi
