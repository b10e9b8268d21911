#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"
#include "png_io.hpp"
#include "pyramid.hpp"

namespace zoomroi {

inline constexpr std::uint8_t kDefaultMaskThreshold = 2;

/// Per-pixel cancer labels, row-major.
struct MaskRaster {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> cancer;  // 0 or 1

    bool at(std::size_t x, std::size_t y) const { return cancer[y * width + x] != 0; }
};

/// Integer Rec.601 luma; a gray pixel (g,g,g) maps to g exactly.
constexpr std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

inline MaskRaster mask_from_image(const RgbImage& img,
                                  std::uint8_t threshold = kDefaultMaskThreshold) {
    MaskRaster m{img.width, img.height, std::vector<std::uint8_t>(img.width * img.height)};
    for (std::size_t i = 0; i < m.cancer.size(); ++i) {
        const std::uint8_t* p = &img.pixels[i * 3];
        m.cancer[i] = luma(p[0], p[1], p[2]) < threshold ? 1 : 0;
    }
    return m;
}

/// A pixel is cancerous when its grayscale value is below `threshold`.
inline MaskRaster load_mask(const std::filesystem::path& path, std::uint8_t threshold,
                            std::size_t slide_width, std::size_t slide_height) {
    RgbImage img = read_png(path);
    if (img.width != slide_width || img.height != slide_height) {
        throw InvalidArgument("mask '" + path.string() + "' is " + std::to_string(img.width) +
                              "x" + std::to_string(img.height) + " but the slide is " +
                              std::to_string(slide_width) + "x" + std::to_string(slide_height));
    }
    return mask_from_image(img, threshold);
}

struct TileCounts {
    std::uint64_t cancer_px = 0;
    std::uint64_t in_image_px = 0;

    friend bool operator==(const TileCounts&, const TileCounts&) = default;
};

/// Dense storage is 4^depth entries at the leaf level; keep it bounded.
inline constexpr std::uint32_t kMaxRewardDepth = 12;

/// Exact cancer / in-image pixel counts for every tile at every level.
class RewardMap {
public:
    RewardMap() : RewardMap(0) {}

    explicit RewardMap(std::uint32_t max_depth) : max_depth_(max_depth) {
        if (max_depth > kMaxRewardDepth) {
            throw InvalidArgument("reward map depth " + std::to_string(max_depth) +
                                  " exceeds the supported maximum of " +
                                  std::to_string(kMaxRewardDepth));
        }
        levels_.resize(max_depth + 1);
        for (std::uint32_t l = 0; l <= max_depth; ++l) levels_[l].resize(grid_side(l) * grid_side(l));
    }

    std::uint32_t max_depth() const { return max_depth_; }

    bool contains(const TileAddr& a) const {
        return a.level <= max_depth_ && a.col < grid_side(a.level) && a.row < grid_side(a.level);
    }

    const TileCounts& counts(const TileAddr& a) const { return levels_[a.level][slot(a)]; }
    TileCounts& counts(const TileAddr& a) { return levels_[a.level][slot(a)]; }

    /// cancer_px / in_image_px; fully padded tiles score 0.
    double reward(const TileAddr& a) const {
        const TileCounts& c = counts(a);
        if (c.in_image_px == 0) return 0.0;
        return static_cast<double>(c.cancer_px) / static_cast<double>(c.in_image_px);
    }

    bool in_image(const TileAddr& a) const { return counts(a).in_image_px > 0; }

    /// Every tile with in_image_px > 0 at `level`, in (row, col) order.
    std::vector<TileAddr> tiles_at(std::uint32_t level) const {
        std::vector<TileAddr> out;
        const std::uint64_t side = grid_side(level);
        for (std::uint32_t r = 0; r < side; ++r)
            for (std::uint32_t c = 0; c < side; ++c)
                if (levels_[level][r * side + c].in_image_px > 0) out.push_back({level, c, r});
        return out;
    }

    std::vector<TileAddr> leaves() const { return tiles_at(max_depth_); }

    /// First violated invariant, if any: cancer_px <= in_image_px everywhere
    /// and each parent equals the sum of its four children.
    std::optional<std::string> find_violation() const {
        for (std::uint32_t l = 0; l <= max_depth_; ++l) {
            const std::uint64_t side = grid_side(l);
            for (std::uint32_t r = 0; r < side; ++r) {
                for (std::uint32_t c = 0; c < side; ++c) {
                    const TileAddr a{l, c, r};
                    const TileCounts& tc = counts(a);
                    if (tc.cancer_px > tc.in_image_px)
                        return "cancer_px exceeds in_image_px at " + to_string(a);
                    if (l == max_depth_) continue;
                    TileCounts sum;
                    for (Quadrant q : kQuadrants) {
                        const TileCounts& ch = counts(child_unchecked(a, q));
                        sum.cancer_px += ch.cancer_px;
                        sum.in_image_px += ch.in_image_px;
                    }
                    if (sum != tc) return "parent counts differ from child sums at " + to_string(a);
                }
            }
        }
        return std::nullopt;
    }

    /// Recomputes every non-leaf level from the leaves.
    void sum_up() {
        for (std::uint32_t l = max_depth_; l-- > 0;) {
            const std::uint64_t side = grid_side(l);
            for (std::uint32_t r = 0; r < side; ++r) {
                for (std::uint32_t c = 0; c < side; ++c) {
                    TileCounts sum;
                    for (Quadrant q : kQuadrants) {
                        const TileCounts& ch = counts(child_unchecked({l, c, r}, q));
                        sum.cancer_px += ch.cancer_px;
                        sum.in_image_px += ch.in_image_px;
                    }
                    levels_[l][r * side + c] = sum;
                }
            }
        }
    }

    friend bool operator==(const RewardMap&, const RewardMap&) = default;

private:
    std::size_t slot(const TileAddr& a) const {
        if (!contains(a)) {
            throw InvalidArgument("tile " + to_string(a) + " is not in a reward map of depth " +
                                  std::to_string(max_depth_));
        }
        return static_cast<std::size_t>(a.row) * grid_side(a.level) + a.col;
    }

    std::uint32_t max_depth_;
    std::vector<std::vector<TileCounts>> levels_;
};

/// Counts leaves directly (one pass over the mask, parallel across leaf rows),
/// then sums parents bottom-up.
inline RewardMap compute_reward_map(const PyramidGeometry& geo, const MaskRaster& mask,
                                    std::size_t threads = 1) {
    if (mask.width != geo.width || mask.height != geo.height) {
        throw InvalidArgument("mask dimensions do not match the pyramid geometry");
    }
    RewardMap map(geo.max_depth);
    const std::uint32_t depth = geo.max_depth;
    const std::uint64_t ts = geo.tile_size;
    const std::uint64_t leaf_rows = (geo.height + ts - 1) / ts;
    const std::uint64_t leaf_cols = (geo.width + ts - 1) / ts;

    parallel_for(leaf_rows, threads, [&](std::size_t r) {
        std::vector<std::uint64_t> row_counts(leaf_cols, 0);
        const std::uint64_t y_end = std::min<std::uint64_t>((r + 1) * ts, geo.height);
        for (std::uint64_t y = r * ts; y < y_end; ++y) {
            const std::uint8_t* line = &mask.cancer[y * mask.width];
            for (std::uint64_t x = 0; x < geo.width; ++x) row_counts[x / ts] += line[x];
        }
        for (std::uint64_t c = 0; c < leaf_cols; ++c) {
            const TileAddr a{depth, static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)};
            map.counts(a) = {row_counts[c], geo.in_image_pixels(a)};
        }
    });
    map.sum_up();
    return map;
}

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRewardCsvHeader = "level,col,row,cancer_px,in_image_px";

/// One row per tile with in_image_px > 0, sorted by (level, row, col), LF endings.
inline void write_reward_csv(const RewardMap& map, std::ostream& out) {
    out << kRewardCsvHeader << '\n';
    for (std::uint32_t l = 0; l <= map.max_depth(); ++l) {
        for (const TileAddr& a : map.tiles_at(l)) {
            const TileCounts& c = map.counts(a);
            out << a.level << ',' << a.col << ',' << a.row << ',' << c.cancer_px << ','
                << c.in_image_px << '\n';
        }
    }
}

inline void write_reward_csv(const RewardMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    write_reward_csv(map, out);
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace detail {

inline std::vector<std::uint64_t> parse_uint_fields(std::string_view line, std::size_t expected,
                                                    std::size_t line_no) {
    std::vector<std::uint64_t> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        const std::string_view tok =
            line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
            throw ParseError(line_no, "expected a nonnegative integer, got '" + std::string(tok) + "'");
        }
        fields.push_back(v);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    if (fields.size() != expected) {
        throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, got " +
                                      std::to_string(fields.size()));
    }
    return fields;
}

}  // namespace detail

/// Parses the reward CSV. The whole file is rejected, with the offending line
/// number, on malformed rows, duplicate addresses or violated count invariants.
/// max_depth is the deepest level present.
inline RewardMap read_reward_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError(1, "missing header");
    if (line != kRewardCsvHeader) throw ParseError(1, "unexpected header '" + line + "'");

    std::map<TileAddr, std::pair<TileCounts, std::size_t>> rows;
    std::uint32_t depth = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = detail::parse_uint_fields(line, 5, line_no);
        if (f[0] > kMaxRewardDepth) throw ParseError(line_no, "level exceeds supported depth");
        const TileAddr a{static_cast<std::uint32_t>(f[0]), static_cast<std::uint32_t>(f[1]),
                         static_cast<std::uint32_t>(f[2])};
        if (f[1] >= grid_side(a.level) || f[2] >= grid_side(a.level))
            throw ParseError(line_no, "tile " + to_string(a) + " lies outside its level grid");
        const TileCounts c{f[3], f[4]};
        if (c.in_image_px == 0) throw ParseError(line_no, "row with in_image_px = 0");
        if (c.cancer_px > c.in_image_px)
            throw ParseError(line_no, "cancer_px exceeds in_image_px");
        if (!rows.emplace(a, std::pair{c, line_no}).second)
            throw ParseError(line_no, "duplicate tile " + to_string(a));
        depth = std::max(depth, a.level);
    }
    if (rows.empty()) throw ParseError(line_no, "no tile rows");
    if (!rows.contains(TileAddr{0, 0, 0})) throw ParseError(line_no, "missing root row 0,0,0");

    RewardMap map(depth);
    for (const auto& [a, entry] : rows) map.counts(a) = entry.first;
    for (const auto& [a, entry] : rows) {
        if (a.level == 0) continue;
        const TileAddr p = parent(a);
        if (!rows.contains(p))
            throw ParseError(entry.second, "tile " + to_string(a) + " has no parent row");
    }
    for (const auto& [a, entry] : rows) {
        if (a.level == depth) continue;
        TileCounts sum;
        for (Quadrant q : kQuadrants) {
            const TileCounts& ch = map.counts(child_unchecked(a, q));
            sum.cancer_px += ch.cancer_px;
            sum.in_image_px += ch.in_image_px;
        }
        if (sum != entry.first)
            throw ParseError(entry.second, "counts of " + to_string(a) + " differ from child sums");
    }
    return map;
}

inline RewardMap read_reward_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return read_reward_csv(in);
}

}  // namespace zoomroi
