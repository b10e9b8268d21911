#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "png_io.hpp"

namespace zoomroi {

// ---------------------------------------------------------------------------
// Addressing
// ---------------------------------------------------------------------------

/// Zoom action: one of the four quadrants of the current tile. The enum order
/// is the global tie-break order.
enum class Quadrant : std::uint8_t { NW = 0, NE = 1, SW = 2, SE = 3 };

inline constexpr std::array<Quadrant, 4> kQuadrants{Quadrant::NW, Quadrant::NE, Quadrant::SW,
                                                    Quadrant::SE};

constexpr std::size_t index(Quadrant q) { return static_cast<std::size_t>(q); }

constexpr std::string_view to_string(Quadrant q) {
    constexpr std::array<std::string_view, 4> names{"NW", "NE", "SW", "SE"};
    return names[index(q)];
}

inline Quadrant parse_quadrant(std::string_view s) {
    for (Quadrant q : kQuadrants)
        if (to_string(q) == s) return q;
    throw InvalidArgument("unknown quadrant '" + std::string(s) + "'");
}

/// DeepZoom-style tile coordinate. Ordering is (level, row, col), which is the
/// tie-break order used by scoring, search and CSV output.
struct TileAddr {
    std::uint32_t level = 0;
    std::uint32_t col = 0;
    std::uint32_t row = 0;

    friend bool operator==(const TileAddr&, const TileAddr&) = default;
    friend std::strong_ordering operator<=>(const TileAddr& a, const TileAddr& b) {
        return std::tie(a.level, a.row, a.col) <=> std::tie(b.level, b.row, b.col);
    }
};

inline std::string to_string(const TileAddr& a) {
    return "(" + std::to_string(a.level) + "," + std::to_string(a.col) + "," +
           std::to_string(a.row) + ")";
}

/// Tiles per side at `level`.
constexpr std::uint64_t grid_side(std::uint32_t level) { return std::uint64_t{1} << level; }

/// Child address without a depth check; see TilePyramid::child for the checked form.
constexpr TileAddr child_unchecked(const TileAddr& a, Quadrant q) {
    const std::uint32_t east = (q == Quadrant::NE || q == Quadrant::SE) ? 1u : 0u;
    const std::uint32_t south = (q == Quadrant::SW || q == Quadrant::SE) ? 1u : 0u;
    return {a.level + 1, 2 * a.col + east, 2 * a.row + south};
}

/// Child of `a` in quadrant `q`; throws when `a` is already a leaf.
inline TileAddr child(const TileAddr& a, Quadrant q, std::uint32_t max_depth) {
    if (a.level >= max_depth) {
        throw InvalidArgument("child: " + to_string(a) + " is already at max depth " +
                              std::to_string(max_depth));
    }
    return child_unchecked(a, q);
}

inline TileAddr parent(const TileAddr& a) {
    if (a.level == 0) throw InvalidArgument("parent: root has no parent");
    return {a.level - 1, a.col / 2, a.row / 2};
}

/// Quadrant of `a` within its parent.
inline Quadrant quadrant_in_parent(const TileAddr& a) {
    if (a.level == 0) throw InvalidArgument("quadrant_in_parent: root has no parent");
    return static_cast<Quadrant>((a.row % 2) * 2 + (a.col % 2));
}

/// Square region of the padded extent covered by a tile, half-open.
struct Region {
    std::uint64_t x0 = 0;
    std::uint64_t y0 = 0;
    std::uint64_t side = 0;

    friend bool operator==(const Region&, const Region&) = default;
};

inline Region region_of(const TileAddr& a, std::uint64_t extent) {
    const std::uint64_t side = extent >> a.level;
    return {a.col * side, a.row * side, side};
}

/// Levels below the root needed to cover `width` x `height` with leaves of
/// `tile_size`: the smallest d with tile_size * 2^d >= max(width, height).
inline std::uint32_t pyramid_depth(std::uint64_t width, std::uint64_t height,
                                   std::uint64_t tile_size) {
    if (tile_size == 0) throw InvalidArgument("pyramid_depth: tile_size must be positive");
    const std::uint64_t tiles = (std::max(width, height) + tile_size - 1) / tile_size;
    std::uint32_t depth = 0;
    while ((std::uint64_t{1} << depth) < tiles) ++depth;
    return depth;
}

// ---------------------------------------------------------------------------
// Pyramid
// ---------------------------------------------------------------------------

using SlideRaster = RgbImage;

inline constexpr std::uint8_t kPaddingValue = 255;
inline constexpr std::uint32_t kMinTileSize = 4;
inline constexpr std::uint32_t kDefaultTileSize = 64;

/// A rendered tile. Pixels outside the real image are kPaddingValue.
struct Tile {
    TileAddr addr;
    RgbImage pixels;  // tile_size x tile_size
    std::uint32_t valid_w = 0;
    std::uint32_t valid_h = 0;

    std::uint32_t tile_size() const { return static_cast<std::uint32_t>(pixels.width); }
};

/// Tile-grid geometry of a padded quadtree: no pixels, just arithmetic.
struct PyramidGeometry {
    std::uint64_t width = 0;
    std::uint64_t height = 0;
    std::uint32_t tile_size = kDefaultTileSize;
    std::uint32_t max_depth = 0;
    std::uint64_t extent = 0;

    PyramidGeometry() = default;
    PyramidGeometry(std::uint64_t w, std::uint64_t h, std::uint32_t ts)
        : width(w), height(h), tile_size(ts) {
        if (w == 0 || h == 0) throw InvalidArgument("slide has a zero dimension");
        if (ts < kMinTileSize)
            throw InvalidArgument("tile_size must be at least " + std::to_string(kMinTileSize));
        max_depth = pyramid_depth(w, h, ts);
        extent = std::uint64_t{ts} << max_depth;
    }

    bool contains(const TileAddr& a) const {
        return a.level <= max_depth && a.col < grid_side(a.level) && a.row < grid_side(a.level);
    }

    void check(const TileAddr& a) const {
        if (!contains(a)) {
            throw InvalidArgument("tile " + to_string(a) + " is outside a pyramid of depth " +
                                  std::to_string(max_depth));
        }
    }

    TileAddr child(const TileAddr& a, Quadrant q) const {
        check(a);
        return zoomroi::child(a, q, max_depth);
    }

    Region region(const TileAddr& a) const {
        check(a);
        return region_of(a, extent);
    }

    /// Width and height, in base pixels, of the tile region that lies inside the image.
    std::pair<std::uint64_t, std::uint64_t> in_image_extent(const TileAddr& a) const {
        const Region r = region(a);
        const auto clip = [](std::uint64_t start, std::uint64_t side, std::uint64_t limit) {
            return start >= limit ? 0 : std::min(limit, start + side) - start;
        };
        return {clip(r.x0, r.side, width), clip(r.y0, r.side, height)};
    }

    std::uint64_t in_image_pixels(const TileAddr& a) const {
        const auto [w, h] = in_image_extent(a);
        return w * h;
    }

    friend bool operator==(const PyramidGeometry&, const PyramidGeometry&) = default;
};

/// Quadtree view over a raster, padded on the right and bottom to a square
/// extent of tile_size * 2^max_depth. Immutable after construction, so render()
/// is safe to call from many threads.
class TilePyramid {
public:
    TilePyramid(SlideRaster slide, std::uint32_t tile_size = kDefaultTileSize)
        : slide_(std::move(slide)), geometry_(slide_.width, slide_.height, tile_size) {
        if (slide_.pixels.size() != slide_.width * slide_.height * 3) {
            throw InvalidArgument("slide pixel buffer does not match its dimensions");
        }
        build_integral();
    }

    const SlideRaster& slide() const { return slide_; }
    const PyramidGeometry& geometry() const { return geometry_; }
    std::uint64_t width() const { return geometry_.width; }
    std::uint64_t height() const { return geometry_.height; }
    std::uint32_t tile_size() const { return geometry_.tile_size; }
    std::uint32_t max_depth() const { return geometry_.max_depth; }
    std::uint64_t extent() const { return geometry_.extent; }

    bool contains(const TileAddr& a) const { return geometry_.contains(a); }
    void check(const TileAddr& a) const { geometry_.check(a); }
    TileAddr child(const TileAddr& a, Quadrant q) const { return geometry_.child(a, q); }
    Region region(const TileAddr& a) const { return geometry_.region(a); }
    std::pair<std::uint64_t, std::uint64_t> in_image_extent(const TileAddr& a) const {
        return geometry_.in_image_extent(a);
    }
    std::uint64_t in_image_pixels(const TileAddr& a) const { return geometry_.in_image_pixels(a); }

    /// Box-filter render. Each output pixel is the rounded mean of the
    /// (S/tile_size)^2 base pixels it covers, padding included.
    Tile render(const TileAddr& a) const {
        const Region r = region(a);
        const std::uint32_t ts = geometry_.tile_size;
        const std::uint64_t factor = r.side / ts;
        const std::uint64_t area = factor * factor;
        Tile t;
        t.addr = a;
        t.pixels = RgbImage(ts, ts);
        const auto [vw, vh] = in_image_extent(a);
        t.valid_w = static_cast<std::uint32_t>((vw + factor - 1) / factor);
        t.valid_h = static_cast<std::uint32_t>((vh + factor - 1) / factor);
        for (std::uint32_t j = 0; j < ts; ++j) {
            const std::uint64_t y0 = r.y0 + j * factor;
            const std::uint64_t y1 = std::min(y0 + factor, height());
            for (std::uint32_t i = 0; i < ts; ++i) {
                std::uint8_t* out = t.pixels.at(i, j);
                const std::uint64_t x0 = r.x0 + i * factor;
                const std::uint64_t x1 = std::min(x0 + factor, width());
                if (x0 >= width() || y0 >= height()) {
                    out[0] = out[1] = out[2] = kPaddingValue;
                    continue;
                }
                const std::uint64_t inside = (x1 - x0) * (y1 - y0);
                for (int c = 0; c < 3; ++c) {
                    const std::uint64_t sum =
                        box_sum(x0, y0, x1, y1, c) + kPaddingValue * (area - inside);
                    out[c] = static_cast<std::uint8_t>((sum + area / 2) / area);
                }
            }
        }
        return t;
    }

private:
    std::uint64_t box_sum(std::uint64_t x0, std::uint64_t y0, std::uint64_t x1, std::uint64_t y1,
                          int c) const {
        const std::size_t stride = slide_.width + 1;
        const auto at = [&](std::uint64_t x, std::uint64_t y) {
            return integral_[(y * stride + x) * 3 + c];
        };
        return at(x1, y1) + at(x0, y0) - at(x0, y1) - at(x1, y0);
    }

    void build_integral() {
        const std::size_t stride = slide_.width + 1;
        integral_.assign(stride * (slide_.height + 1) * 3, 0);
        for (std::size_t y = 0; y < slide_.height; ++y) {
            std::array<std::uint64_t, 3> row_sum{};
            for (std::size_t x = 0; x < slide_.width; ++x) {
                const std::uint8_t* p = slide_.at(x, y);
                for (int c = 0; c < 3; ++c) {
                    row_sum[c] += p[c];
                    integral_[((y + 1) * stride + x + 1) * 3 + c] =
                        integral_[(y * stride + x + 1) * 3 + c] + row_sum[c];
                }
            }
        }
    }

    SlideRaster slide_;
    PyramidGeometry geometry_;
    std::vector<std::uint64_t> integral_;  // (width+1) x (height+1) x 3 prefix sums
};

inline TilePyramid load_slide(const std::filesystem::path& path,
                              std::uint32_t tile_size = kDefaultTileSize) {
    if (tile_size < kMinTileSize) {
        throw InvalidArgument("tile_size must be at least " + std::to_string(kMinTileSize));
    }
    return TilePyramid(read_png(path), tile_size);
}

// ---------------------------------------------------------------------------
// Normalization and features
// ---------------------------------------------------------------------------

struct NormalizationConfig {
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std{0.229, 0.224, 0.225};

    void validate() const {
        for (double s : std)
            if (s == 0.0 || !std::isfinite(s))
                throw InvalidArgument("normalization std components must be finite and nonzero");
        for (double m : mean)
            if (!std::isfinite(m)) throw InvalidArgument("normalization mean must be finite");
    }

    double apply(double value_0_255, int channel) const {
        return (value_0_255 / 255.0 - mean[channel]) / std[channel];
    }

    /// Inverse of apply, back to the [0, 255] scale.
    double invert(double normalized, int channel) const {
        return (normalized * std[channel] + mean[channel]) * 255.0;
    }

    friend bool operator==(const NormalizationConfig&, const NormalizationConfig&) = default;
};

/// Per-channel (x/255 - mean_c) / std_c over the whole tile, interleaved RGB.
inline std::vector<double> normalize(const Tile& tile, const NormalizationConfig& cfg = {}) {
    cfg.validate();
    std::vector<double> out(tile.pixels.pixels.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = cfg.apply(tile.pixels.pixels[i], static_cast<int>(i % 3));
    }
    return out;
}

inline constexpr std::uint32_t kFeatureGrid = 8;
inline constexpr std::uint32_t kFeatureLayoutVersion = 1;
inline constexpr std::size_t kFeatureLength = kFeatureGrid * kFeatureGrid * 3 + 6;

using FeatureVector = std::vector<double>;

/// Everything that determines how a slide turns into feature vectors.
struct FeatureConfig {
    std::uint32_t tile_size = kDefaultTileSize;
    NormalizationConfig normalization;
    std::uint32_t layout_version = kFeatureLayoutVersion;

    void validate() const {
        if (tile_size < kMinTileSize)
            throw InvalidArgument("tile_size must be at least " + std::to_string(kMinTileSize));
        if (layout_version != kFeatureLayoutVersion)
            throw InvalidArgument("unsupported feature layout version " +
                                  std::to_string(layout_version));
        normalization.validate();
    }

    friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Layout (version 1): 8x8 grid of area-weighted cell means, row-major, RGB
// interleaved (192 values), then per-channel tile mean (3) and population
// standard deviation (3), all in normalized units. Padding pixels count as
// their background value. Moments come from exact integer sums so a constant
// tile has a standard deviation of exactly zero.
inline FeatureVector features(const Tile& tile, const NormalizationConfig& cfg = {}) {
    cfg.validate();
    const std::uint64_t ts = tile.tile_size();
    const RgbImage& px = tile.pixels;

    // Pixel x spans [G*x, G*x + G) and cell g spans [ts*g, ts*g + ts) after
    // scaling both by G, so overlaps are integers and each cell's weights sum to ts.
    std::vector<std::array<std::uint64_t, kFeatureGrid>> weight(ts);
    for (std::uint64_t x = 0; x < ts; ++x) {
        for (std::uint64_t g = 0; g < kFeatureGrid; ++g) {
            const std::uint64_t lo = std::max(kFeatureGrid * x, ts * g);
            const std::uint64_t hi = std::min(kFeatureGrid * x + kFeatureGrid, ts * g + ts);
            weight[x][g] = hi > lo ? hi - lo : 0;
        }
    }

    FeatureVector out(kFeatureLength, 0.0);
    std::array<std::uint64_t, kFeatureGrid * kFeatureGrid * 3> cell{};
    std::array<std::uint64_t, 3> sum{};
    std::array<std::uint64_t, 3> sum_sq{};
    for (std::uint64_t y = 0; y < ts; ++y) {
        for (std::uint64_t x = 0; x < ts; ++x) {
            const std::uint8_t* p = px.at(x, y);
            for (int c = 0; c < 3; ++c) {
                sum[c] += p[c];
                sum_sq[c] += std::uint64_t{p[c]} * p[c];
            }
            for (std::uint64_t gy = 0; gy < kFeatureGrid; ++gy) {
                if (weight[y][gy] == 0) continue;
                for (std::uint64_t gx = 0; gx < kFeatureGrid; ++gx) {
                    const std::uint64_t w = weight[y][gy] * weight[x][gx];
                    if (w == 0) continue;
                    for (int c = 0; c < 3; ++c)
                        cell[(gy * kFeatureGrid + gx) * 3 + c] += w * p[c];
                }
            }
        }
    }
    const double cell_area = static_cast<double>(ts * ts);
    for (std::size_t i = 0; i < cell.size(); ++i) {
        out[i] = cfg.apply(static_cast<double>(cell[i]) / cell_area, static_cast<int>(i % 3));
    }
    const std::uint64_t n = ts * ts;
    const std::size_t moments = cell.size();
    for (int c = 0; c < 3; ++c) {
        out[moments + c] = cfg.apply(static_cast<double>(sum[c]) / static_cast<double>(n), c);
        // n * sum_sq - sum^2 is n^2 times the variance, exact in integers.
        const std::uint64_t scaled_var = n * sum_sq[c] - sum[c] * sum[c];
        const double sd = std::sqrt(static_cast<double>(scaled_var)) / static_cast<double>(n);
        out[moments + 3 + c] = sd / 255.0 / cfg.std[c];
    }
    return out;
}

}  // namespace zoomroi
