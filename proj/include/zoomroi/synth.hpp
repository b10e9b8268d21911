#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "png_io.hpp"
#include "random.hpp"
#include "scoring.hpp"

namespace zoomroi {

/// Ellipse with integer geometry. The center sits on a pixel-grid corner and
/// the major axis points along the integer direction (dir_x, dir_y), so the
/// inside test is exact integer arithmetic.
struct Blob {
    std::int64_t cx = 0;
    std::int64_t cy = 0;
    std::int64_t rx = 1;  // semi-axis along the direction vector
    std::int64_t ry = 1;  // semi-axis across it
    std::int64_t dir_x = 1;
    std::int64_t dir_y = 0;

    /// Whether the center of pixel (x, y) lies inside or on the ellipse.
    bool contains(std::int64_t x, std::int64_t y) const {
        using wide = __int128;
        // Doubled coordinates of the pixel center relative to the blob center.
        const wide X = 2 * x + 1 - 2 * cx;
        const wide Y = 2 * y + 1 - 2 * cy;
        // Rotated into the ellipse frame, each scaled by |dir|.
        const wide u = X * dir_x + Y * dir_y;
        const wide v = -X * dir_y + Y * dir_x;
        const wide len2 = wide{dir_x} * dir_x + wide{dir_y} * dir_y;
        const wide rx2 = wide{rx} * rx, ry2 = wide{ry} * ry;
        return u * u * ry2 + v * v * rx2 <= 4 * len2 * rx2 * ry2;
    }

    std::int64_t bounding_radius() const { return std::max(rx, ry); }

    friend bool operator==(const Blob&, const Blob&) = default;
};

inline constexpr std::uint8_t kMaxNoise = 30;

struct SynthSpec {
    std::uint64_t width = 512;
    std::uint64_t height = 512;
    std::vector<Blob> blobs;
    std::array<std::uint8_t, 3> background{232, 190, 212};  // pale eosin pink
    std::array<int, 3> tint{-60, -95, -45};                  // darker pink inside blobs
    std::uint8_t noise = 8;                                  // uniform jitter in [-noise, noise]
    std::uint64_t seed = 0;

    void validate() const {
        if (width == 0 || height == 0) throw InvalidArgument("synth: zero image dimension");
        if (noise > kMaxNoise) throw InvalidArgument("synth: noise amplitude above 30");
        for (std::size_t i = 0; i < blobs.size(); ++i) {
            const Blob& b = blobs[i];
            const std::string who = "synth: blob " + std::to_string(i);
            if (b.rx < 1 || b.ry < 1) throw InvalidArgument(who + " has a radius below 1");
            if (b.dir_x == 0 && b.dir_y == 0) throw InvalidArgument(who + " has a zero direction");
            if (b.cx < 0 || b.cy < 0 || b.cx > static_cast<std::int64_t>(width) ||
                b.cy > static_cast<std::int64_t>(height))
                throw InvalidArgument(who + " has its center outside the image");
            // Ellipses are clipped to the image; the cap keeps the integer test in range.
            if (b.bounding_radius() > static_cast<std::int64_t>(2 * std::max(width, height)))
                throw InvalidArgument(who + " has a radius beyond twice the image size");
        }
    }

    friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

struct SynthManifest {
    SynthSpec spec;
    std::vector<std::uint64_t> blob_pixels;  // pixels inside each blob on its own
    std::uint64_t cancer_pixels = 0;         // pixels inside any blob
    std::uint64_t total_pixels = 0;

    double root_reward() const {
        return static_cast<double>(cancer_pixels) / static_cast<double>(total_pixels);
    }
};

struct SynthResult {
    RgbImage slide;
    RgbImage mask;  // black (0) inside any blob, white (255) elsewhere
    SynthManifest manifest;
};

inline SynthResult generate(const SynthSpec& spec) {
    spec.validate();
    SynthResult res{RgbImage(spec.width, spec.height), RgbImage(spec.width, spec.height, 255),
                    SynthManifest{spec, std::vector<std::uint64_t>(spec.blobs.size(), 0), 0,
                                  spec.width * spec.height}};
    Rng rng(spec.seed);
    const std::uint64_t span = 2 * std::uint64_t{spec.noise} + 1;
    for (std::uint64_t y = 0; y < spec.height; ++y) {
        for (std::uint64_t x = 0; x < spec.width; ++x) {
            bool inside = false;
            for (std::size_t i = 0; i < spec.blobs.size(); ++i) {
                if (spec.blobs[i].contains(static_cast<std::int64_t>(x), static_cast<std::int64_t>(y))) {
                    ++res.manifest.blob_pixels[i];
                    inside = true;
                }
            }
            std::uint8_t* p = res.slide.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const int jitter = static_cast<int>(rng.below(span)) - spec.noise;
                const int v = spec.background[c] + (inside ? spec.tint[c] : 0) + jitter;
                p[c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
            }
            if (inside) {
                ++res.manifest.cancer_pixels;
                std::uint8_t* m = res.mask.at(x, y);
                m[0] = m[1] = m[2] = 0;
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Benchmark catalog
// ---------------------------------------------------------------------------

struct SuiteEntry {
    std::string split;  // "train", "val" or "test"
    std::size_t index = 0;
    double target_fraction = 0.0;
    SynthSpec spec;
};

namespace detail {

inline constexpr std::array<std::array<std::int64_t, 2>, 8> kBlobDirections{
    {{1, 0}, {0, 1}, {1, 1}, {2, 1}, {1, 2}, {-1, 1}, {-2, 1}, {-1, 2}}};

/// Random blobs covering roughly `fraction` of the image. Blobs are added,
/// each sized to the remaining shortfall, until the exact union coverage is
/// within 2% of the target. Centers are re-drawn a few times to limit overlap.
inline std::vector<Blob> random_blobs(std::uint64_t w, std::uint64_t h, double fraction, Rng& rng) {
    const double target = fraction * static_cast<double>(w * h);
    const std::int64_t half = static_cast<std::int64_t>(std::min(w, h)) / 2;
    const std::size_t initial = 1 + static_cast<std::size_t>(rng.below(3));
    std::vector<std::uint8_t> covered(w * h, 0);
    std::uint64_t covered_px = 0;
    std::vector<Blob> blobs;
    while (blobs.size() < 64) {
        const double deficit = target - static_cast<double>(covered_px);
        if (deficit <= 0.02 * target) break;
        const double area = blobs.size() < initial ? target / static_cast<double>(initial) : deficit;
        const double aspect = rng.uniform(1.0, 2.0);
        std::int64_t rx = std::llround(std::sqrt(area * aspect / std::numbers::pi));
        std::int64_t ry = std::llround(std::sqrt(area / (aspect * std::numbers::pi)));
        rx = std::clamp<std::int64_t>(rx, 1, half - 1);
        ry = std::clamp<std::int64_t>(ry, 1, half - 1);
        const auto dir = kBlobDirections[rng.below(kBlobDirections.size())];
        const std::int64_t r = std::max(rx, ry);
        Blob b{0, 0, rx, ry, dir[0], dir[1]};
        for (int attempt = 0; attempt < 64; ++attempt) {
            b.cx = r + static_cast<std::int64_t>(rng.below(w - 2 * static_cast<std::uint64_t>(r) + 1));
            b.cy = r + static_cast<std::int64_t>(rng.below(h - 2 * static_cast<std::uint64_t>(r) + 1));
            const bool clear = std::all_of(blobs.begin(), blobs.end(), [&](const Blob& o) {
                const std::int64_t dx = o.cx - b.cx, dy = o.cy - b.cy;
                const std::int64_t reach = o.bounding_radius() + r;
                return dx * dx + dy * dy >= reach * reach;
            });
            if (clear) break;
        }
        for (std::int64_t y = b.cy - r; y < b.cy + r; ++y)
            for (std::int64_t x = b.cx - r; x < b.cx + r; ++x) {
                std::uint8_t& c = covered[static_cast<std::uint64_t>(y) * w + static_cast<std::uint64_t>(x)];
                if (!c && b.contains(x, y)) {
                    c = 1;
                    ++covered_px;
                }
            }
        blobs.push_back(b);
    }
    return blobs;
}

}  // namespace detail

inline constexpr std::uint64_t kSuiteSide = 512;

/// Fixed catalog: 12 training, 2 validation and 2 test slides of 512 x 512,
/// with target cancer fractions drawn from {0.05, 0.1, 0.25, 0.5}.
inline std::vector<SuiteEntry> benchmark_suite(std::uint64_t seed) {
    static constexpr std::array<double, 4> kFractions{0.05, 0.1, 0.25, 0.5};
    struct Slot {
        const char* split;
        double fraction;
    };
    std::vector<Slot> slots;
    for (int rep = 0; rep < 3; ++rep)
        for (double f : kFractions) slots.push_back({"train", f});
    slots.push_back({"val", 0.1});
    slots.push_back({"val", 0.25});
    slots.push_back({"test", 0.1});
    slots.push_back({"test", 0.25});

    Rng rng(seed);
    std::vector<SuiteEntry> out;
    std::size_t index_in_split = 0;
    std::string current;
    for (const Slot& s : slots) {
        if (s.split != current) {
            current = s.split;
            index_in_split = 0;
        }
        SynthSpec spec;
        spec.width = spec.height = kSuiteSide;
        spec.seed = rng.fork();
        spec.blobs = detail::random_blobs(spec.width, spec.height, s.fraction, rng);
        out.push_back({s.split, index_in_split++, s.fraction, std::move(spec)});
    }
    return out;
}

}  // namespace zoomroi
