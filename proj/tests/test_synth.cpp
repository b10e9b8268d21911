#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"

using namespace zoomroi;
using namespace zoomroi::testing;

namespace {

// Floating-point point-in-ellipse test on pixel centers, independent of the
// integer formulation.
bool inside_ellipse(const Blob& b, double px, double py) {
    const double len = std::hypot(static_cast<double>(b.dir_x), static_cast<double>(b.dir_y));
    const double ux = b.dir_x / len, uy = b.dir_y / len;
    const double dx = px - b.cx, dy = py - b.cy;
    const double u = dx * ux + dy * uy;
    const double v = -dx * uy + dy * ux;
    return (u * u) / (b.rx * b.rx) + (v * v) / (b.ry * b.ry) <= 1.0 + 1e-12;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Synth, NoBlobsGivesWhiteMask) {
    SynthSpec spec;
    spec.width = 40;
    spec.height = 30;
    const SynthResult r = generate(spec);
    for (std::uint8_t v : r.mask.pixels) EXPECT_EQ(v, 255);
    EXPECT_EQ(r.manifest.root_reward(), 0.0);
    EXPECT_EQ(r.manifest.total_pixels, 1200u);
}

TEST(Synth, CoveringBlobGivesBlackMask) {
    SynthSpec spec;
    spec.width = spec.height = 64;
    spec.blobs = {{32, 32, 46, 46, 1, 0}};  // reaches the corner pixel centers
    const SynthResult r = generate(spec);
    const Slide s = make_slide("cover", r.slide, mask_from_image(r.mask));
    EXPECT_EQ(r.manifest.root_reward(), 1.0);
    EXPECT_EQ(s.rewards.reward({0, 0, 0}), 1.0);
}

TEST(Synth, CircleMatchesPointScan) {
    for (std::int64_t radius : {1, 5, 17, 100}) {
        SynthSpec spec;
        spec.width = 300;
        spec.height = 200;
        spec.blobs = {{150, 100, radius, radius, 1, 0}};
        const SynthResult r = generate(spec);
        std::uint64_t expected = 0;
        for (std::size_t y = 0; y < spec.height; ++y)
            for (std::size_t x = 0; x < spec.width; ++x) expected += inside_ellipse(spec.blobs[0], x + 0.5, y + 0.5);
        EXPECT_EQ(r.manifest.cancer_pixels, expected) << radius;
        EXPECT_DOUBLE_EQ(r.manifest.root_reward(), static_cast<double>(expected) / (300.0 * 200.0));
        const MaskRaster m = mask_from_image(r.mask);
        std::uint64_t black = 0;
        for (auto v : m.cancer) black += v;
        EXPECT_EQ(black, expected);
    }
}

TEST(Synth, RotatedEllipseMatchesPointScan) {
    SynthSpec spec;
    spec.width = spec.height = 128;
    spec.blobs = {{64, 64, 40, 12, 2, 1}, {30, 30, 20, 6, -1, 2}};
    const SynthResult r = generate(spec);
    for (std::size_t i = 0; i < spec.blobs.size(); ++i) {
        std::uint64_t expected = 0;
        for (std::size_t y = 0; y < 128; ++y)
            for (std::size_t x = 0; x < 128; ++x) expected += inside_ellipse(spec.blobs[i], x + 0.5, y + 0.5);
        EXPECT_EQ(r.manifest.blob_pixels[i], expected);
    }
}

TEST(Synth, CancerPixelsAreTinted) {
    SynthSpec spec;
    spec.width = spec.height = 64;
    spec.noise = 0;
    spec.blobs = {{32, 32, 10, 10, 1, 0}};
    const SynthResult r = generate(spec);
    EXPECT_EQ(r.slide.at(32, 32)[0], spec.background[0] + spec.tint[0]);
    EXPECT_EQ(r.slide.at(0, 0)[1], spec.background[1]);
}

TEST(Synth, ValidationErrors) {
    SynthSpec spec;
    spec.noise = 31;
    EXPECT_THROW(generate(spec), InvalidArgument);
    spec = SynthSpec{};
    spec.blobs = {{-1, 5, 10, 10, 1, 0}};
    EXPECT_THROW(generate(spec), InvalidArgument);
    spec.blobs = {{5, 5, 2000, 10, 1, 0}};
    EXPECT_THROW(generate(spec), InvalidArgument);
    spec.blobs = {{50, 50, 0, 10, 1, 0}};
    EXPECT_THROW(generate(spec), InvalidArgument);
    spec.blobs = {{50, 50, 10, 10, 0, 0}};
    EXPECT_THROW(generate(spec), InvalidArgument);
    spec = SynthSpec{};
    spec.width = 0;
    EXPECT_THROW(generate(spec), InvalidArgument);
}

TEST(Suite, CatalogShape) {
    const auto suite = benchmark_suite(7);
    ASSERT_EQ(suite.size(), 16u);
    std::map<std::string, int> per_split;
    for (const SuiteEntry& e : suite) {
        per_split[e.split]++;
        EXPECT_EQ(e.spec.width, 512u);
        EXPECT_EQ(e.spec.height, 512u);
        EXPECT_NO_THROW(e.spec.validate());
    }
    EXPECT_EQ(per_split["train"], 12);
    EXPECT_EQ(per_split["val"], 2);
    EXPECT_EQ(per_split["test"], 2);
    EXPECT_EQ(suite[12].split, "val");
    EXPECT_EQ(suite[12].index, 0u);
}

TEST(Suite, FractionsNearTargets) {
    for (const SuiteEntry& e : benchmark_suite(3)) {
        const SynthResult r = generate(e.spec);
        EXPECT_NEAR(r.manifest.root_reward(), e.target_fraction, 0.05 * e.target_fraction) << e.split << e.index;
        const Slide s = make_slide("x", r.slide, mask_from_image(r.mask));
        EXPECT_EQ(s.rewards.max_depth(), 3u);
        EXPECT_EQ(s.rewards.counts({0, 0, 0}).cancer_px, r.manifest.cancer_pixels);
    }
}

TEST(Suite, SameSeedSameBytes) {
    const auto dir = scratch_dir("synth_bytes");
    const auto a = benchmark_suite(5), b = benchmark_suite(5);
    for (std::size_t i : {0u, 13u}) {
        EXPECT_EQ(a[i].spec, b[i].spec);
        write_png(dir / "a.png", generate(a[i].spec).slide);
        write_png(dir / "b.png", generate(b[i].spec).slide);
        EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
    }
    EXPECT_NE(benchmark_suite(6)[0].spec, a[0].spec);
}
