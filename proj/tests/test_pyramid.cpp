#include <gtest/gtest.h>

#include <thread>

#include "test_support.hpp"

using namespace zoomroi;
using namespace zoomroi::testing;

TEST(PyramidDepth, SingleTileImage) {
    TilePyramid p(solid_image(64, 64, 1, 2, 3), 64);
    EXPECT_EQ(p.max_depth(), 0u);
    EXPECT_EQ(p.extent(), 64u);
}

TEST(PyramidDepth, TwoTilesWide) {
    TilePyramid p(solid_image(128, 64, 1, 2, 3), 64);
    EXPECT_EQ(p.max_depth(), 1u);
    EXPECT_EQ(p.extent(), 128u);
}

TEST(PyramidDepth, GigapixelSlideMatchesDoublingOracle) {
    std::uint32_t doubling = 0;
    while ((std::uint64_t{64} << doubling) < 116143) ++doubling;
    EXPECT_EQ(doubling, 11u);
    EXPECT_EQ(pyramid_depth(116143, 76502, 64), 11u);
}

TEST(PyramidDepth, ExtentCoversImageForManySizes) {
    for (std::uint64_t w : {1u, 3u, 63u, 64u, 65u, 200u, 513u})
        for (std::uint64_t h : {1u, 64u, 130u}) {
            const PyramidGeometry g(w, h, 16);
            EXPECT_GE(g.extent, std::max(w, h));
            if (g.max_depth > 0) {
                EXPECT_LT(g.extent / 2, std::max(w, h));
            }
        }
}

TEST(PyramidLoad, RejectsBadInput) {
    EXPECT_THROW(TilePyramid(RgbImage(0, 10), 64), InvalidArgument);
    EXPECT_THROW(TilePyramid(solid_image(8, 8, 0, 0, 0), 3), InvalidArgument);
    EXPECT_THROW(load_slide("/nonexistent/slide.png", 64), IoError);
}

TEST(PyramidLoad, PngRoundTripKeepsPixels) {
    const auto dir = scratch_dir("pyramid_png");
    RgbImage img(70, 33);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
    write_png(dir / "s.png", img);
    const TilePyramid p = load_slide(dir / "s.png", 16);
    EXPECT_EQ(p.slide(), img);
    EXPECT_EQ(p.max_depth(), 3u);  // ceil(70/16) = 5 tiles -> 8
}

TEST(Child, Definition) {
    EXPECT_EQ(child(TileAddr{0, 0, 0}, Quadrant::NW, 3), (TileAddr{1, 0, 0}));
    EXPECT_EQ(child(TileAddr{0, 0, 0}, Quadrant::SE, 3), (TileAddr{1, 1, 1}));
    EXPECT_EQ(child(TileAddr{2, 1, 3}, Quadrant::NE, 3), (TileAddr{3, 3, 6}));
    EXPECT_THROW(child(TileAddr{3, 0, 0}, Quadrant::NW, 3), InvalidArgument);
}

TEST(Child, NortheastChildIsNortheastQuarterOfParentRegion) {
    const std::uint64_t extent = 64u << 3;
    const Region parent_r = region_of({2, 1, 3}, extent);
    const Region child_r = region_of(child(TileAddr{2, 1, 3}, Quadrant::NE, 3), extent);
    const std::uint64_t half = parent_r.side / 2;
    EXPECT_EQ(child_r.side, half);
    // Every pixel of the child lies in the parent's right half and top half.
    for (std::uint64_t y = child_r.y0; y < child_r.y0 + child_r.side; y += 7)
        for (std::uint64_t x = child_r.x0; x < child_r.x0 + child_r.side; x += 7) {
            EXPECT_GE(x, parent_r.x0 + half);
            EXPECT_LT(x, parent_r.x0 + parent_r.side);
            EXPECT_GE(y, parent_r.y0);
            EXPECT_LT(y, parent_r.y0 + half);
        }
}

TEST(Child, ChildrenPartitionParentRegion) {
    Rng rng(11);
    const std::uint32_t depth = 6;
    const std::uint64_t extent = 64u << depth;
    for (int trial = 0; trial < 200; ++trial) {
        const std::uint32_t level = static_cast<std::uint32_t>(rng.below(depth));
        const TileAddr a{level, static_cast<std::uint32_t>(rng.below(grid_side(level))),
                         static_cast<std::uint32_t>(rng.below(grid_side(level)))};
        const Region pr = region_of(a, extent);
        std::uint64_t area = 0;
        std::vector<Region> kids;
        for (Quadrant q : kQuadrants) {
            const TileAddr c = child(a, q, depth);
            EXPECT_EQ(parent(c), a);
            EXPECT_EQ(quadrant_in_parent(c), q);
            kids.push_back(region_of(c, extent));
            area += kids.back().side * kids.back().side;
            EXPECT_GE(kids.back().x0, pr.x0);
            EXPECT_LE(kids.back().x0 + kids.back().side, pr.x0 + pr.side);
            EXPECT_GE(kids.back().y0, pr.y0);
            EXPECT_LE(kids.back().y0 + kids.back().side, pr.y0 + pr.side);
        }
        EXPECT_EQ(area, pr.side * pr.side);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) {
                const bool disjoint_x = kids[i].x0 + kids[i].side <= kids[j].x0 ||
                                        kids[j].x0 + kids[j].side <= kids[i].x0;
                const bool disjoint_y = kids[i].y0 + kids[i].side <= kids[j].y0 ||
                                        kids[j].y0 + kids[j].side <= kids[i].y0;
                EXPECT_TRUE(disjoint_x || disjoint_y);
            }
    }
}

TEST(Render, LeafTilesAreOneToOne) {
    RgbImage img(256, 256);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 31 + 5);
    const TilePyramid p(img, 64);
    const Tile t = p.render({2, 1, 2});
    EXPECT_EQ(t.valid_w, 64u);
    EXPECT_EQ(t.valid_h, 64u);
    for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x)
            for (int c = 0; c < 3; ++c) ASSERT_EQ(t.pixels.at(x, y)[c], img.at(64 + x, 128 + y)[c]);
}

TEST(Render, RootOfSingleTileSlideIsExactCopy) {
    RgbImage img(64, 64);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 13);
    const TilePyramid p(img, 64);
    EXPECT_EQ(p.render({0, 0, 0}).pixels, img);
}

TEST(Render, ConstantSlideStaysConstant) {
    const TilePyramid p(solid_image(256, 256, 100, 100, 100), 64);
    for (std::uint32_t l = 0; l <= p.max_depth(); ++l)
        for (std::uint32_t r = 0; r < grid_side(l); ++r)
            for (std::uint32_t c = 0; c < grid_side(l); ++c) {
                const Tile t = p.render({l, c, r});
                for (std::uint8_t v : t.pixels.pixels) ASSERT_EQ(v, 100);
            }
}

TEST(Render, PaddingIsWhiteAndValidExtentReported) {
    const TilePyramid p(solid_image(100, 64, 0, 0, 0), 64);  // extent 128, depth 1
    const Tile root = p.render({0, 0, 0});
    EXPECT_EQ(root.valid_w, 50u);  // 100 base pixels at factor 2
    EXPECT_EQ(root.valid_h, 32u);
    EXPECT_EQ(root.pixels.at(10, 10)[0], 0);
    EXPECT_EQ(root.pixels.at(10, 40)[0], kPaddingValue);
    EXPECT_EQ(root.pixels.at(60, 10)[1], kPaddingValue);
    const Tile east = p.render({1, 1, 0});
    EXPECT_EQ(east.valid_w, 36u);
    EXPECT_EQ(east.valid_h, 64u);
    EXPECT_EQ(east.pixels.at(35, 0)[2], 0);
    EXPECT_EQ(east.pixels.at(36, 0)[2], kPaddingValue);
    const Tile south = p.render({1, 0, 1});
    EXPECT_EQ(south.valid_h, 0u);
}

TEST(Render, BoxFilterMatchesDirectAverage) {
    Rng rng(3);
    RgbImage img(96, 80);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.below(256));
    const TilePyramid p(img, 16);  // depth 3, extent 128
    const TileAddr a{1, 0, 0};     // factor 4
    const Tile t = p.render(a);
    for (std::size_t j = 0; j < 16; ++j)
        for (std::size_t i = 0; i < 16; ++i)
            for (int c = 0; c < 3; ++c) {
                std::uint64_t sum = 0;
                for (std::size_t y = j * 4; y < j * 4 + 4; ++y)
                    for (std::size_t x = i * 4; x < i * 4 + 4; ++x)
                        sum += (x < 96 && y < 80) ? img.at(x, y)[c] : 255;
                ASSERT_EQ(t.pixels.at(i, j)[c], (sum + 8) / 16);
            }
}

TEST(Render, DeterministicAcrossThreads) {
    Rng rng(5);
    RgbImage img(300, 200);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.below(256));
    const TilePyramid p(img, 32);
    const Tile reference = p.render({1, 1, 0});
    std::vector<RgbImage> results(4);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < results.size(); ++i)
        threads.emplace_back([&, i] { results[i] = p.render({1, 1, 0}).pixels; });
    for (auto& th : threads) th.join();
    for (const auto& r : results) EXPECT_EQ(r, reference.pixels);
}

TEST(Render, OutOfBoundsThrows) {
    const TilePyramid p(solid_image(128, 128, 0, 0, 0), 64);
    EXPECT_THROW(p.render({2, 0, 0}), InvalidArgument);
    EXPECT_THROW(p.render({1, 2, 0}), InvalidArgument);
}

TEST(Normalize, IdentityConfig) {
    Tile t{{0, 0, 0}, solid_image(4, 4, 255, 255, 255), 4, 4};
    const auto v = normalize(t, {{0, 0, 0}, {1, 1, 1}});
    for (double x : v) EXPECT_DOUBLE_EQ(x, 1.0);
}

TEST(Normalize, SymmetricConfig) {
    const NormalizationConfig cfg{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};
    Tile white{{0, 0, 0}, solid_image(4, 4, 255, 255, 255), 4, 4};
    Tile black{{0, 0, 0}, solid_image(4, 4, 0, 0, 0), 4, 4};
    for (double x : normalize(white, cfg)) EXPECT_DOUBLE_EQ(x, 1.0);
    for (double x : normalize(black, cfg)) EXPECT_DOUBLE_EQ(x, -1.0);
}

TEST(Normalize, DefaultsHandComputed) {
    Tile t{{0, 0, 0}, solid_image(4, 4, 124, 0, 0), 4, 4};
    const auto v = normalize(t);
    // (124/255 - 0.485) / 0.229 computed in exact rationals.
    EXPECT_NEAR(v[0], 0.005565544995290692, 1e-9);
    EXPECT_NEAR(v[1], (0.0 - 0.456) / 0.224, 1e-12);
}

TEST(Normalize, ZeroStdRejected) {
    Tile t{{0, 0, 0}, solid_image(4, 4, 1, 2, 3), 4, 4};
    EXPECT_THROW(normalize(t, {{0, 0, 0}, {1, 0, 1}}), InvalidArgument);
}

TEST(Normalize, RoundTripRecoversValues) {
    const NormalizationConfig cfg;
    for (int v = 0; v < 256; ++v)
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(cfg.invert(cfg.apply(v, c), c), v, 1e-12 * 255);
}

TEST(Features, LengthAndFinite) {
    const TilePyramid p(solid_image(200, 150, 30, 60, 90), 64);
    const auto f = features(p.render({1, 1, 1}));
    EXPECT_EQ(f.size(), kFeatureLength);
    EXPECT_EQ(kFeatureLength, 198u);
    for (double x : f) EXPECT_TRUE(std::isfinite(x));
}

TEST(Features, ConstantTileHasZeroStd) {
    Tile t{{0, 0, 0}, solid_image(64, 64, 40, 80, 120), 64, 64};
    const auto f = features(t);
    for (std::size_t i = 192 + 3; i < 198; ++i) EXPECT_EQ(f[i], 0.0);
    const NormalizationConfig cfg;
    EXPECT_NEAR(f[192], cfg.apply(40, 0), 1e-12);
}

TEST(Features, IdenticalTilesIdenticalVectors) {
    Rng rng(9);
    RgbImage img(64, 64);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.below(256));
    Tile a{{0, 0, 0}, img, 64, 64};
    Tile b{{3, 1, 1}, img, 64, 64};
    EXPECT_EQ(features(a), features(b));
}

TEST(Features, LeftBlackRightWhiteGrid) {
    RgbImage img = solid_image(64, 64, 255, 255, 255);
    for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 32; ++x) img.at(x, y)[0] = img.at(x, y)[1] = img.at(x, y)[2] = 0;
    Tile t{{0, 0, 0}, img, 64, 64};
    const NormalizationConfig cfg;
    const auto f = features(t, cfg);
    for (std::size_t gy = 0; gy < 8; ++gy)
        for (std::size_t gx = 0; gx < 8; ++gx)
            for (int c = 0; c < 3; ++c) {
                const double expected = cfg.apply(gx < 4 ? 0.0 : 255.0, c);
                EXPECT_NEAR(f[(gy * 8 + gx) * 3 + c], expected, 1e-12);
            }
    // Half black, half white: population std is exactly half the range.
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(f[195 + c], 0.5 / cfg.std[c], 1e-12);
}

TEST(Features, NonMultipleOfEightTileUsesAreaWeights) {
    // tile_size 12: cell g covers [1.5 g, 1.5 g + 1.5); pixel 1 splits across cells 0 and 1.
    RgbImage img = solid_image(12, 12, 0, 0, 0);
    for (std::size_t y = 0; y < 12; ++y) img.at(1, y)[0] = 255;
    Tile t{{0, 0, 0}, img, 12, 12};
    const NormalizationConfig id{{0, 0, 0}, {1, 1, 1}};
    const auto f = features(t, id);
    EXPECT_NEAR(f[0], (0.5 * 1.0) / 1.5, 1e-12);  // cell 0 holds half of pixel 1
    EXPECT_NEAR(f[3], (0.5 * 1.0) / 1.5, 1e-12);  // cell 1 holds the other half
    EXPECT_NEAR(f[6], 0.0, 1e-12);
}
