#pragma once

#include <span>
#include <vector>

#include "parallel.hpp"
#include "pyramid.hpp"
#include "scoring.hpp"

namespace zoomroi {

/// Feature vectors for every in-image tile of one slide, computed once.
/// Memory is (4^(depth+1) / 3) * 198 doubles, fine for desk-scale pyramids.
class FeatureTable {
public:
    FeatureTable() = default;

    FeatureTable(const TilePyramid& pyramid, const RewardMap& rewards,
                 const NormalizationConfig& norm = {}, std::size_t threads = 1)
        : max_depth_(pyramid.max_depth()) {
        norm.validate();
        std::vector<TileAddr> tiles;
        for (std::uint32_t l = 0; l <= max_depth_; ++l) {
            offsets_.push_back(tiles.size());
            const std::uint64_t side = grid_side(l);
            for (std::uint32_t r = 0; r < side; ++r)
                for (std::uint32_t c = 0; c < side; ++c) tiles.push_back({l, c, r});
        }
        present_.assign(tiles.size(), 0);
        values_.assign(tiles.size() * kFeatureLength, 0.0);
        parallel_for(tiles.size(), threads, [&](std::size_t i) {
            if (!rewards.in_image(tiles[i])) return;
            const FeatureVector f = features(pyramid.render(tiles[i]), norm);
            std::copy(f.begin(), f.end(), values_.begin() + static_cast<std::ptrdiff_t>(i * kFeatureLength));
            present_[i] = 1;
        });
    }

    std::size_t feature_length() const { return kFeatureLength; }

    std::span<const double> at(const TileAddr& a) const {
        const std::size_t i = slot(a);
        if (!present_[i]) throw InvalidArgument("no features for padded tile " + to_string(a));
        return std::span<const double>(values_).subspan(i * kFeatureLength, kFeatureLength);
    }

private:
    std::size_t slot(const TileAddr& a) const {
        if (a.level > max_depth_ || a.col >= grid_side(a.level) || a.row >= grid_side(a.level) ||
            offsets_.empty()) {
            throw InvalidArgument("tile " + to_string(a) + " is outside the feature table");
        }
        return offsets_[a.level] + static_cast<std::size_t>(a.row) * grid_side(a.level) + a.col;
    }

    std::uint32_t max_depth_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint8_t> present_;
    std::vector<double> values_;
};

}  // namespace zoomroi
