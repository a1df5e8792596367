#include <gtest/gtest.h>

#include <random>

#include "cure/clahe.hpp"

using namespace cure;

namespace {

IntensityGrid noise(int w, int h, int max_level, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    IntensityGrid g{w, h, max_level, {}};
    g.values.resize(static_cast<std::size_t>(w) * h);
    for (auto& v : g.values) v = static_cast<std::uint16_t>(rng() % (max_level + 1));
    return g;
}

// Plain histogram equalization of one tile: round(#{p <= v} * L / N).
int equalized(const IntensityGrid& img, int x0, int x1, int y0, int y1, int v) {
    long le = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) le += img.at(x, y) <= v;
    const long n = static_cast<long>(x1 - x0) * (y1 - y0);
    return static_cast<int>(std::lround(static_cast<double>(le) * img.max_level / static_cast<double>(n)));
}

}  // namespace

TEST(Clahe, EvalDefaults) {
    EXPECT_EQ(kEvalClipLimit, 3.0);
    EXPECT_EQ(kEvalTileGrid.gx, 8);
    EXPECT_EQ(kEvalTileGrid.gy, 8);
}

TEST(Clahe, ConstantImageUnchanged) {
    for (int level : {0, 17, 255}) {
        IntensityGrid g{64, 48, 255, std::vector<std::uint16_t>(64 * 48, static_cast<std::uint16_t>(level))};
        EXPECT_EQ(clahe(g, 3.0), g);
        EXPECT_EQ(clahe(g, std::numeric_limits<double>::infinity(), {2, 2}), g);
    }
}

TEST(Clahe, UnclippedMatchesTileEqualizationAtCenters) {
    const auto img = noise(16, 16, 255, 5);
    const auto out = clahe(img, std::numeric_limits<double>::infinity(), {2, 2});
    // Pixels on or outside the tile-center lattice use exactly one tile.
    for (int y : {0, 2, 4, 12, 14, 15})
        for (int x : {0, 3, 4, 12, 13, 15}) {
            const int tx = x < 8 ? 0 : 8, ty = y < 8 ? 0 : 8;
            EXPECT_EQ(out.at(x, y), equalized(img, tx, tx + 8, ty, ty + 8, img.at(x, y))) << x << "," << y;
        }
}

TEST(Clahe, Deterministic) {
    const auto img = noise(100, 80, 4095, 9);
    EXPECT_EQ(clahe(img, 3.0), clahe(img, 3.0));
}

TEST(Clahe, ClipLimitsContrastGain) {
    // Low-contrast ramp: equalization stretches it; a tight clip stretches less.
    IntensityGrid g{64, 64, 255, {}};
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) g.values.push_back(static_cast<std::uint16_t>(100 + (x + y) % 20));
    auto spread = [](const IntensityGrid& im) {
        const auto [lo, hi] = std::minmax_element(im.values.begin(), im.values.end());
        return *hi - *lo;
    };
    const int loose = spread(clahe(g, std::numeric_limits<double>::infinity(), {2, 2}));
    const int tight = spread(clahe(g, 1.5, {2, 2}));
    EXPECT_GT(loose, 19);
    EXPECT_LT(tight, loose);
}

TEST(Clahe, RejectsBadArguments) {
    const auto img = noise(4, 4, 255, 1);
    EXPECT_THROW(clahe(img, 3.0, {8, 8}), GridTooFine);
    EXPECT_THROW(clahe(img, 0.0, {2, 2}), Error);
    auto bad = img;
    bad.values[0] = 300;
    EXPECT_THROW(clahe(bad, 3.0, {2, 2}), Error);
}

TEST(Resize, ConstantStaysConstant) {
    IntensityGrid g{30, 20, 255, std::vector<std::uint16_t>(600, 77)};
    const auto r = resize_bilinear(g, 448, 448);
    EXPECT_EQ(r.width, 448);
    EXPECT_EQ(r.height, 448);
    for (auto v : r.values) EXPECT_EQ(v, 77);
}

TEST(Preprocess, EvalPathShape) {
    const auto out = preprocess_deterministic(noise(64, 64, 255, 3));
    EXPECT_EQ(out.width, 448);
    EXPECT_EQ(out.height, 448);
    EXPECT_EQ(out, preprocess_deterministic(noise(64, 64, 255, 3)));
}
