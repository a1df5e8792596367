#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <tuple>
#include <utility>
#include <vector>

#include "cure/core.hpp"

namespace cure {

class GridTooFine : public Error {
public:
    GridTooFine() : Error("CLAHE tile grid is finer than the image; tiles would be empty") {}
};

/// Row-major grayscale image with a declared maximum level.
struct IntensityGrid {
    int width = 0;
    int height = 0;
    int max_level = 255;
    std::vector<std::uint16_t> values;

    std::uint16_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint16_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const IntensityGrid&, const IntensityGrid&) = default;
};

struct TileGrid {
    int gx = 8;
    int gy = 8;
};

inline constexpr double kEvalClipLimit = 3.0;
inline constexpr TileGrid kEvalTileGrid{8, 8};
inline constexpr int kEvalResize = 448;

namespace detail {

/// Tile t of n over a length spans [t*len/n, (t+1)*len/n).
inline std::pair<int, int> tile_span(int t, int n, int len) {
    return {static_cast<int>(static_cast<long long>(t) * len / n), static_cast<int>(static_cast<long long>(t + 1) * len / n)};
}

}  // namespace detail

/// Per-tile lookup table: clipped histogram, excess spread evenly over all
/// bins, then lut[v] = round(cdf(v) * max_level / tile_pixels). Tiles with a
/// single occupied level get the identity mapping.
inline std::vector<std::uint16_t> clahe_tile_lut(const IntensityGrid& img, int x0, int x1, int y0, int y1, double clip_limit) {
    const int bins = img.max_level + 1;
    std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[img.at(x, y)] += 1.0;
    const double pixels = static_cast<double>(x1 - x0) * (y1 - y0);

    std::vector<std::uint16_t> lut(static_cast<std::size_t>(bins));
    // A single-level tile has no contrast to redistribute; map it to itself.
    if (std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0.0; }) == 1) {
        for (int v = 0; v < bins; ++v) lut[static_cast<std::size_t>(v)] = static_cast<std::uint16_t>(v);
        return lut;
    }

    if (std::isfinite(clip_limit)) {
        const double clip = clip_limit * pixels / bins;
        double excess = 0.0;
        for (auto& h : hist)
            if (h > clip) {
                excess += h - clip;
                h = clip;
            }
        const double share = excess / bins;
        for (auto& h : hist) h += share;
    }

    double cdf = 0.0;
    for (int v = 0; v < bins; ++v) {
        cdf += hist[static_cast<std::size_t>(v)];
        const double mapped = std::round(cdf * img.max_level / pixels);
        lut[static_cast<std::size_t>(v)] = static_cast<std::uint16_t>(std::clamp(mapped, 0.0, static_cast<double>(img.max_level)));
    }
    return lut;
}

/// Contrast-limited adaptive histogram equalization.
///
/// Tile mappings are blended bilinearly between tile centers; pixels
/// outside the outermost centers use the nearest tile(s) only. An infinite
/// clip limit gives plain per-tile equalization.
inline IntensityGrid clahe(const IntensityGrid& img, double clip_limit, TileGrid grid = kEvalTileGrid) {
    if (grid.gx <= 0 || grid.gy <= 0 || img.width < grid.gx || img.height < grid.gy) throw GridTooFine();
    if (!(clip_limit > 0.0)) throw Error("CLAHE clip limit must be positive");
    if (img.max_level < 1 || img.max_level > 65535) throw Error("max level must be in [1, 65535]");
    if (img.values.size() != static_cast<std::size_t>(img.width) * img.height) throw Error("grid size does not match its dimensions");
    for (auto v : img.values)
        if (v > img.max_level) throw Error("intensity exceeds the declared max level");

    std::vector<std::vector<std::uint16_t>> luts;
    luts.reserve(static_cast<std::size_t>(grid.gx) * grid.gy);
    for (int ty = 0; ty < grid.gy; ++ty) {
        const auto [y0, y1] = detail::tile_span(ty, grid.gy, img.height);
        for (int tx = 0; tx < grid.gx; ++tx) {
            const auto [x0, x1] = detail::tile_span(tx, grid.gx, img.width);
            luts.push_back(clahe_tile_lut(img, x0, x1, y0, y1, clip_limit));
        }
    }
    auto lut = [&](int tx, int ty) -> const std::vector<std::uint16_t>& { return luts[static_cast<std::size_t>(ty) * grid.gx + tx]; };

    const double tile_w = static_cast<double>(img.width) / grid.gx;
    const double tile_h = static_cast<double>(img.height) / grid.gy;

    // Position of a pixel index relative to tile centers: integer values sit
    // exactly on a center.
    auto locate = [](int p, double tile, int n) {
        const double f = p / tile - 0.5;
        int lo = static_cast<int>(std::floor(f));
        double frac = f - lo;
        int hi = lo + 1;
        if (lo < 0) {
            lo = 0;
            frac = 0.0;
        }
        if (hi > n - 1) {
            hi = n - 1;
            if (lo >= n - 1) {
                lo = n - 1;
                frac = 0.0;
            }
        }
        return std::tuple<int, int, double>{lo, hi, frac};
    };

    IntensityGrid out = img;
    for (int y = 0; y < img.height; ++y) {
        const auto [ty1, ty2, ya] = locate(y, tile_h, grid.gy);
        for (int x = 0; x < img.width; ++x) {
            const auto [tx1, tx2, xa] = locate(x, tile_w, grid.gx);
            const auto v = img.at(x, y);
            const double top = (1.0 - xa) * lut(tx1, ty1)[v] + xa * lut(tx2, ty1)[v];
            const double bot = (1.0 - xa) * lut(tx1, ty2)[v] + xa * lut(tx2, ty2)[v];
            const double r = (1.0 - ya) * top + ya * bot;
            out.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::round(r), 0.0, static_cast<double>(img.max_level)));
        }
    }
    return out;
}

/// Bilinear resize with pixel-center alignment.
inline IntensityGrid resize_bilinear(const IntensityGrid& img, int width, int height) {
    if (width <= 0 || height <= 0 || img.width <= 0 || img.height <= 0) throw Error("resize needs positive dimensions");
    IntensityGrid out{width, height, img.max_level, std::vector<std::uint16_t>(static_cast<std::size_t>(width) * height)};
    const double sx = static_cast<double>(img.width) / width;
    const double sy = static_cast<double>(img.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            const double v = (1 - wy) * ((1 - wx) * img.at(x0, y0) + wx * img.at(x1, y0)) +
                             wy * ((1 - wx) * img.at(x0, y1) + wx * img.at(x1, y1));
            out.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, static_cast<double>(img.max_level)));
        }
    }
    return out;
}

/// Evaluation-path preprocessing: CLAHE (clip 3.0, 8x8 tiles) then resize to 448x448.
inline IntensityGrid preprocess_deterministic(const IntensityGrid& img) {
    return resize_bilinear(clahe(img, kEvalClipLimit, kEvalTileGrid), kEvalResize, kEvalResize);
}

}  // namespace cure
