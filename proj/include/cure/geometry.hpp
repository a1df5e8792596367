#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "cure/core.hpp"

namespace cure {

class EmptyGroundTruth : public Error {
public:
    EmptyGroundTruth() : Error("ground truth has no boxes") {}
};

/// Exact area of a union of axis-aligned rectangles.
///
/// Sweeps the slabs between consecutive distinct x-edges; within a slab the
/// covering y-intervals are sorted and merged. O(n^2 log n), which is fine
/// for the handful of boxes a grounded finding carries. Rectangles are not
/// clipped to the unit square.
inline double union_area(std::span<const Rect> rects) {
    std::vector<Rect> live;
    live.reserve(rects.size());
    for (const auto& r : rects)
        if (!r.empty()) live.push_back(r);
    if (live.empty()) return 0.0;

    std::vector<double> xs;
    xs.reserve(live.size() * 2);
    for (const auto& r : live) {
        xs.push_back(r.x1);
        xs.push_back(r.x2);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    std::vector<std::pair<double, double>> spans;
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const double xl = xs[i];
        const double xr = xs[i + 1];
        spans.clear();
        for (const auto& r : live)
            if (r.x1 <= xl && r.x2 >= xr) spans.emplace_back(r.y1, r.y2);
        if (spans.empty()) continue;
        std::sort(spans.begin(), spans.end());
        double covered = 0.0;
        double lo = spans.front().first;
        double hi = spans.front().second;
        for (std::size_t k = 1; k < spans.size(); ++k) {
            if (spans[k].first > hi) {
                covered += hi - lo;
                lo = spans[k].first;
                hi = spans[k].second;
            } else {
                hi = std::max(hi, spans[k].second);
            }
        }
        covered += hi - lo;
        area += covered * (xr - xl);
    }
    return area;
}

inline std::vector<Rect> to_rects(std::span<const NormBox> boxes) {
    std::vector<Rect> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) out.push_back(box_corners(b));
    return out;
}

inline double union_area(std::span<const NormBox> boxes) {
    const auto rects = to_rects(boxes);
    return union_area(std::span<const Rect>(rects));
}

/// Union-merge IoU: the gt boxes and the predicted boxes are each merged
/// into one region and the IoU of the two regions is returned.
inline double grounding_iou(std::span<const NormBox> gt, std::span<const NormBox> pred) {
    if (gt.empty()) throw EmptyGroundTruth();
    if (pred.empty()) return 0.0;
    const auto g = to_rects(gt);
    const auto p = to_rects(pred);

    // (∪g) ∩ (∪p) = ∪ (g_i ∩ p_j)
    std::vector<Rect> inter;
    inter.reserve(g.size() * p.size());
    for (const auto& a : g)
        for (const auto& b : p)
            if (auto r = intersect(a, b); !r.empty()) inter.push_back(r);

    std::vector<Rect> all(g);
    all.insert(all.end(), p.begin(), p.end());

    const double u = union_area(std::span<const Rect>(all));
    if (!(u > 0.0)) return 0.0;
    return std::clamp(union_area(std::span<const Rect>(inter)) / u, 0.0, 1.0);
}

}  // namespace cure
