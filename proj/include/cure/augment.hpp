#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "cure/clahe.hpp"
#include "cure/core.hpp"
#include "cure/taskgen.hpp"

namespace cure {

/// Spatial transform about the image center: scale, then rotate, then translate.
struct AffineParams {
    double tx = 0.0;
    double ty = 0.0;
    double sx = 1.0;
    double sy = 1.0;
    double theta = 0.0;  // degrees

    friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

struct AugPolicy {
    double p_clahe = 0.5;
    std::array<double, 2> clahe_clip_range{1.0, 4.0};
    TileGrid clahe_grid{8, 8};
    double p_crop = 0.3;
    double p_affine = 0.5;
    double p_bypass = 0.3;
    double min_box_visibility = 0.25;
    std::array<double, 2> crop_scale{0.8, 1.0};
    std::array<double, 2> crop_aspect{0.9, 1.1};
    double max_translate = 0.10;
    std::array<double, 2> scale_range{0.90, 1.10};
    double max_rotate = 15.0;
};

inline void validate(const AugPolicy& p) {
    for (double v : {p.p_clahe, p.p_crop, p.p_affine, p.p_bypass, p.min_box_visibility})
        if (!(v >= 0.0 && v <= 1.0)) throw Error("augmentation probabilities must lie in [0,1]");
    if (!(p.clahe_clip_range[0] > 0.0 && p.clahe_clip_range[0] <= p.clahe_clip_range[1])) throw Error("bad CLAHE clip range");
    if (!(p.crop_scale[0] > 0.0 && p.crop_scale[0] <= p.crop_scale[1] && p.crop_scale[1] <= 1.0)) throw Error("bad crop scale range");
    if (!(p.crop_aspect[0] > 0.0 && p.crop_aspect[0] <= p.crop_aspect[1])) throw Error("bad crop aspect range");
    if (!(p.scale_range[0] > 0.0 && p.scale_range[0] <= p.scale_range[1])) throw Error("bad scale range");
    if (p.max_translate < 0.0 || p.max_rotate < 0.0) throw Error("translation and rotation bounds must be nonnegative");
}

inline AugPolicy policy_from_json(const nlohmann::json& j) {
    AugPolicy p;
    auto num = [&](const char* k, double& dst) {
        if (j.contains(k)) dst = j.at(k).get<double>();
    };
    auto pair = [&](const char* k, std::array<double, 2>& dst) {
        if (j.contains(k)) dst = {j.at(k).at(0).get<double>(), j.at(k).at(1).get<double>()};
    };
    num("p_clahe", p.p_clahe);
    pair("clahe_clip_range", p.clahe_clip_range);
    if (j.contains("clahe_grid")) p.clahe_grid = {j["clahe_grid"].at(0).get<int>(), j["clahe_grid"].at(1).get<int>()};
    num("p_crop", p.p_crop);
    num("p_affine", p.p_affine);
    num("p_bypass", p.p_bypass);
    num("min_box_visibility", p.min_box_visibility);
    pair("crop_scale", p.crop_scale);
    pair("crop_aspect", p.crop_aspect);
    num("max_translate", p.max_translate);
    pair("scale_range", p.scale_range);
    num("max_rotate", p.max_rotate);
    validate(p);
    return p;
}

inline nlohmann::json policy_to_json(const AugPolicy& p) {
    return {{"p_clahe", p.p_clahe},
            {"clahe_clip_range", p.clahe_clip_range},
            {"clahe_grid", {p.clahe_grid.gx, p.clahe_grid.gy}},
            {"p_crop", p.p_crop},
            {"p_affine", p.p_affine},
            {"p_bypass", p.p_bypass},
            {"min_box_visibility", p.min_box_visibility},
            {"crop_scale", p.crop_scale},
            {"crop_aspect", p.crop_aspect},
            {"max_translate", p.max_translate},
            {"scale_range", p.scale_range},
            {"max_rotate", p.max_rotate}};
}

/// Transforms the four corners and returns their axis-aligned hull,
/// clamped to the frame. Rotation therefore grows boxes.
inline NormBox apply_affine_to_box(const NormBox& b, const AffineParams& a) {
    const Rect r = box_corners(b);
    const double rad = a.theta * std::numbers::pi / 180.0;
    const double c = a.theta == 0.0 ? 1.0 : std::cos(rad);
    const double s = a.theta == 0.0 ? 0.0 : std::sin(rad);
    Rect hull{INFINITY, INFINITY, -INFINITY, -INFINITY};
    for (auto [x, y] : {std::pair{r.x1, r.y1}, std::pair{r.x2, r.y1}, std::pair{r.x1, r.y2}, std::pair{r.x2, r.y2}}) {
        const double dx = a.sx * (x - 0.5);
        const double dy = a.sy * (y - 0.5);
        const double px = c * dx - s * dy + 0.5 + a.tx;
        const double py = s * dx + c * dy + 0.5 + a.ty;
        hull.x1 = std::min(hull.x1, px);
        hull.y1 = std::min(hull.y1, py);
        hull.x2 = std::max(hull.x2, px);
        hull.y2 = std::max(hull.y2, py);
    }
    return clamp_box(from_corners(hull));
}

struct CropResult {
    std::vector<NormBox> boxes;
    bool fallback = false;
};

/// Maps boxes into the crop frame rescaled to full size. Boxes keeping less
/// than `min_visibility` of their area are dropped; losing every box sets
/// `fallback`.
inline CropResult random_resized_crop(std::span<const NormBox> boxes, const Rect& crop, double min_visibility) {
    if (crop.empty() || crop.x1 < -kBoxEps || crop.y1 < -kBoxEps || crop.x2 > 1.0 + kBoxEps || crop.y2 > 1.0 + kBoxEps)
        throw Error("crop rectangle must lie inside the unit square with positive area");
    CropResult out;
    const double cw = crop.width();
    const double ch = crop.height();
    for (const auto& b : boxes) {
        const Rect r = box_corners(b);
        const Rect vis = intersect(r, crop);
        if (vis.empty() || vis.area() < min_visibility * r.area()) continue;
        const Rect mapped{(vis.x1 - crop.x1) / cw, (vis.y1 - crop.y1) / ch, (vis.x2 - crop.x1) / cw, (vis.y2 - crop.y1) / ch};
        try {
            out.boxes.push_back(clamp_box(from_corners(mapped)));
        } catch (const EmptyAfterClamp&) {
        }
    }
    out.fallback = !boxes.empty() && out.boxes.empty();
    return out;
}

/// One realization of the training policy. Horizontal flips are never drawn.
struct AugDraw {
    bool bypass = false;
    std::optional<double> clahe_clip;
    std::optional<Rect> crop;
    std::optional<AffineParams> affine;
};

template <class Rng>
AugDraw sample_draw(const AugPolicy& p, Rng& rng) {
    AugDraw d;
    if (uniform01(rng) < p.p_bypass) {
        d.bypass = true;
        d.clahe_clip = kEvalClipLimit;
        return d;
    }
    if (uniform01(rng) < p.p_clahe) d.clahe_clip = uniform_real(rng, p.clahe_clip_range[0], p.clahe_clip_range[1]);
    if (uniform01(rng) < p.p_crop) {
        const double scale = uniform_real(rng, p.crop_scale[0], p.crop_scale[1]);
        const double aspect = uniform_real(rng, p.crop_aspect[0], p.crop_aspect[1]);
        const double w = std::min(1.0, std::sqrt(scale * aspect));
        const double h = std::min(1.0, std::sqrt(scale / aspect));
        const double x1 = uniform_real(rng, 0.0, 1.0 - w);
        const double y1 = uniform_real(rng, 0.0, 1.0 - h);
        d.crop = Rect{x1, y1, x1 + w, y1 + h};
    }
    if (uniform01(rng) < p.p_affine) {
        AffineParams a;
        a.tx = uniform_real(rng, -p.max_translate, p.max_translate);
        a.ty = uniform_real(rng, -p.max_translate, p.max_translate);
        a.sx = uniform_real(rng, p.scale_range[0], p.scale_range[1]);
        a.sy = uniform_real(rng, p.scale_range[0], p.scale_range[1]);
        a.theta = uniform_real(rng, -p.max_rotate, p.max_rotate);
        d.affine = a;
    }
    return d;
}

inline nlohmann::json draw_to_json(const AugDraw& d) {
    nlohmann::json j{{"bypass", d.bypass}};
    j["clahe_clip"] = d.clahe_clip ? nlohmann::json(*d.clahe_clip) : nlohmann::json(nullptr);
    j["crop"] = d.crop ? nlohmann::json{d.crop->x1, d.crop->y1, d.crop->x2, d.crop->y2} : nlohmann::json(nullptr);
    if (d.affine)
        j["affine"] = {{"tx", d.affine->tx}, {"ty", d.affine->ty}, {"sx", d.affine->sx}, {"sy", d.affine->sy}, {"theta", d.affine->theta}};
    else
        j["affine"] = nullptr;
    return j;
}

struct AugmentResult {
    InstructionInstance instance;
    AugDraw draw;
    bool fallback = false;
};

namespace detail {

/// Crop then affine on one grounded box group. Returns nullopt when the
/// group loses all of its boxes.
inline std::optional<std::vector<NormBox>> transform_group(std::span<const NormBox> boxes, const AugDraw& d, double min_vis) {
    std::vector<NormBox> cur(boxes.begin(), boxes.end());
    if (d.crop) {
        auto c = random_resized_crop(cur, *d.crop, min_vis);
        if (c.fallback) return std::nullopt;
        cur = std::move(c.boxes);
    }
    if (d.affine) {
        std::vector<NormBox> next;
        for (const auto& b : cur) {
            try {
                next.push_back(apply_affine_to_box(b, *d.affine));
            } catch (const EmptyAfterClamp&) {
            }
        }
        if (!cur.empty() && next.empty()) return std::nullopt;
        cur = std::move(next);
    }
    return cur;
}

}  // namespace detail

/// Applies a specific draw. Boxes are transformed on the structured record
/// and the response is re-rendered from it; on fallback the original
/// instance comes back untouched.
inline AugmentResult apply_draw(const InstructionInstance& inst, const AugDraw& d, const AugPolicy& policy = {}) {
    AugmentResult res{inst, d, false};
    if (d.bypass || (!d.crop && !d.affine)) return res;

    AnnotationRecord rec = inst.structured;
    if (!rec.boxes.empty()) {
        auto t = detail::transform_group(rec.boxes, d, policy.min_box_visibility);
        if (!t) {
            res.fallback = true;
            return res;
        }
        rec.boxes = std::move(*t);
    }
    for (auto& f : rec.findings) {
        if (f.boxes.empty()) continue;
        auto t = detail::transform_group(f.boxes, d, policy.min_box_visibility);
        if (!t) {
            res.fallback = true;
            return res;
        }
        f.boxes = std::move(*t);
    }
    res.instance = render_instruction(rec);
    res.instance.instruction = inst.instruction;
    return res;
}

inline AugmentResult augment_instance(const InstructionInstance& inst, const AugPolicy& policy, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return apply_draw(inst, sample_draw(policy, rng), policy);
}

}  // namespace cure
