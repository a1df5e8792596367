#pragma once

// Helpers shared by the unit tests and the acceptance binary. Oracles here
// are written independently of the library code they check.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cure/core.hpp"
#include "cure/curriculum.hpp"
#include "cure/judge.hpp"

namespace cure::testkit {

/// Box on the two-decimal grid, fully inside the frame.
inline NormBox grid_box(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size(2, 60);
    for (;;) {
        const int w = size(rng), h = size(rng);
        std::uniform_int_distribution<int> cx(0, 100), cy(0, 100);
        const int x = cx(rng), y = cy(rng);
        // corners in hundredths, computed on integers to avoid rounding doubt
        if (2 * x - w >= 0 && 2 * x + w <= 200 && 2 * y - h >= 0 && 2 * y + h <= 200) return {x / 100.0, y / 100.0, w / 100.0, h / 100.0};
    }
}

/// Arbitrary continuous box inside the frame.
inline NormBox real_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    if (b - a < 1e-3) b = std::min(1.0, a + 1e-3), a = b - 1e-3;
    if (d - c < 1e-3) d = std::min(1.0, c + 1e-3), c = d - 1e-3;
    return {(a + b) / 2, (c + d) / 2, b - a, d - c};
}

/// Box whose edges lie on the n x n pixel lattice. Pixel-center rasters of
/// such boxes are exact, so they make a sharp oracle.
inline NormBox pixel_box(std::mt19937_64& rng, int n = 2048, int min_side = 1, int max_side = 1200) {
    std::uniform_int_distribution<int> side(min_side, max_side);
    const int w = side(rng), h = side(rng);
    const int x = std::uniform_int_distribution<int>(0, n - w)(rng);
    const int y = std::uniform_int_distribution<int>(0, n - h)(rng);
    const double dn = n;
    return from_corners({x / dn, y / dn, (x + w) / dn, (y + h) / dn});
}

inline std::string random_word(std::mt19937_64& rng) {
    static const char* words[] = {"opacity", "effusion", "left", "basilar", "Mild", "cardiomegaly", "no", "pneumothorax",
                                  "stable", "catheter", "tip", "Small", "nodule", "right", "upper", "lobe", "atelectasis"};
    return words[std::uniform_int_distribution<std::size_t>(0, std::size(words) - 1)(rng)];
}

inline std::string random_phrase(std::mt19937_64& rng, int max_words = 4) {
    const int n = std::uniform_int_distribution<int>(1, max_words)(rng);
    std::string s;
    for (int i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += random_word(rng);
    }
    return s;
}

inline std::vector<NormBox> grid_boxes(std::mt19937_64& rng, int lo, int hi) {
    std::vector<NormBox> v(static_cast<std::size_t>(std::uniform_int_distribution<int>(lo, hi)(rng)));
    for (auto& b : v) b = grid_box(rng);
    return v;
}

/// Random record of the given task with every field its template needs.
inline AnnotationRecord random_record(std::mt19937_64& rng, Task task) {
    static const char* locations[] = {"abdomen", "cardiac silhouette", "left lung", "right costophrenic angle", "spine", "trachea"};
    AnnotationRecord r;
    r.image_id = "img" + std::to_string(rng() % 100000);
    r.source_id = "src";
    r.task = task;
    switch (task) {
        case Task::PG:
        case Task::DETECTION:
            r.text = random_phrase(rng);
            r.category = *r.text;
            r.boxes = grid_boxes(rng, 1, 4);
            break;
        case Task::GRG: {
            r.category = "report";
            const int n = std::uniform_int_distribution<int>(1, 4)(rng);
            for (int i = 0; i < n; ++i) r.findings.push_back({random_phrase(rng), grid_boxes(rng, 0, 3)});
            break;
        }
        case Task::AGRG_LOCATE:
        case Task::AGRG_DESCRIBE:
        case Task::AGRG_BOTH:
            r.category = locations[rng() % std::size(locations)];
            if (task != Task::AGRG_DESCRIBE) r.boxes = grid_boxes(rng, 1, 1);
            if (task != Task::AGRG_LOCATE) r.text = random_phrase(rng, 8) + ".";
            break;
    }
    return r;
}

namespace detail {

/// Pixel-index range [i0, i1] whose centers (i + 0.5) / n fall inside [a, b].
inline std::pair<long, long> pixel_span(double a, double b, int n) {
    const long i0 = std::max(0L, static_cast<long>(std::ceil(a * n - 0.5)));
    const long i1 = std::min(static_cast<long>(n) - 1, static_cast<long>(std::floor(b * n - 0.5)));
    return {i0, i1};
}

/// Merged pixel intervals covered on row j.
inline std::vector<std::pair<long, long>> row_cover(const std::vector<NormBox>& boxes, int j, int n) {
    const double yc = (j + 0.5) / n;
    std::vector<std::pair<long, long>> iv;
    for (const auto& b : boxes) {
        if (yc < b.cy - b.h / 2 || yc > b.cy + b.h / 2) continue;
        auto s = pixel_span(b.cx - b.w / 2, b.cx + b.w / 2, n);
        if (s.first <= s.second) iv.push_back(s);
    }
    std::sort(iv.begin(), iv.end());
    std::vector<std::pair<long, long>> merged;
    for (const auto& x : iv) {
        if (!merged.empty() && x.first <= merged.back().second + 1) merged.back().second = std::max(merged.back().second, x.second);
        else merged.push_back(x);
    }
    return merged;
}

inline long covered(const std::vector<std::pair<long, long>>& iv) {
    long c = 0;
    for (const auto& [a, b] : iv) c += b - a + 1;
    return c;
}

inline long overlap(const std::vector<std::pair<long, long>>& p, const std::vector<std::pair<long, long>>& q) {
    long c = 0;
    for (const auto& [a, b] : p)
        for (const auto& [x, y] : q) c += std::max(0L, std::min(b, y) - std::max(a, x) + 1);
    return c;
}

}  // namespace detail

/// Fraction of an n x n pixel grid whose pixel centers lie in any box.
inline double raster_union(const std::vector<NormBox>& boxes, int n = 2048) {
    long count = 0;
    for (int j = 0; j < n; ++j) count += detail::covered(detail::row_cover(boxes, j, n));
    return static_cast<double>(count) / (static_cast<double>(n) * n);
}

/// IoU of the two box unions measured on the same raster.
/// Worst-case pixel-center raster error (in area units) for a set of boxes.
/// Only pixels cut by the union boundary can be misclassified, and an
/// axis-aligned edge of length L pixels touches at most 2(L + 2) of them.
inline double raster_error_bound(const std::vector<NormBox>& boxes, int n = 2048) {
    double px = 0.0;
    for (const auto& b : boxes) px += 4.0 * (b.w + b.h) * n + 16.0;
    return px / (static_cast<double>(n) * n);
}

inline double raster_iou(const std::vector<NormBox>& gt, const std::vector<NormBox>& pred, int n = 2048) {
    long inter = 0, uni = 0;
    for (int j = 0; j < n; ++j) {
        const auto g = detail::row_cover(gt, j, n);
        const auto p = detail::row_cover(pred, j, n);
        const long o = detail::overlap(g, p);
        inter += o;
        uni += detail::covered(g) + detail::covered(p) - o;
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace cure::testkit

namespace cure::testkit {

/// Two-category closed-loop fixture: one PG source, a small hard category
/// "A" (initial error 0.8) and a large easy one "B" (initial error 0.2).
inline std::vector<AnnotationRecord> closed_loop_pool() {
    std::vector<AnnotationRecord> pool;
    auto add = [&](const std::string& cat, int n) {
        for (int i = 0; i < n; ++i) {
            AnnotationRecord r;
            r.image_id = cat + std::to_string(i);
            r.source_id = "fixture-pg";
            r.task = Task::PG;
            r.category = cat;
            r.text = cat;
            r.boxes = {{0.5, 0.5, 0.2, 0.2}};
            pool.push_back(std::move(r));
        }
    };
    add("A", 200);
    add("B", 800);
    return pool;
}

inline SimulatedLearner closed_loop_learner() {
    SimulatedLearner l;
    l.set_params("fixture-pg", "A", {0.8, 0.001, 0.05});
    l.set_params("fixture-pg", "B", {0.2, 0.001, 0.05});
    return l;
}

inline CurriculumConfig closed_loop_config(Strategy intra) {
    CurriculumConfig c;
    c.warmup_steps = 3000;
    c.reweight_interval = 3000;
    c.total_steps = 6000;
    c.inter_strategy = intra;
    c.intra_strategy = intra;
    return c;
}

}  // namespace cure::testkit

namespace cure::testkit {

/// Per-anatomy percentages of a published hallucination table (n = 300 per
/// anatomy): abnormality hallucination, contradiction, entailment.
struct HallucinationRow {
    const char* anatomy;
    double abn, con, ent;
};

inline constexpr HallucinationRow kBaselineRows[] = {
    {"Cardiac Silhouette", 2.00, 8.00, 25.00}, {"Left Clavicle", 59.00, 22.67, 5.00}, {"Left Lung", 12.00, 56.33, 21.67},
    {"Right Clavicle", 62.67, 20.33, 1.67},    {"Right Lung", 10.67, 53.67, 29.33},  {"Spine", 12.67, 38.33, 13.00},
};
inline constexpr HallucinationRow kModelRows[] = {
    {"Cardiac Silhouette", 25.67, 27.67, 47.33}, {"Left Clavicle", 1.00, 7.00, 32.67}, {"Left Lung", 7.00, 32.33, 41.67},
    {"Right Clavicle", 1.00, 7.33, 27.67},       {"Right Lung", 11.67, 27.00, 46.00}, {"Spine", 6.33, 3.33, 41.67},
};

/// Verdict list reproducing the row percentages with n = 300 per anatomy.
template <std::size_t N>
std::vector<std::pair<std::string, JudgeVerdict>> verdicts_for(const HallucinationRow (&rows)[N], int n = 300) {
    std::vector<std::pair<std::string, JudgeVerdict>> out;
    for (const auto& r : rows) {
        const long abn = std::lround(r.abn * n / 100.0);
        const long con = std::lround(r.con * n / 100.0);
        const long ent = std::lround(r.ent * n / 100.0);
        for (int i = 0; i < n; ++i) {
            JudgeVerdict v;
            v.reason = "fixture";
            v.gen_has_hallucinated_abnormalities = i < abn;
            v.nli_status = i < con ? NliStatus::contradiction : i < con + ent ? NliStatus::entailment : NliStatus::neutral;
            out.emplace_back(r.anatomy, v);
        }
    }
    return out;
}

}  // namespace cure::testkit
