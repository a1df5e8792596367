#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cure/core.hpp"
#include "cure/geometry.hpp"
#include "cure/parse.hpp"
#include "cure/taskgen.hpp"

namespace cure {

class UnknownId : public Error {
public:
    explicit UnknownId(const std::string& id) : Error("prediction id '" + id + "' not found in gold") {}
};

class DuplicateId : public Error {
public:
    explicit DuplicateId(const std::string& id) : Error("duplicate id '" + id + "'") {}
};

/// Candidate/reference text similarity in [0,1].
using TextScorer = std::function<double(std::string_view candidate, std::string_view reference)>;

namespace detail {

inline std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace detail

/// Token-multiset F1 over lowercased alphanumeric runs. Deterministic
/// stand-in for a model-based factual-consistency score.
inline double lexical_fact_score(std::string_view candidate, std::string_view reference) {
    const auto c = detail::word_tokens(candidate);
    const auto r = detail::word_tokens(reference);
    if (c.empty() && r.empty()) return 1.0;
    if (c.empty() || r.empty()) return 0.0;
    std::unordered_map<std::string, int> counts;
    for (const auto& t : r) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : c) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(c.size());
    const double rc = static_cast<double>(overlap) / static_cast<double>(r.size());
    return 2.0 * p * rc / (p + rc);
}

struct IouAggregate {
    double micro = 0.0;
    double macro = 0.0;
    std::map<std::string, double> per_class;
    std::map<std::string, std::size_t> per_class_n;
};

/// micro = mean over rows, macro = mean over classes of per-class means.
inline IouAggregate aggregate_iou(std::span<const std::pair<std::string, double>> rows) {
    IouAggregate agg;
    if (rows.empty()) return agg;
    std::map<std::string, double> sums;
    double total = 0.0;
    for (const auto& [cls, v] : rows) {
        sums[cls] += v;
        ++agg.per_class_n[cls];
        total += v;
    }
    agg.micro = total / static_cast<double>(rows.size());
    double macro = 0.0;
    for (const auto& [cls, s] : sums) {
        const double m = s / static_cast<double>(agg.per_class_n[cls]);
        agg.per_class[cls] = m;
        macro += m;
    }
    agg.macro = macro / static_cast<double>(sums.size());
    return agg;
}

/// Matches each gold finding (in report order) to the unused predicted
/// finding with the highest grounding IoU; unmatched gold findings count 0.
/// Returns nullopt when the gold report carries no boxes.
inline std::optional<double> grg_iou(std::span<const Finding> gold, std::span<const Finding> pred) {
    std::vector<bool> used(pred.size(), false);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& g : gold) {
        if (g.boxes.empty()) continue;
        ++n;
        double best = 0.0;
        std::optional<std::size_t> best_j;
        for (std::size_t j = 0; j < pred.size(); ++j) {
            if (used[j] || pred[j].boxes.empty()) continue;
            const double v = grounding_iou(g.boxes, pred[j].boxes);
            if (!best_j || v > best) {
                best = v;
                best_j = j;
            }
        }
        if (best_j && best > 0.0) used[*best_j] = true;
        sum += best;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

struct SampleResult {
    std::string id;
    std::string category;
    Task task = Task::PG;
    std::optional<double> iou;
    std::optional<double> text_score;
    bool parse_failed = false;
    bool salvaged = false;
};

struct EvalReport {
    static constexpr int kSchemaVersion = 1;

    std::string task;
    ParseMode mode = ParseMode::strict;
    std::vector<SampleResult> rows;
    std::size_t n = 0;
    std::size_t parse_failures = 0;
    std::size_t salvaged = 0;
    std::optional<double> micro_iou;
    std::optional<double> macro_iou;
    std::map<std::string, double> per_class_iou;
    std::map<std::string, std::size_t> per_class_n;
    std::optional<double> mean_text_score;
};

struct Prediction {
    std::string id;
    std::string output;
};

inline std::string reference_text(const AnnotationRecord& gold) {
    if (gold.task == Task::GRG) return strip_box_groups(render_grg_report(gold.findings));
    return gold.text.value_or("");
}

inline std::string candidate_text(const ParsedOutput& p) {
    if (p.task == Task::GRG) return strip_box_groups(render_grg_report(p.findings));
    return p.description.value_or("");
}

/// Scores one prediction against its gold record. Unparseable strict
/// outputs score 0 on every metric the task carries.
inline SampleResult score_sample(const AnnotationRecord& gold, std::string_view output, ParseMode mode, const TextScorer& scorer) {
    SampleResult row;
    row.id = gold.key();
    row.category = gold.category;
    row.task = gold.task;

    const bool wants_iou = gold.task == Task::GRG
                               ? std::any_of(gold.findings.begin(), gold.findings.end(), [](const Finding& f) { return !f.boxes.empty(); })
                               : task_has_boxes(gold.task) && !gold.boxes.empty();
    const bool wants_text = task_has_text(gold.task);

    std::optional<ParsedOutput> parsed;
    try {
        parsed = parse_output(output, gold.task, mode);
    } catch (const ParseError&) {
        row.parse_failed = true;
    }
    if (parsed) row.salvaged = parsed->salvaged;

    if (wants_iou) {
        if (!parsed) {
            row.iou = 0.0;
        } else if (gold.task == Task::GRG) {
            row.iou = grg_iou(gold.findings, parsed->findings).value_or(0.0);
        } else {
            row.iou = grounding_iou(gold.boxes, parsed->boxes);
        }
    }
    if (wants_text) {
        if (!parsed) {
            row.text_score = 0.0;
        } else {
            row.text_score = std::clamp(scorer(candidate_text(*parsed), reference_text(gold)), 0.0, 1.0);
        }
    }
    return row;
}

/// Joins predictions to gold by id and aggregates. Rows are ordered by id.
inline EvalReport evaluate_task(std::span<const Prediction> preds, std::span<const AnnotationRecord> gold,
                                std::optional<Task> task, ParseMode mode, const TextScorer& scorer = lexical_fact_score) {
    std::unordered_map<std::string, const AnnotationRecord*> by_id;
    for (const auto& g : gold) {
        if (task && g.task != *task) continue;
        if (!by_id.emplace(g.key(), &g).second) throw DuplicateId(g.key());
    }
    std::map<std::string, const Prediction*> ordered;
    for (const auto& p : preds) {
        if (!by_id.count(p.id)) throw UnknownId(p.id);
        if (!ordered.emplace(p.id, &p).second) throw DuplicateId(p.id);
    }

    EvalReport rep;
    rep.task = task ? std::string(to_string(*task)) : "all";
    rep.mode = mode;
    std::vector<std::pair<std::string, double>> iou_rows;
    double text_sum = 0.0;
    std::size_t text_n = 0;
    for (const auto& [id, p] : ordered) {
        auto row = score_sample(*by_id.at(id), p->output, mode, scorer);
        if (row.parse_failed) ++rep.parse_failures;
        if (row.salvaged) ++rep.salvaged;
        if (row.iou) iou_rows.emplace_back(row.category, *row.iou);
        if (row.text_score) {
            text_sum += *row.text_score;
            ++text_n;
        }
        rep.rows.push_back(std::move(row));
    }
    rep.n = rep.rows.size();
    if (!iou_rows.empty()) {
        auto agg = aggregate_iou(iou_rows);
        rep.micro_iou = agg.micro;
        rep.macro_iou = agg.macro;
        rep.per_class_iou = std::move(agg.per_class);
        rep.per_class_n = std::move(agg.per_class_n);
    }
    if (text_n) rep.mean_text_score = text_sum / static_cast<double>(text_n);
    return rep;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json per_class = json::object();
    for (const auto& [cls, m] : rep.per_class_iou) per_class[cls] = {{"mean_iou", m}, {"n", rep.per_class_n.at(cls)}};
    json rows = json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"id", r.id},
                        {"category", r.category},
                        {"task", std::string(to_string(r.task))},
                        {"iou", opt(r.iou)},
                        {"text_score", opt(r.text_score)},
                        {"parse_failed", r.parse_failed},
                        {"salvaged", r.salvaged}});
    return {{"schema_version", EvalReport::kSchemaVersion},
            {"task", rep.task},
            {"mode", std::string(to_string(rep.mode))},
            {"n", rep.n},
            {"parse_failures", rep.parse_failures},
            {"salvaged", rep.salvaged},
            {"micro_iou", opt(rep.micro_iou)},
            {"macro_iou", opt(rep.macro_iou)},
            {"per_class", per_class},
            {"mean_text_score", opt(rep.mean_text_score)},
            {"rows", rows}};
}

}  // namespace cure
