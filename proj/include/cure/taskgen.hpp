#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cure/core.hpp"
#include "cure/parse.hpp"

namespace cure {

class MissingField : public Error {
public:
    MissingField(Task task, std::string field)
        : Error("missing field '" + field + "' for task " + std::string(to_string(task))), task_(task), field_(std::move(field)) {}
    Task task() const noexcept { return task_; }
    const std::string& field() const noexcept { return field_; }

private:
    Task task_;
    std::string field_;
};

/// "[cx,cy,w,h]" with exactly two decimals per value.
inline std::string format_box(const NormBox& b) {
    // Decimal ties round away from zero: 0.445 prints as 0.45 even though its
    // binary value is a hair below. Noise under 1e-6 hundredths is discarded first.
    auto fix = [](double v) {
        const double r = std::round(std::round(v * 1e8) / 1e6) / 100.0;
        return r == 0.0 ? 0.0 : r;
    };
    char buf[96];
    std::snprintf(buf, sizeof buf, "[%.2f,%.2f,%.2f,%.2f]", fix(b.cx), fix(b.cy), fix(b.w), fix(b.h));
    return buf;
}

inline std::string format_boxes(std::span<const NormBox> boxes) {
    std::string out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (i) out += ' ';
        out += format_box(boxes[i]);
    }
    return out;
}

struct Template {
    std::string instruction;
    std::string response;
};

/// Instruction/response patterns per task. Placeholders: {phrase},
/// {location}, {description}, {boxes}. The GRG response pattern describes
/// one grounded sentence; sentences are joined by the renderer.
struct TemplateSet {
    Template pg{"Ground the phrase: {phrase}", "{phrase}: {boxes}"};
    Template grg{"Generate a grounded report.", "{phrase} {boxes}"};
    Template locate{"Locate the {location}.", "Location of the {location}: {boxes}."};
    Template describe{"Describe the {location}.", "Description of the {location}: {description}"};
    Template both{"Locate and describe the {location}.", "Location of the {location}: {boxes}. Description: {description}"};

    const Template& for_task(Task t) const noexcept {
        switch (t) {
            case Task::PG:
            case Task::DETECTION: return pg;
            case Task::GRG: return grg;
            case Task::AGRG_LOCATE: return locate;
            case Task::AGRG_DESCRIBE: return describe;
            case Task::AGRG_BOTH: return both;
        }
        return pg;
    }
};

namespace detail {

inline std::size_t count_of(std::string_view s, std::string_view needle) {
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string_view::npos; p = s.find(needle, p + needle.size())) ++n;
    return n;
}

inline std::string substitute(std::string_view pattern, std::string_view key, std::string_view value) {
    std::string out;
    std::size_t cursor = 0;
    for (auto p = pattern.find(key); p != std::string_view::npos; p = pattern.find(key, cursor)) {
        out.append(pattern.substr(cursor, p - cursor));
        out.append(value);
        cursor = p + key.size();
    }
    out.append(pattern.substr(cursor));
    return out;
}

/// GRG phrases are stored without the sentence-final period.
inline std::string sentence_phrase(std::string_view s) {
    s = trim(s);
    while (!s.empty() && s.back() == '.') s = trim(s.substr(0, s.size() - 1));
    return std::string(s);
}

}  // namespace detail

/// Checks that every pattern carries exactly the placeholders its task needs.
inline bool templates_valid(const TemplateSet& ts) {
    struct Need {
        const Template* t;
        std::array<int, 4> counts;  // phrase, location, description, boxes (response)
    };
    const Need needs[] = {
        {&ts.pg, {1, 0, 0, 1}}, {&ts.grg, {1, 0, 0, 1}}, {&ts.locate, {0, 1, 0, 1}},
        {&ts.describe, {0, 1, 1, 0}}, {&ts.both, {0, 1, 1, 1}},
    };
    constexpr std::array<std::string_view, 4> keys{"{phrase}", "{location}", "{description}", "{boxes}"};
    for (const auto& n : needs)
        for (std::size_t k = 0; k < keys.size(); ++k)
            if (detail::count_of(n.t->response, keys[k]) != static_cast<std::size_t>(n.counts[k])) return false;
    return true;
}

inline std::string render_grg_report(std::span<const Finding> findings, const TemplateSet& ts = {}) {
    std::string out;
    for (const auto& f : findings) {
        const std::string phrase = detail::sentence_phrase(f.phrase);
        std::string sentence;
        if (f.boxes.empty()) {
            sentence = phrase;
        } else {
            sentence = detail::substitute(ts.grg.response, "{phrase}", phrase);
            sentence = detail::substitute(sentence, "{boxes}", format_boxes(f.boxes));
        }
        if (!out.empty()) out += ' ';
        out += sentence;
        out += '.';
    }
    return out;
}

/// Renders a record into its (instruction, response) pair. Throws
/// MissingField when the record lacks what its task template needs.
inline InstructionInstance render_instruction(const AnnotationRecord& rec, const TemplateSet& ts = {}) {
    InstructionInstance inst;
    inst.image_id = rec.image_id;
    inst.source_id = rec.source_id;
    inst.task = rec.task;
    inst.category = rec.category;
    inst.structured = rec;

    const Template& t = ts.for_task(rec.task);
    auto need_text = [&](const char* field) -> const std::string& {
        if (!rec.text || detail::trim(*rec.text).empty()) throw MissingField(rec.task, field);
        return *rec.text;
    };
    auto need_boxes = [&] {
        if (rec.boxes.empty()) throw MissingField(rec.task, "boxes");
    };
    auto need_location = [&] {
        if (detail::trim(rec.category).empty()) throw MissingField(rec.task, "category");
    };

    switch (rec.task) {
        case Task::PG:
        case Task::DETECTION: {
            const auto& phrase = need_text("text");
            need_boxes();
            inst.instruction = detail::substitute(t.instruction, "{phrase}", phrase);
            inst.response = detail::substitute(detail::substitute(t.response, "{phrase}", phrase), "{boxes}", format_boxes(rec.boxes));
            break;
        }
        case Task::GRG: {
            if (rec.findings.empty()) throw MissingField(rec.task, "findings");
            for (const auto& f : rec.findings)
                if (detail::sentence_phrase(f.phrase).empty()) throw MissingField(rec.task, "findings.phrase");
            inst.instruction = t.instruction;
            inst.response = render_grg_report(rec.findings, ts);
            break;
        }
        case Task::AGRG_LOCATE: {
            need_location();
            need_boxes();
            inst.instruction = detail::substitute(t.instruction, "{location}", rec.category);
            inst.response = detail::substitute(detail::substitute(t.response, "{location}", rec.category), "{boxes}", format_boxes(rec.boxes));
            break;
        }
        case Task::AGRG_DESCRIBE: {
            need_location();
            const auto& desc = need_text("text");
            inst.instruction = detail::substitute(t.instruction, "{location}", rec.category);
            inst.response = detail::substitute(detail::substitute(t.response, "{location}", rec.category), "{description}", desc);
            break;
        }
        case Task::AGRG_BOTH: {
            need_location();
            need_boxes();
            const auto& desc = need_text("text");
            inst.instruction = detail::substitute(t.instruction, "{location}", rec.category);
            std::string r = detail::substitute(t.response, "{location}", rec.category);
            r = detail::substitute(r, "{boxes}", format_boxes(rec.boxes));
            inst.response = detail::substitute(r, "{description}", desc);
            break;
        }
    }
    return inst;
}

/// Appends a (label, boxes) PG record after every labelled grounded record in
/// the train/val splits. Test records pass through unchanged.
inline std::vector<AnnotationRecord> expand_padchest_labels(std::span<const AnnotationRecord> records) {
    std::vector<AnnotationRecord> out;
    out.reserve(records.size() * 2);
    for (const auto& r : records) {
        out.push_back(r);
        if (!r.label || detail::trim(*r.label).empty() || r.boxes.empty() || r.split == Split::test) continue;
        AnnotationRecord extra = r;
        extra.task = Task::PG;
        extra.text = *r.label;
        extra.findings.clear();
        extra.label.reset();
        if (r.id) extra.id = *r.id + "#label";
        out.push_back(std::move(extra));
    }
    return out;
}

enum class LocationSetName { AGRG9, AGRG29, AGRG38 };

struct LocationSet {
    LocationSetName name;
    std::vector<std::string> locations;
};

/// Anatomical query sets for report assembly, nested 9 ⊂ 29 ⊂ 38. The order
/// is the fixed assembly order.
inline LocationSet location_set(LocationSetName name) {
    std::vector<std::string> locs = {
        "abdomen", "cardiac silhouette", "left costophrenic angle", "right costophrenic angle", "left lung",
        "right lung", "mediastinum", "spine", "trachea",
    };
    if (name == LocationSetName::AGRG9) return {name, locs};
    for (const char* l : {"aortic arch", "carina", "cavoatrial junction", "svc", "upper mediastinum", "left apical zone",
                          "right apical zone", "left mid lung zone", "right mid lung zone", "left lower lung zone",
                          "right lower lung zone", "left upper lung zone", "right upper lung zone", "left hilar structures",
                          "right hilar structures", "left clavicle", "right clavicle", "left hemidiaphragm",
                          "right hemidiaphragm", "right atrium"})
        locs.emplace_back(l);
    if (name == LocationSetName::AGRG29) return {name, locs};
    for (const char* l : {"left arm", "right arm", "left breast", "right breast", "left chest wall", "right chest wall",
                          "left shoulder", "right shoulder", "neck"})
        locs.emplace_back(l);
    return {name, locs};
}

inline std::optional<LocationSetName> parse_location_set(std::string_view s) {
    if (s == "AGRG9" || s == "agrg-9" || s == "9") return LocationSetName::AGRG9;
    if (s == "AGRG29" || s == "agrg-29" || s == "29") return LocationSetName::AGRG29;
    if (s == "AGRG38" || s == "agrg-38" || s == "38") return LocationSetName::AGRG38;
    return std::nullopt;
}

/// Builds a plain report from per-location AGRG outputs (in location-set
/// order) and an optional GRG report, which always goes last. Empty and
/// "N/A" descriptions are skipped.
inline std::string assemble_report(std::span<const ParsedOutput> agrg, const std::optional<ParsedOutput>& grg, bool strip_boxes) {
    std::vector<std::string> parts;
    for (const auto& p : agrg) {
        if (!p.description) continue;
        const auto d = detail::trim(*p.description);
        if (d.empty() || d == "N/A") continue;
        parts.emplace_back(d);
    }
    if (grg) {
        std::string text = render_grg_report(grg->findings);
        if (!text.empty()) parts.push_back(std::move(text));
    }
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += ' ';
        out += p;
    }
    return strip_boxes ? strip_box_groups(out) : out;
}

}  // namespace cure
