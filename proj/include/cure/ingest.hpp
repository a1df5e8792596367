#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cure/core.hpp"
#include "cure/io.hpp"

namespace cure {

enum class InputFormat { scene_graph, phrase_boxes, grounded_report, detection, records };

inline std::string_view to_string(InputFormat f) noexcept {
    switch (f) {
        case InputFormat::scene_graph: return "scene_graph";
        case InputFormat::phrase_boxes: return "phrase_boxes";
        case InputFormat::grounded_report: return "grounded_report";
        case InputFormat::detection: return "detection";
        case InputFormat::records: return "records";
    }
    return "?";
}

inline std::optional<InputFormat> parse_input_format(std::string_view s) noexcept {
    for (auto f : {InputFormat::scene_graph, InputFormat::phrase_boxes, InputFormat::grounded_report, InputFormat::detection,
                   InputFormat::records})
        if (s == to_string(f)) return f;
    return std::nullopt;
}

/// Short detection class labels and the phrases they expand to. Labels not
/// listed are already phrases and pass through unchanged.
inline const std::map<std::string, std::string, std::less<>>& detection_label_map() {
    static const std::map<std::string, std::string, std::less<>> m = {
        {"ILD", "Interstitial lung disease"},
        {"COPD", "Chronic obstructive pulmonary disease"},
        {"Enlarged PA", "Enlarged pulmonary artery"},
        {"Nodule/Mass", "Nodule or mass"},
        {"Lung Opacity", "Lung opacity"},
        {"Other lesion", "Other lesion"},
        {"No finding", "No finding"},
    };
    return m;
}

inline std::string detection_phrase(std::string_view label) {
    const auto& m = detection_label_map();
    if (auto it = m.find(label); it != m.end()) return it->second;
    return std::string(label);
}

struct LoadOptions {
    std::string default_source;  // used when a row carries no source_id
    bool strict = true;
};

namespace detail {

inline NormBox row_box(const json& j) {
    if (!j.is_array() || j.size() != 4) throw Error("box must be an array of four numbers");
    for (const auto& v : j)
        if (!v.is_number()) throw Error("box must be an array of four numbers");
    NormBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!(b.w > 0.0) || !(b.h > 0.0)) throw Error("box " + j.dump() + " needs positive width and height");
    if (is_valid_box(b)) return b;
    try {
        return clamp_box(b);  // slightly out-of-frame annotations are kept, clipped to the image
    } catch (const EmptyAfterClamp&) {
        throw Error("box " + j.dump() + " lies outside the image");
    }
}

inline std::vector<NormBox> row_boxes(const json& j, const char* key) {
    std::vector<NormBox> out;
    if (!j.contains(key) || j[key].is_null()) return out;
    if (!j[key].is_array()) throw Error(std::string("'") + key + "' must be an array of boxes");
    for (const auto& b : j[key]) out.push_back(row_box(b));
    return out;
}

inline std::string trimmed(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

struct RowCommon {
    std::string image_id;
    std::string source_id;
    Split split = Split::train;
    std::optional<std::string> id;
    std::optional<bool> has_abnormality;
    std::optional<bool> has_device;
};

inline RowCommon row_common(const json& j, const LoadOptions& opt) {
    if (!j.is_object()) throw Error("row must be a JSON object");
    RowCommon c;
    c.image_id = required_string(j, "image_id");
    if (c.image_id.empty()) throw Error("image_id must be nonempty");
    c.source_id = optional_string(j, "source_id").value_or(opt.default_source);
    if (c.source_id.empty()) throw Error("row has no source_id and no default source was given");
    const auto split = parse_split(optional_string(j, "split").value_or("train"));
    if (!split) throw Error("unknown split '" + j["split"].get<std::string>() + "'");
    c.split = *split;
    c.id = optional_string(j, "id");
    c.has_abnormality = optional_bool(j, "has_abnormality");
    c.has_device = optional_bool(j, "has_device");
    return c;
}

inline AnnotationRecord base_record(const RowCommon& c, Task task, std::string category) {
    AnnotationRecord r;
    r.image_id = c.image_id;
    r.source_id = c.source_id;
    r.task = task;
    r.category = std::move(category);
    r.split = c.split;
    r.has_abnormality = c.has_abnormality;
    r.has_device = c.has_device;
    return r;
}

inline std::string with_suffix(const RowCommon& c, std::string_view suffix) {
    return (c.id ? *c.id : c.image_id) + "/" + std::string(suffix);
}

// scene_graph: {image_id, location, box?, sentence?}
inline void scene_graph_row(const json& j, const LoadOptions& opt, std::vector<AnnotationRecord>& out) {
    const auto c = row_common(j, opt);
    const std::string location = trimmed(required_string(j, "location"));
    if (location.empty()) throw Error("location must be nonempty");
    std::optional<NormBox> box;
    if (j.contains("box") && !j["box"].is_null()) box = row_box(j["box"]);
    std::optional<std::string> sentence = optional_string(j, "sentence");
    if (sentence && trimmed(*sentence).empty()) sentence.reset();
    if (!box && !sentence) throw Error("scene-graph entry needs a box or a sentence");

    auto make = [&](Task t) {
        auto r = base_record(c, t, location);
        r.id = with_suffix(c, location + "/" + std::string(to_string(t)));
        if (task_has_boxes(t)) r.boxes = {*box};
        if (task_has_text(t)) r.text = *sentence;
        out.push_back(std::move(r));
    };
    if (box && sentence) make(Task::AGRG_BOTH);
    if (box) make(Task::AGRG_LOCATE);
    if (sentence) make(Task::AGRG_DESCRIBE);
}

// phrase_boxes: {image_id, phrase, boxes, category?, label?}
inline void phrase_boxes_row(const json& j, const LoadOptions& opt, std::vector<AnnotationRecord>& out) {
    const auto c = row_common(j, opt);
    const std::string phrase = trimmed(required_string(j, "phrase"));
    if (phrase.empty()) throw Error("phrase must be nonempty");
    auto boxes = row_boxes(j, "boxes");
    if (boxes.empty()) throw Error("phrase grounding rows need at least one box");
    const auto label = optional_string(j, "label");
    auto r = base_record(c, Task::PG, optional_string(j, "category").value_or(label.value_or(phrase)));
    r.text = phrase;
    r.boxes = std::move(boxes);
    r.label = label;
    r.id = c.id;
    out.push_back(std::move(r));
}

inline std::vector<Finding> findings_field(const json& j) {
    if (!j.contains("findings") || !j["findings"].is_array()) throw Error("'findings' must be an array");
    std::vector<Finding> out;
    for (const auto& f : j["findings"]) {
        if (!f.is_object()) throw Error("each finding must be an object");
        Finding fd;
        fd.phrase = trimmed(required_string(f, "phrase"));
        if (fd.phrase.empty()) throw Error("finding phrase must be nonempty");
        fd.boxes = row_boxes(f, "boxes");
        out.push_back(std::move(fd));
    }
    if (out.empty()) throw Error("a grounded report needs at least one finding");
    return out;
}

// grounded_report: {image_id, findings: [{phrase, boxes?}]}
inline void grounded_report_row(const json& j, const LoadOptions& opt, std::vector<AnnotationRecord>& out) {
    const auto c = row_common(j, opt);
    auto r = base_record(c, Task::GRG, optional_string(j, "category").value_or("report"));
    r.findings = findings_field(j);
    r.id = c.id;
    out.push_back(std::move(r));
}

}  // namespace detail

/// Detection rows are one annotation each: {image_id, label, box?|boxes?}.
/// Rows with boxes become PG records immediately; every image also gets a
/// GRG pseudo-report (one finding per distinct label, boxed labels carry
/// all their boxes, box-free labels are global text-only findings). The
/// pseudo-reports follow all PG records, in first-appearance order of images.
class DetectionAccumulator {
public:
    void add(const json& j, const LoadOptions& opt, std::vector<AnnotationRecord>& out) {
        const auto c = detail::row_common(j, opt);
        const std::string label = detail::trimmed(detail::required_string(j, "label"));
        if (label.empty()) throw Error("label must be nonempty");
        auto boxes = detail::row_boxes(j, "boxes");
        if (j.contains("box") && !j["box"].is_null()) boxes.push_back(detail::row_box(j["box"]));

        const std::string key = c.source_id + '\x1f' + c.image_id;
        auto [it, fresh] = index_.try_emplace(key, images_.size());
        if (fresh) images_.push_back({c, {}, {}});
        auto& img = images_[it->second];
        if (img.common.split != c.split) throw Error("image '" + c.image_id + "' appears in more than one split");

        const std::string phrase = detection_phrase(label);
        if (!boxes.empty()) {
            auto r = detail::base_record(c, Task::PG, label);
            r.text = phrase;
            r.boxes = boxes;
            r.id = c.id ? *c.id : c.image_id + "/pg/" + std::to_string(img.pg_count);
            out.push_back(std::move(r));
        }
        ++img.pg_count;
        auto f = std::find_if(img.findings.begin(), img.findings.end(), [&](const Finding& x) { return x.phrase == phrase; });
        if (f == img.findings.end()) img.findings.push_back({phrase, boxes});
        else f->boxes.insert(f->boxes.end(), boxes.begin(), boxes.end());
    }

    void finish(std::vector<AnnotationRecord>& out) {
        for (auto& img : images_) {
            auto r = detail::base_record(img.common, Task::GRG, "report");
            r.has_abnormality.reset();
            r.has_device.reset();
            r.findings = std::move(img.findings);
            r.id = img.common.image_id + "/grg";
            out.push_back(std::move(r));
        }
        images_.clear();
        index_.clear();
    }

private:
    struct Image {
        detail::RowCommon common;
        std::vector<Finding> findings;
        std::size_t pg_count = 0;
    };
    std::vector<Image> images_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Loads one JSONL annotation file. In strict mode the first bad row throws
/// FormatError; otherwise bad rows are skipped and reported in `warnings`.
inline std::vector<AnnotationRecord> load_records(const std::filesystem::path& path, InputFormat format, const LoadOptions& opt = {},
                                                  std::vector<std::string>* warnings = nullptr) {
    std::vector<AnnotationRecord> out;
    DetectionAccumulator det;
    for_each_jsonl(path, [&](std::size_t line, const json& j) {
        try {
            switch (format) {
                case InputFormat::scene_graph: detail::scene_graph_row(j, opt, out); break;
                case InputFormat::phrase_boxes: detail::phrase_boxes_row(j, opt, out); break;
                case InputFormat::grounded_report: detail::grounded_report_row(j, opt, out); break;
                case InputFormat::detection: det.add(j, opt, out); break;
                case InputFormat::records: out.push_back(record_from_json(j)); break;
            }
        } catch (const std::exception& e) {
            if (opt.strict) throw FormatError(line, e.what());
            if (warnings) warnings->push_back("line " + std::to_string(line) + ": " + e.what());
        }
    });
    if (format == InputFormat::detection) det.finish(out);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

struct FixtureSource {
    std::string source_id;
    Task task = Task::PG;
    std::vector<std::pair<std::string, std::size_t>> categories;  // name, count
};

struct FixtureSpec {
    std::vector<FixtureSource> sources;
    double val_fraction = 0.1;
    double test_fraction = 0.0;
    std::array<double, 2> center_range{0.2, 0.8};
    std::array<double, 2> size_range{0.05, 0.35};
    std::size_t max_boxes = 2;
};

/// Accepts either {"sources":[{source_id, task, categories:{name:count}}], ...}
/// or the shorthand {"PG": {"pneumonia": 10}, ...}.
inline FixtureSpec fixture_spec_from_json(const json& j) {
    if (!j.is_object()) throw Error("fixture spec must be a JSON object");
    FixtureSpec s;
    auto categories = [](const json& c) {
        if (!c.is_object()) throw Error("fixture categories must map names to counts");
        std::vector<std::pair<std::string, std::size_t>> out;
        for (const auto& [name, n] : c.items()) {
            if (!n.is_number_integer() || n.get<long long>() < 0) throw Error("fixture count for '" + name + "' must be a nonnegative integer");
            out.emplace_back(name, n.get<std::size_t>());
        }
        return out;
    };
    if (j.contains("sources")) {
        for (const auto& src : j["sources"]) {
            FixtureSource fs;
            fs.source_id = detail::required_string(src, "source_id");
            const auto t = parse_task(detail::required_string(src, "task"));
            if (!t) throw Error("unknown fixture task '" + src["task"].get<std::string>() + "'");
            fs.task = *t;
            fs.categories = categories(src.at("categories"));
            s.sources.push_back(std::move(fs));
        }
        if (j.contains("val_fraction")) s.val_fraction = j["val_fraction"].get<double>();
        if (j.contains("test_fraction")) s.test_fraction = j["test_fraction"].get<double>();
        if (j.contains("max_boxes")) s.max_boxes = j["max_boxes"].get<std::size_t>();
    } else {
        for (const auto& [task, cats] : j.items()) {
            const auto t = parse_task(task);
            if (!t) throw Error("unknown fixture task '" + task + "'");
            FixtureSource fs;
            fs.source_id = "fixture-" + task;
            std::transform(fs.source_id.begin(), fs.source_id.end(), fs.source_id.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
            fs.task = *t;
            fs.categories = categories(cats);
            s.sources.push_back(std::move(fs));
        }
    }
    if (s.val_fraction < 0 || s.test_fraction < 0 || s.val_fraction + s.test_fraction > 1) throw Error("split fractions must lie in [0,1]");
    if (s.max_boxes == 0) throw Error("max_boxes must be positive");
    return s;
}

namespace detail {

inline constexpr std::string_view kFixtureFindings[] = {
    "Patchy opacity",      "Small pleural effusion", "Mild cardiomegaly", "Linear atelectasis",
    "Pulmonary nodule",    "Interstitial markings",  "Consolidation",     "Blunted costophrenic angle",
};
inline constexpr std::string_view kFixtureGlobal[] = {"No pneumothorax", "Degenerative changes of the spine", "Lungs are hyperinflated"};
inline constexpr std::string_view kFixtureNormal[] = {"No acute abnormality", "Unremarkable", "Within normal limits"};
inline constexpr std::string_view kFixtureAbnormal[] = {"Patchy opacity", "Small effusion", "Increased density", "Volume loss"};
inline constexpr std::string_view kFixtureDevices[] = {"A catheter terminates here", "Pacemaker lead projects here"};

template <class Rng>
double grid_value(Rng& rng, const std::array<double, 2>& range) {
    // Two-decimal values so rendered text round-trips exactly.
    return std::round(uniform_real(rng, range[0], range[1]) * 100.0) / 100.0;
}

template <class Rng>
NormBox fixture_box(Rng& rng, const FixtureSpec& s) {
    for (;;) {
        NormBox b{grid_value(rng, s.center_range), grid_value(rng, s.center_range), grid_value(rng, s.size_range),
                  grid_value(rng, s.size_range)};
        const Rect r = box_corners(b);
        if (r.x1 >= 0 && r.y1 >= 0 && r.x2 <= 1 && r.y2 <= 1 && b.w > 0 && b.h > 0) return b;
    }
}

template <class Rng, std::size_t N>
std::string_view pick(Rng& rng, const std::string_view (&items)[N]) {
    return items[uniform_index(rng, N)];
}

}  // namespace detail

/// Deterministic synthetic records. Each (source, category) stream has its
/// own RNG derived from the seed, so adding a source does not perturb others.
inline std::vector<AnnotationRecord> make_fixture_dataset(std::uint64_t seed, const FixtureSpec& spec) {
    std::vector<AnnotationRecord> out;
    for (const auto& src : spec.sources) {
        for (const auto& [cat, count] : src.categories) {
            std::mt19937_64 rng(derive_seed(seed, src.source_id + '\x1f' + cat, 0));
            for (std::size_t i = 0; i < count; ++i) {
                AnnotationRecord r;
                r.source_id = src.source_id;
                r.task = src.task;
                r.category = cat;
                r.image_id = src.source_id + "-" + cat + "-" + std::to_string(i);
                std::replace(r.image_id.begin(), r.image_id.end(), ' ', '_');
                r.id = r.image_id;
                const double u = uniform01(rng);
                r.split = u < spec.test_fraction ? Split::test : u < spec.test_fraction + spec.val_fraction ? Split::val : Split::train;
                const std::size_t nbox = 1 + uniform_index(rng, spec.max_boxes);

                switch (src.task) {
                    case Task::PG:
                    case Task::DETECTION:
                        r.text = cat;
                        for (std::size_t k = 0; k < nbox; ++k) r.boxes.push_back(detail::fixture_box(rng, spec));
                        break;
                    case Task::GRG: {
                        const std::size_t n = 1 + uniform_index(rng, 3);
                        for (std::size_t k = 0; k < n; ++k) {
                            if (uniform01(rng) < 0.25) {
                                r.findings.push_back({std::string(detail::pick(rng, detail::kFixtureGlobal)), {}});
                            } else {
                                Finding f{std::string(detail::pick(rng, detail::kFixtureFindings)), {}};
                                for (std::size_t b = 0; b < nbox; ++b) f.boxes.push_back(detail::fixture_box(rng, spec));
                                r.findings.push_back(std::move(f));
                            }
                        }
                        break;
                    }
                    case Task::AGRG_LOCATE:
                    case Task::AGRG_DESCRIBE:
                    case Task::AGRG_BOTH: {
                        const bool abn = uniform01(rng) < 0.5;
                        const bool dev = uniform01(rng) < 0.3;
                        r.has_abnormality = abn;
                        r.has_device = dev;
                        if (task_has_boxes(src.task)) r.boxes.push_back(detail::fixture_box(rng, spec));
                        if (task_has_text(src.task)) {
                            std::string d(abn ? detail::pick(rng, detail::kFixtureAbnormal) : detail::pick(rng, detail::kFixtureNormal));
                            if (dev) d += ". " + std::string(detail::pick(rng, detail::kFixtureDevices));
                            r.text = d + ".";
                        }
                        break;
                    }
                }
                out.push_back(std::move(r));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stratified benchmark subset

struct Stratum {
    std::string location;
    bool has_abnormality = false;
    bool has_device = false;

    friend auto operator<=>(const Stratum&, const Stratum&) = default;
    friend bool operator==(const Stratum&, const Stratum&) = default;
};

inline std::string to_string(const Stratum& s) {
    return "(" + s.location + ", abnormality=" + (s.has_abnormality ? "yes" : "no") + ", device=" + (s.has_device ? "yes" : "no") + ")";
}

struct BenchmarkSubsetSpec {
    std::size_t n_with_findings = 700;
    std::size_t n_without = 300;
    std::vector<Stratum> strata;  // empty: every location x abnormality x device combination in the pool
};

class InsufficientStratum : public Error {
public:
    InsufficientStratum(std::string stratum, std::size_t available, std::size_t requested, const std::string& all)
        : Error("insufficient records for stratum " + stratum + ": available " + std::to_string(available) + ", requested " +
                std::to_string(requested) + (all.empty() ? "" : "; deficient: " + all)),
          stratum_(std::move(stratum)),
          available_(available),
          requested_(requested) {}
    const std::string& stratum() const noexcept { return stratum_; }
    std::size_t available() const noexcept { return available_; }
    std::size_t requested() const noexcept { return requested_; }

private:
    std::string stratum_;
    std::size_t available_;
    std::size_t requested_;
};

namespace detail {

inline bool has_finding_text(const AnnotationRecord& r) {
    if (!r.text) return false;
    const auto t = trimmed(*r.text);
    return !t.empty() && t != "N/A";
}

/// count/k per bucket, the remainder going to the first buckets.
inline std::vector<std::size_t> even_allocation(std::size_t total, std::size_t k) {
    std::vector<std::size_t> out(k, k ? total / k : 0);
    for (std::size_t i = 0; i < (k ? total % k : 0); ++i) ++out[i];
    return out;
}

}  // namespace detail

/// Samples an evaluation subset of (image, location) units. Pool records are
/// grouped by (image_id, location); a unit has findings when any of its
/// records carries description text, and is represented by that record
/// (otherwise by its first record). The text units are split evenly over
/// the strata, the text-free ones evenly over locations. Output order:
/// strata in order, then locations, each in pool order.
inline std::vector<AnnotationRecord> build_benchmark_subset(std::span<const AnnotationRecord> pool, const BenchmarkSubsetSpec& spec,
                                                            std::uint64_t seed) {
    if (spec.n_with_findings == 0 && spec.n_without == 0) return {};

    struct Unit {
        std::size_t rep;
        bool text = false;
        std::optional<bool> abn, dev;
    };
    std::vector<Unit> units;
    std::map<std::pair<std::string, std::string>, std::size_t> unit_of;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& r = pool[i];
        auto [it, fresh] = unit_of.try_emplace({r.image_id, r.category}, units.size());
        if (fresh) units.push_back({i, false, std::nullopt, std::nullopt});
        auto& u = units[it->second];
        if (!u.text && detail::has_finding_text(r)) {
            u.text = true;
            u.rep = i;
        }
        if (r.has_abnormality) u.abn = *r.has_abnormality;
        if (r.has_device) u.dev = *r.has_device;
    }

    std::map<Stratum, std::vector<std::size_t>> with;
    std::map<std::string, std::vector<std::size_t>> without;
    std::set<std::string> locations;
    for (std::size_t k = 0; k < units.size(); ++k) {
        const auto& u = units[k];
        const auto& loc = pool[u.rep].category;
        locations.insert(loc);
        if (u.text) {
            if (spec.n_with_findings > 0 && (!u.abn || !u.dev))
                throw Error("record '" + pool[u.rep].key() + "' lacks has_abnormality/has_device flags needed for stratification");
            with[{loc, u.abn.value_or(false), u.dev.value_or(false)}].push_back(k);
        } else {
            without[loc].push_back(k);
        }
    }

    std::vector<Stratum> strata = spec.strata;
    if (strata.empty())
        for (const auto& loc : locations)
            for (bool a : {false, true})
                for (bool d : {false, true}) strata.push_back({loc, a, d});
    std::sort(strata.begin(), strata.end());
    strata.erase(std::unique(strata.begin(), strata.end()), strata.end());
    std::vector<std::string> no_text_locs;
    for (const auto& s : strata)
        if (no_text_locs.empty() || no_text_locs.back() != s.location) no_text_locs.push_back(s.location);

    const auto want_with = detail::even_allocation(spec.n_with_findings, strata.size());
    const auto want_without = detail::even_allocation(spec.n_without, no_text_locs.size());
    if (spec.n_with_findings > 0 && strata.empty()) throw Error("no strata available for the findings partition");
    if (spec.n_without > 0 && no_text_locs.empty()) throw Error("no locations available for the text-free partition");

    // Collect every shortfall before failing so the message is actionable.
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> deficient;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        const auto it = with.find(strata[s]);
        const std::size_t have = it == with.end() ? 0 : it->second.size();
        if (have < want_with[s]) deficient.emplace_back(to_string(strata[s]), have, want_with[s]);
    }
    for (std::size_t l = 0; l < no_text_locs.size(); ++l) {
        const auto it = without.find(no_text_locs[l]);
        const std::size_t have = it == without.end() ? 0 : it->second.size();
        if (have < want_without[l]) deficient.emplace_back("(" + no_text_locs[l] + ", no findings)", have, want_without[l]);
    }
    if (!deficient.empty()) {
        std::string all;
        for (const auto& [name, have, want] : deficient) {
            if (!all.empty()) all += "; ";
            all += name + " " + std::to_string(have) + "/" + std::to_string(want);
        }
        const auto& [name, have, want] = deficient.front();
        throw InsufficientStratum(name, have, want, deficient.size() > 1 ? all : "");
    }

    std::vector<AnnotationRecord> out;
    auto take = [&](std::vector<std::size_t> cands, std::size_t n, const std::string& key) {
        std::mt19937_64 rng(derive_seed(seed, key, 0));
        shuffle(rng, cands);
        cands.resize(n);
        std::sort(cands.begin(), cands.end(), [&](std::size_t a, std::size_t b) { return units[a].rep < units[b].rep; });
        for (auto k : cands) out.push_back(pool[units[k].rep]);
    };
    for (std::size_t s = 0; s < strata.size(); ++s)
        if (want_with[s]) take(with.at(strata[s]), want_with[s], "with" + to_string(strata[s]));
    for (std::size_t l = 0; l < no_text_locs.size(); ++l)
        if (want_without[l]) take(without.at(no_text_locs[l]), want_without[l], "without(" + no_text_locs[l] + ")");
    return out;
}

inline BenchmarkSubsetSpec benchmark_spec_from_json(const json& j) {
    BenchmarkSubsetSpec s;
    if (j.contains("n_with_findings")) s.n_with_findings = j["n_with_findings"].get<std::size_t>();
    if (j.contains("n_without")) s.n_without = j["n_without"].get<std::size_t>();
    if (j.contains("strata"))
        for (const auto& st : j["strata"])
            s.strata.push_back({st.at("location").get<std::string>(), st.at("has_abnormality").get<bool>(), st.at("has_device").get<bool>()});
    return s;
}

}  // namespace cure
