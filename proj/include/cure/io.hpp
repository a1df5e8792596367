#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cure/core.hpp"

namespace cure {

using json = nlohmann::json;

inline json box_to_json(const NormBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

inline NormBox box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw Error("box must be an array of 4 numbers");
    for (const auto& v : j)
        if (!v.is_number()) throw Error("box must be an array of 4 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json boxes_to_json(const std::vector<NormBox>& boxes) {
    json arr = json::array();
    for (const auto& b : boxes) arr.push_back(box_to_json(b));
    return arr;
}

inline std::vector<NormBox> boxes_from_json(const json& j) {
    if (!j.is_array()) throw Error("boxes must be an array");
    std::vector<NormBox> out;
    out.reserve(j.size());
    for (const auto& b : j) out.push_back(box_from_json(b));
    return out;
}

inline json findings_to_json(const std::vector<Finding>& findings) {
    json arr = json::array();
    for (const auto& f : findings) arr.push_back({{"phrase", f.phrase}, {"boxes", boxes_to_json(f.boxes)}});
    return arr;
}

inline std::vector<Finding> findings_from_json(const json& j) {
    if (!j.is_array()) throw Error("findings must be an array");
    std::vector<Finding> out;
    for (const auto& f : j) {
        if (!f.is_object() || !f.contains("phrase") || !f["phrase"].is_string())
            throw Error("finding requires a string 'phrase'");
        out.push_back({f["phrase"].get<std::string>(), f.contains("boxes") ? boxes_from_json(f["boxes"]) : std::vector<NormBox>{}});
    }
    return out;
}

/// JSONL record schema. The seven core fields are always written; the
/// optional metadata fields only when set.
inline json record_to_json(const AnnotationRecord& r) {
    json j;
    j["image_id"] = r.image_id;
    j["source_id"] = r.source_id;
    j["task"] = std::string(to_string(r.task));
    j["category"] = r.category;
    j["text"] = r.text ? json(*r.text) : json(nullptr);
    j["boxes"] = boxes_to_json(r.boxes);
    j["split"] = std::string(to_string(r.split));
    if (!r.findings.empty()) j["findings"] = findings_to_json(r.findings);
    if (r.id) j["id"] = *r.id;
    if (r.label) j["label"] = *r.label;
    if (r.has_abnormality) j["has_abnormality"] = *r.has_abnormality;
    if (r.has_device) j["has_device"] = *r.has_device;
    return j;
}

namespace detail {

inline std::string required_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw Error(std::string("missing or non-string field '") + key + "'");
    return j[key].get<std::string>();
}

inline std::optional<std::string> optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) throw Error(std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

inline std::optional<bool> optional_bool(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_boolean()) throw Error(std::string("field '") + key + "' must be a boolean");
    return j[key].get<bool>();
}

}  // namespace detail

inline AnnotationRecord record_from_json(const json& j) {
    if (!j.is_object()) throw Error("record must be a JSON object");
    AnnotationRecord r;
    r.image_id = detail::required_string(j, "image_id");
    r.source_id = detail::required_string(j, "source_id");
    const auto task = parse_task(detail::required_string(j, "task"));
    if (!task) throw Error("unknown task '" + j["task"].get<std::string>() + "'");
    r.task = *task;
    r.category = detail::required_string(j, "category");
    r.text = detail::optional_string(j, "text");
    r.boxes = j.contains("boxes") && !j["boxes"].is_null() ? boxes_from_json(j["boxes"]) : std::vector<NormBox>{};
    const auto split = parse_split(detail::optional_string(j, "split").value_or("train"));
    if (!split) throw Error("unknown split '" + j["split"].get<std::string>() + "'");
    r.split = *split;
    if (j.contains("findings")) r.findings = findings_from_json(j["findings"]);
    r.id = detail::optional_string(j, "id");
    r.label = detail::optional_string(j, "label");
    r.has_abnormality = detail::optional_bool(j, "has_abnormality");
    r.has_device = detail::optional_bool(j, "has_device");
    return r;
}

inline json instance_to_json(const InstructionInstance& inst) {
    return {{"image_id", inst.image_id},
            {"source_id", inst.source_id},
            {"task", std::string(to_string(inst.task))},
            {"category", inst.category},
            {"instruction", inst.instruction},
            {"response", inst.response},
            {"structured", record_to_json(inst.structured)}};
}

inline InstructionInstance instance_from_json(const json& j) {
    if (!j.is_object()) throw Error("instance must be a JSON object");
    InstructionInstance inst;
    inst.structured = record_from_json(j.at("structured"));
    inst.image_id = detail::required_string(j, "image_id");
    inst.source_id = detail::required_string(j, "source_id");
    inst.task = inst.structured.task;
    inst.category = detail::required_string(j, "category");
    inst.instruction = detail::required_string(j, "instruction");
    inst.response = detail::required_string(j, "response");
    return inst;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw Error("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

/// Calls `fn(line_number, parsed)` for every non-blank line. Line numbers are 1-based.
inline void for_each_jsonl(const std::filesystem::path& path, const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(n, std::string("invalid JSON: ") + e.what());
        }
        fn(n, j);
    }
}

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a partial artifact.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string to_jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

inline std::string records_to_jsonl(const std::vector<AnnotationRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<AnnotationRecord> read_records_jsonl(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> out;
    for_each_jsonl(path, [&](std::size_t line, const json& j) {
        try {
            out.push_back(record_from_json(j));
        } catch (const FormatError&) {
            throw;
        } catch (const Error& e) {
            throw FormatError(line, e.what());
        } catch (const json::exception& e) {
            throw FormatError(line, e.what());
        }
    });
    return out;
}

}  // namespace cure
