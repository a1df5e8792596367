#pragma once

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>
#include <openssl/sha.h>

#include "cure/core.hpp"
#include "cure/io.hpp"

namespace cure {

// ---------------------------------------------------------------------------
// Prompts

/// NLI / hallucination judge prompt. The generated mini-report and the
/// ground-truth report are appended after the [GEN] and [GT] markers.
inline constexpr std::string_view kJudgePrompt =
    R"(You are an expert radiologist. Your task is to compare a short anatomy-specific mini-report [GEN] against a full image ground-truth report [GT], where [GT] was generated by a radiologist over the entire image, whereas [GEN] was generated by a model over a specific anatomical location. You will assess the degree of hallucination and contradiction in [GEN] compared to [GT].

First, independently assess each report:
- If [GT] explicitly affirms the presence of any abnormality, set "gt_has_abnormalities" to "yes". Otherwise, set it to "no".
- If [GT] explicitly affirms the presence of any medical device (e.g., pacemaker, catheter, wires), set "gt_has_devices" to "yes". Otherwise, set it to "no".
- If [GEN] explicitly affirms the presence of any abnormality, set "gen_has_abnormalities" to "yes". Otherwise, set it to "no".
- If [GEN] explicitly affirms the presence of any medical device (e.g., pacemaker, catheter, wires), set "gen_has_devices" to "yes". Otherwise, set it to "no".

Next, perform the comparison based on [GT]:
- If [GEN] affirms the presence of an abnormality and this is clearly supported or reasonably suggested by [GT], set "gen_has_correct_abnormalities" to "yes". Otherwise, set it to "no".
- If [GEN] affirms the presence of an abnormality that is NOT affirmed nor supported by [GT], set "gen_has_hallucinated_abnormalities" to "yes". Otherwise, set it to "no".
- If [GEN] affirms the presence of a device that is clearly supported or reasonably suggested by [GT], set "gen_has_correct_devices" to "yes". Otherwise, set it to "no".
- If [GEN] affirms the presence of a device that is NOT affirmed nor supported by [GT], set "gen_has_hallucinated_devices" to "yes". Otherwise, set it to "no".
- Natural Language Inference:
    - If [GEN] makes at least one explicit statement that is clearly contradicted by [GT], set "nli_status" to "contradiction".
    - If all of [GEN]'s explicit statements are reasonably supported by [GT], set "nli_status" to "entailment".
    - Otherwise, set "nli_status" to "neutral".

You must respond ONLY with a single, valid JSON object in the following format. Do not add any text before or after the JSON object.

{
    "reason": "A detailed explanation of your reasoning for the comparison. Include a brief explanation of why you made your choices for each field. Focus on what is explicitly stated in [GEN] and [GT]. Do not make any assumptions about what is not explicitly stated.",
    "gt_has_abnormalities": "yes" | "no",
    "gt_has_devices": "yes" | "no",
    "gen_has_abnormalities": "yes" | "no",
    "gen_has_devices": "yes" | "no",
    "gen_has_correct_abnormalities": "yes" | "no",
    "gen_has_hallucinated_abnormalities": "yes" | "no",
    "gen_has_correct_devices": "yes" | "no",
    "gen_has_hallucinated_devices": "yes" | "no",
    "nli_status": "contradiction" | "entailment" | "neutral"
})";

/// Location-specific mini-report synthesis prompt (shipped for reference; not executed).
inline constexpr std::string_view kMiniReportPrompt =
    R"(You will be provided with a chest x-ray report and a specified anatomical location. Your task is to generate a JSON object in the following format: {"reasoning": "", "mini-report": ""}

Guidelines:

- reasoning: Begin your reasoning by identifying and naming anatomical regions in close proximity to the specified location. Then, briefly summarize the report as a sequence of findings/observations. Lastly, identify all findings relevant to the specified location. A finding or observation is relevant if it meets any of the following criteria: (1) it explicitly describes the specified anatomical location; (2) it explicitly describes a region anatomically very close to the specified location, where the description is highly likely to also apply to the specified location; (3) it makes a general description from which it logically and with absolute certainty follows that the description applies to the specified location as a specific instance (e.g., "both lungs are clear" implies "the right lung is clear"; "no bone abnormalities" implies "the right clavicle presents no abnormalities"); or (4) it describes devices, tubes, or other objects traversing or situated within the specified anatomical location. Present your reasoning as a single, continuous paragraph, strictly avoiding newlines and special characters.
- mini-report: From the relevant information identified in your reasoning, synthesize a concise and accurate mini-report, written in a style consistent with a radiologist's findings, specifically detailing the findings related to the specified anatomical location.
- If the report contains no findings or descriptions pertinent to the specified anatomical location, set the value of "mini-report" to "N/A".
- Make sure to use JSON format as shown above.)";

/// Abnormality / device labeling prompt used for benchmark stratification
/// (shipped for reference; the toolkit reads the flags from record metadata).
inline constexpr std::string_view kAbnormalityLabelPrompt =
    R"(You will be provided with a chest X-ray report or sentence. Your task is to analyze the text and determine:

1. Whether any abnormalities or pathologies are mentioned.
2. Whether any medical devices or foreign objects are mentioned.

Output format:
Return a JSON object with the following fields:

{
  "reason": "A brief explanation of your reasoning.",
  "mentions_abnormalities": "yes" | "no",
  "mentions_devices": "yes" | "no"
})";

class EmptyInput : public Error {
public:
    EmptyInput() : Error("judge prompt needs non-empty generated and ground-truth text") {}
};

inline std::string build_judge_prompt(std::string_view gen, std::string_view gt_report) {
    if (gen.empty() || gt_report.empty()) throw EmptyInput();
    std::string out(kJudgePrompt);
    out += "\n\n[GEN]\n";
    out += gen;
    out += "\n\n[GT]\n";
    out += gt_report;
    out += '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Verdicts

enum class NliStatus { contradiction, entailment, neutral };

inline std::string_view to_string(NliStatus s) noexcept {
    switch (s) {
        case NliStatus::contradiction: return "contradiction";
        case NliStatus::entailment: return "entailment";
        case NliStatus::neutral: return "neutral";
    }
    return "?";
}

struct JudgeVerdict {
    std::string reason;
    bool gt_has_abnormalities = false;
    bool gt_has_devices = false;
    bool gen_has_abnormalities = false;
    bool gen_has_devices = false;
    bool gen_has_correct_abnormalities = false;
    bool gen_has_hallucinated_abnormalities = false;
    bool gen_has_correct_devices = false;
    bool gen_has_hallucinated_devices = false;
    NliStatus nli_status = NliStatus::neutral;

    friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

class MalformedJson : public Error {
public:
    explicit MalformedJson(const std::string& why) : Error("malformed judge JSON: " + why) {}
};

class VerdictMissingField : public Error {
public:
    explicit VerdictMissingField(std::string name) : Error("judge verdict is missing field '" + name + "'"), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class IllegalValue : public Error {
public:
    IllegalValue(std::string field, std::string got)
        : Error("illegal value for '" + field + "': " + got), field_(std::move(field)), got_(std::move(got)) {}
    const std::string& field() const noexcept { return field_; }
    const std::string& got() const noexcept { return got_; }

private:
    std::string field_;
    std::string got_;
};

namespace detail {

/// Extent of the first balanced {...} object, skipping braces inside strings.
inline std::optional<std::string_view> first_json_object(std::string_view raw) {
    const auto start = raw.find('{');
    if (start == std::string_view::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (escape) escape = false;
            else if (c == '\\') escape = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return raw.substr(start, i - start + 1);
    }
    return std::nullopt;
}

}  // namespace detail

inline constexpr std::string_view kVerdictFlags[] = {
    "gt_has_abnormalities",          "gt_has_devices",
    "gen_has_abnormalities",         "gen_has_devices",
    "gen_has_correct_abnormalities", "gen_has_hallucinated_abnormalities",
    "gen_has_correct_devices",       "gen_has_hallucinated_devices",
};

/// Parses the first JSON object in the judge's reply. Enum values must be
/// exact lowercase strings unless `lenient_case` is set.
inline JudgeVerdict validate_verdict(std::string_view raw, bool lenient_case = false) {
    const auto obj = detail::first_json_object(raw);
    if (!obj) throw MalformedJson("no JSON object found");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(*obj);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedJson(e.what());
    }

    auto text_of = [&](std::string_view key) -> std::string {
        const std::string k(key);
        if (!j.contains(k)) throw VerdictMissingField(k);
        if (!j[k].is_string()) throw IllegalValue(k, j[k].dump());
        std::string v = j[k].get<std::string>();
        if (lenient_case)
            for (auto& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return v;
    };

    JudgeVerdict v;
    if (!j.contains("reason")) throw VerdictMissingField("reason");
    if (!j["reason"].is_string()) throw IllegalValue("reason", j["reason"].dump());
    v.reason = j["reason"].get<std::string>();

    bool* flags[] = {&v.gt_has_abnormalities,          &v.gt_has_devices,
                     &v.gen_has_abnormalities,         &v.gen_has_devices,
                     &v.gen_has_correct_abnormalities, &v.gen_has_hallucinated_abnormalities,
                     &v.gen_has_correct_devices,       &v.gen_has_hallucinated_devices};
    for (std::size_t i = 0; i < std::size(kVerdictFlags); ++i) {
        const auto s = text_of(kVerdictFlags[i]);
        if (s == "yes") *flags[i] = true;
        else if (s == "no") *flags[i] = false;
        else throw IllegalValue(std::string(kVerdictFlags[i]), s);
    }
    const auto nli = text_of("nli_status");
    if (nli == "contradiction") v.nli_status = NliStatus::contradiction;
    else if (nli == "entailment") v.nli_status = NliStatus::entailment;
    else if (nli == "neutral") v.nli_status = NliStatus::neutral;
    else throw IllegalValue("nli_status", nli);
    return v;
}

inline nlohmann::json verdict_to_json(const JudgeVerdict& v) {
    auto yn = [](bool b) { return b ? "yes" : "no"; };
    return {{"reason", v.reason},
            {"gt_has_abnormalities", yn(v.gt_has_abnormalities)},
            {"gt_has_devices", yn(v.gt_has_devices)},
            {"gen_has_abnormalities", yn(v.gen_has_abnormalities)},
            {"gen_has_devices", yn(v.gen_has_devices)},
            {"gen_has_correct_abnormalities", yn(v.gen_has_correct_abnormalities)},
            {"gen_has_hallucinated_abnormalities", yn(v.gen_has_hallucinated_abnormalities)},
            {"gen_has_correct_devices", yn(v.gen_has_correct_devices)},
            {"gen_has_hallucinated_devices", yn(v.gen_has_hallucinated_devices)},
            {"nli_status", std::string(to_string(v.nli_status))}};
}

// ---------------------------------------------------------------------------
// Aggregation

/// Rates in percent over the anatomy's n verdicts.
struct AnatomyStats {
    std::string anatomy;
    std::size_t n = 0;
    double abn_halluc_rate = 0.0;
    double abn_correct_rate = 0.0;
    double dev_halluc_rate = 0.0;
    double dev_correct_rate = 0.0;
    double contradiction_rate = 0.0;
    double entailment_rate = 0.0;
    double neutral_rate = 0.0;
};

struct HallucinationTable {
    std::vector<AnatomyStats> rows;  // sorted by anatomy
    AnatomyStats mean;               // unweighted mean over anatomies
    std::size_t verdict_failures = 0;  // malformed replies, excluded from every denominator
};

inline HallucinationTable aggregate_verdicts(std::span<const std::pair<std::string, JudgeVerdict>> rows,
                                             std::size_t verdict_failures = 0) {
    struct Counts {
        std::size_t n = 0, ah = 0, ac = 0, dh = 0, dc = 0, con = 0, ent = 0, neu = 0;
    };
    std::map<std::string, Counts> by;
    for (const auto& [anatomy, v] : rows) {
        auto& c = by[anatomy];
        ++c.n;
        c.ah += v.gen_has_hallucinated_abnormalities;
        c.ac += v.gen_has_correct_abnormalities;
        c.dh += v.gen_has_hallucinated_devices;
        c.dc += v.gen_has_correct_devices;
        c.con += v.nli_status == NliStatus::contradiction;
        c.ent += v.nli_status == NliStatus::entailment;
        c.neu += v.nli_status == NliStatus::neutral;
    }
    HallucinationTable t;
    t.verdict_failures = verdict_failures;
    t.mean.anatomy = "Mean Anatomies";
    for (const auto& [anatomy, c] : by) {
        auto pct = [&](std::size_t k) { return 100.0 * static_cast<double>(k) / static_cast<double>(c.n); };
        AnatomyStats s{anatomy, c.n, pct(c.ah), pct(c.ac), pct(c.dh), pct(c.dc), pct(c.con), pct(c.ent), pct(c.neu)};
        t.mean.n += s.n;
        t.mean.abn_halluc_rate += s.abn_halluc_rate;
        t.mean.abn_correct_rate += s.abn_correct_rate;
        t.mean.dev_halluc_rate += s.dev_halluc_rate;
        t.mean.dev_correct_rate += s.dev_correct_rate;
        t.mean.contradiction_rate += s.contradiction_rate;
        t.mean.entailment_rate += s.entailment_rate;
        t.mean.neutral_rate += s.neutral_rate;
        t.rows.push_back(s);
    }
    if (!t.rows.empty()) {
        const double k = static_cast<double>(t.rows.size());
        for (double* r : {&t.mean.abn_halluc_rate, &t.mean.abn_correct_rate, &t.mean.dev_halluc_rate, &t.mean.dev_correct_rate,
                          &t.mean.contradiction_rate, &t.mean.entailment_rate, &t.mean.neutral_rate})
            *r /= k;
    }
    return t;
}

inline nlohmann::json stats_to_json(const AnatomyStats& s) {
    return {{"anatomy", s.anatomy},
            {"n", s.n},
            {"abn_halluc_rate", s.abn_halluc_rate},
            {"abn_correct_rate", s.abn_correct_rate},
            {"dev_halluc_rate", s.dev_halluc_rate},
            {"dev_correct_rate", s.dev_correct_rate},
            {"contradiction_rate", s.contradiction_rate},
            {"entailment_rate", s.entailment_rate},
            {"neutral_rate", s.neutral_rate}};
}

inline nlohmann::json table_to_json(const HallucinationTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) rows.push_back(stats_to_json(r));
    return {{"rows", rows}, {"mean", stats_to_json(t.mean)}, {"verdict_failures", t.verdict_failures}};
}

// ---------------------------------------------------------------------------
// Client

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest) {
        out += hex[b >> 4];
        out += hex[b & 0xf];
    }
    return out;
}

class JudgeCallError : public Error {
public:
    JudgeCallError(const std::string& kind, const std::string& what, std::string request_hash)
        : Error(kind + " (request " + request_hash + "): " + what), request_hash_(std::move(request_hash)) {}
    const std::string& request_hash() const noexcept { return request_hash_; }

private:
    std::string request_hash_;
};

class TransportError : public JudgeCallError {
public:
    TransportError(const std::string& what, const std::string& hash) : JudgeCallError("transport error", what, hash) {}
};

class TimeoutError : public JudgeCallError {
public:
    TimeoutError(const std::string& what, const std::string& hash) : JudgeCallError("timeout", what, hash) {}
};

class RetriesExhausted : public JudgeCallError {
public:
    RetriesExhausted(int attempts, const std::string& last, const std::string& hash)
        : JudgeCallError("retries exhausted after " + std::to_string(attempts) + " attempts", last, hash), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

/// Failure modes a transport reports back to the client.
struct TransportFailure : std::runtime_error {
    enum class Kind { transport, timeout };
    TransportFailure(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
    Kind kind;
};

/// POSTs a JSON body and returns the response body. Implementations throw
/// TransportFailure on connection problems, timeouts and non-2xx statuses.
class JudgeTransport {
public:
    virtual ~JudgeTransport() = default;
    virtual std::string post(const std::string& url, const std::string& body, const std::map<std::string, std::string>& headers,
                             std::chrono::milliseconds timeout) = 0;
};

struct EndpointConfig {
    std::string url;
    std::string model;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff{500};
    std::string api_key_env;
    bool cache = true;
    std::optional<std::filesystem::path> cache_dir;
};

/// Judge client with exponential-backoff retries and a content-addressed
/// verdict cache keyed on (model, prompt). Thread-safe.
class JudgeClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    JudgeClient(EndpointConfig cfg, std::shared_ptr<JudgeTransport> transport,
                Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleeper)) {
        if (!transport_) throw Error("judge client needs a transport");
        if (cfg_.max_retries < 0) throw Error("max_retries must be nonnegative");
    }

    static std::string request_hash(std::string_view model, std::string_view prompt) {
        std::string key(model);
        key += '\0';
        key += prompt;
        return sha256_hex(key);
    }

    std::string call(const std::string& prompt) {
        const std::string hash = request_hash(cfg_.model, prompt);
        if (cfg_.cache) {
            if (auto hit = lookup(hash)) return *hit;
        }
        const std::string body = nlohmann::json{{"model", cfg_.model}, {"prompt", prompt}}.dump();
        std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
        if (!cfg_.api_key_env.empty())
            if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) headers["Authorization"] = std::string("Bearer ") + key;

        std::string last;
        auto delay = cfg_.backoff;
        const int attempts = cfg_.max_retries + 1;
        for (int attempt = 1; attempt <= attempts; ++attempt) {
            try {
                std::string reply = transport_->post(cfg_.url, body, headers, cfg_.timeout);
                if (cfg_.cache) store(hash, reply);
                return reply;
            } catch (const TransportFailure& f) {
                last = f.what();
                if (attempts == 1) {
                    if (f.kind == TransportFailure::Kind::timeout) throw TimeoutError(last, hash);
                    throw TransportError(last, hash);
                }
            }
            if (attempt < attempts) {
                sleep_(delay);
                delay *= 2;
            }
        }
        throw RetriesExhausted(attempts, last, hash);
    }

    std::size_t cache_size() const {
        std::lock_guard lock(mu_);
        return memory_.size();
    }

private:
    std::optional<std::string> lookup(const std::string& hash) const {
        {
            std::lock_guard lock(mu_);
            if (auto it = memory_.find(hash); it != memory_.end()) return it->second;
        }
        if (cfg_.cache_dir) {
            const auto p = *cfg_.cache_dir / (hash + ".txt");
            if (std::filesystem::exists(p)) {
                auto text = read_text_file(p);
                std::lock_guard lock(mu_);
                memory_.emplace(hash, text);
                return text;
            }
        }
        return std::nullopt;
    }

    void store(const std::string& hash, const std::string& reply) {
        {
            std::lock_guard lock(mu_);
            memory_[hash] = reply;
        }
        if (cfg_.cache_dir) {
            std::filesystem::create_directories(*cfg_.cache_dir);
            write_atomic(*cfg_.cache_dir / (hash + ".txt"), reply);
        }
    }

    EndpointConfig cfg_;
    std::shared_ptr<JudgeTransport> transport_;
    Sleeper sleep_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::string, std::string> memory_;
};

/// Single-shot convenience wrapper.
inline std::string call_judge(const std::string& prompt, const EndpointConfig& cfg, std::shared_ptr<JudgeTransport> transport) {
    JudgeClient client(cfg, std::move(transport));
    return client.call(prompt);
}

}  // namespace cure
