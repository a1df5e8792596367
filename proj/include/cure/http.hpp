#pragma once

// Network boundaries: the judge endpoint and a remote curriculum learner.
// Kept apart from the rest of the library so that only code talking to the
// network pulls in httplib.

#include <chrono>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cure/curriculum.hpp"
#include "cure/io.hpp"
#include "cure/judge.hpp"

namespace cure {

namespace detail {

/// Splits "http://host:port/path" into ("http://host:port", "/path").
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error("URL '" + url + "' has no scheme");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

inline std::string post_json(const std::string& url, const std::string& body, const std::map<std::string, std::string>& headers,
                             std::chrono::milliseconds timeout) {
    const auto [origin, path] = split_url(url);
    httplib::Client cli(origin);
    if (!cli.is_valid()) throw TransportFailure(TransportFailure::Kind::transport, "unsupported endpoint '" + origin + "'");
    const auto sec = static_cast<time_t>(timeout.count() / 1000);
    const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);

    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
        if (k == "Content-Type") content_type = v;
        else h.emplace(k, v);
    }
    const auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(path, h, body, content_type);
    if (!res) {
        const auto err = res.error();
        const bool slow = std::chrono::steady_clock::now() - start >= timeout;
        const auto kind = err == httplib::Error::ConnectionTimeout || (err == httplib::Error::Read && slow)
                              ? TransportFailure::Kind::timeout
                              : TransportFailure::Kind::transport;
        throw TransportFailure(kind, httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300)
        throw TransportFailure(TransportFailure::Kind::transport, "HTTP status " + std::to_string(res->status));
    return res->body;
}

}  // namespace detail

class HttpJudgeTransport : public JudgeTransport {
public:
    std::string post(const std::string& url, const std::string& body, const std::map<std::string, std::string>& headers,
                     std::chrono::milliseconds timeout) override {
        return detail::post_json(url, body, headers, timeout);
    }
};

/// Learner behind an HTTP endpoint. Training samples are buffered and
/// shipped with the next evaluation request:
///   POST {"stage": k, "train": [records...], "eval": [records...]}
///   -> [SourceMetrics...]
class HttpLearner : public Learner {
public:
    HttpLearner(std::string url, std::chrono::milliseconds timeout) : url_(std::move(url)), timeout_(timeout) {}

    void observe(const AnnotationRecord& sample) override { pending_.push_back(record_to_json(sample)); }

    std::vector<SourceMetrics> evaluate(int stage, std::span<const AnnotationRecord> subset) override {
        json eval = json::array();
        for (const auto& r : subset) eval.push_back(record_to_json(r));
        const json body{{"stage", stage}, {"train", std::move(pending_)}, {"eval", std::move(eval)}};
        pending_ = json::array();
        std::string reply;
        try {
            reply = detail::post_json(url_, body.dump(), {{"Content-Type", "application/json"}}, timeout_);
        } catch (const TransportFailure& f) {
            throw LearnerFailure(stage, f.what());
        }
        try {
            return metrics_list_from_json(json::parse(reply));
        } catch (const json::exception& e) {
            throw LearnerFailure(stage, std::string("bad metrics reply: ") + e.what());
        }
    }

private:
    std::string url_;
    std::chrono::milliseconds timeout_;
    json pending_ = json::array();
};

}  // namespace cure
