#pragma once

#include <cctype>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cure/core.hpp"

namespace cure {

class ParseError : public Error {
public:
    ParseError(std::size_t position, std::string expected)
        : Error("parse error at " + std::to_string(position) + ": expected " + expected),
          position_(position),
          expected_(std::move(expected)) {}
    std::size_t position() const noexcept { return position_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t position_;
    std::string expected_;
};

enum class ParseMode { strict, lenient };

inline std::string_view to_string(ParseMode m) noexcept { return m == ParseMode::strict ? "strict" : "lenient"; }

/// Structured view of one model output.
///   PG:    location_or_phrase = phrase, boxes
///   AGRG:  location_or_phrase = location, boxes and/or description
///   GRG:   findings in report order (boxes is the concatenation)
struct ParsedOutput {
    Task task = Task::PG;
    std::string location_or_phrase;
    std::vector<NormBox> boxes;
    std::optional<std::string> description;
    std::vector<Finding> findings;
    bool salvaged = false;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Hand-written recursive-descent cursor for the strict grammar.
class Cursor {
public:
    explicit Cursor(std::string_view text) : text_(text) {}

    std::size_t pos() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ >= text_.size(); }
    std::string_view rest() const noexcept { return text_.substr(std::min(pos_, text_.size())); }
    char peek() const noexcept { return at_end() ? '\0' : text_[pos_]; }
    bool starts_with(std::string_view s) const noexcept { return rest().substr(0, s.size()) == s; }

    void expect(std::string_view literal) {
        if (!starts_with(literal)) throw ParseError(pos_, "\"" + std::string(literal) + "\"");
        pos_ += literal.size();
    }

    bool accept(std::string_view literal) {
        if (!starts_with(literal)) return false;
        pos_ += literal.size();
        return true;
    }

    void expect_end() {
        if (!at_end()) throw ParseError(pos_, "end of output");
    }

    /// Decimal numeral: -?digits(.digits)?
    double number() {
        const std::size_t start = pos_;
        if (peek() == '-') ++pos_;
        const std::size_t int_start = pos_;
        while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
        if (pos_ == int_start) throw ParseError(start, "decimal number");
        if (peek() == '.') {
            ++pos_;
            const std::size_t frac_start = pos_;
            while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
            if (pos_ == frac_start) throw ParseError(pos_, "digit after '.'");
        }
        double v = 0.0;
        const auto s = text_.substr(start, pos_ - start);
        std::from_chars(s.data(), s.data() + s.size(), v);
        return v;
    }

    /// Advances to the first occurrence of `literal` and returns the text skipped.
    std::string_view until(std::string_view literal, std::string_view what) {
        const auto idx = text_.find(literal, pos_);
        if (idx == std::string_view::npos) throw ParseError(pos_, std::string(what));
        auto out = text_.substr(pos_, idx - pos_);
        pos_ = idx;
        return out;
    }

    std::string_view take_rest() {
        auto out = rest();
        pos_ = text_.size();
        return out;
    }

    void set_pos(std::size_t p) noexcept { pos_ = p; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

/// Validates a raw coordinate 4-tuple; out-of-frame boxes are clamped and a
/// warning recorded. Returns nullopt (with reason) when the box is unusable.
inline std::optional<NormBox> checked_box(const NormBox& raw, std::vector<std::string>& warnings, std::string& reason) {
    if (!(raw.w > 0.0) || !(raw.h > 0.0)) {
        reason = "box with positive width and height";
        return std::nullopt;
    }
    const bool in_range = raw.cx >= 0.0 && raw.cx <= 1.0 && raw.cy >= 0.0 && raw.cy <= 1.0 && raw.w <= 1.0 &&
                          raw.h <= 1.0 && is_valid_box(raw);
    if (in_range) return raw;
    try {
        auto c = clamp_box(raw);
        warnings.push_back("clamped out-of-range box");
        return c;
    } catch (const EmptyAfterClamp&) {
        reason = "box inside the unit square";
        return std::nullopt;
    }
}

inline NormBox strict_box(Cursor& cur, std::vector<std::string>& warnings) {
    const std::size_t start = cur.pos();
    cur.expect("[");
    NormBox b;
    b.cx = cur.number();
    cur.expect(",");
    b.cy = cur.number();
    cur.expect(",");
    b.w = cur.number();
    cur.expect(",");
    b.h = cur.number();
    cur.expect("]");
    std::string reason;
    auto ok = checked_box(b, warnings, reason);
    if (!ok) throw ParseError(start, reason);
    return *ok;
}

/// box ( " "? box )*
inline std::vector<NormBox> strict_box_list(Cursor& cur, std::vector<std::string>& warnings) {
    std::vector<NormBox> boxes;
    boxes.push_back(strict_box(cur, warnings));
    for (;;) {
        if (cur.starts_with("[")) {
            boxes.push_back(strict_box(cur, warnings));
        } else if (cur.starts_with(" [")) {
            cur.accept(" ");
            boxes.push_back(strict_box(cur, warnings));
        } else {
            break;
        }
    }
    return boxes;
}

inline std::string nonempty(std::string_view s, std::size_t pos, const char* what) {
    if (trim(s).empty()) throw ParseError(pos, what);
    return std::string(s);
}

inline ParsedOutput parse_strict(std::string_view text, Task task) {
    ParsedOutput out;
    out.task = task;
    Cursor cur(text);
    switch (task) {
        case Task::PG:
        case Task::DETECTION: {
            out.location_or_phrase = nonempty(cur.until(": [", "\": [\" after phrase"), 0, "phrase");
            cur.expect(": ");
            out.boxes = strict_box_list(cur, out.warnings);
            cur.expect_end();
            out.findings.push_back({out.location_or_phrase, out.boxes});
            break;
        }
        case Task::AGRG_LOCATE: {
            cur.expect("Location of the ");
            const auto p = cur.pos();
            out.location_or_phrase = nonempty(cur.until(": [", "\": [\" after location"), p, "location");
            cur.expect(": ");
            out.boxes = strict_box_list(cur, out.warnings);
            cur.expect(".");
            cur.expect_end();
            break;
        }
        case Task::AGRG_DESCRIBE: {
            cur.expect("Description of the ");
            const auto p = cur.pos();
            out.location_or_phrase = nonempty(cur.until(": ", "\": \" after location"), p, "location");
            cur.expect(": ");
            const auto d = cur.pos();
            out.description = nonempty(cur.take_rest(), d, "description");
            break;
        }
        case Task::AGRG_BOTH: {
            cur.expect("Location of the ");
            const auto p = cur.pos();
            out.location_or_phrase = nonempty(cur.until(": [", "\": [\" after location"), p, "location");
            cur.expect(": ");
            out.boxes = strict_box_list(cur, out.warnings);
            cur.expect(". Description: ");
            const auto d = cur.pos();
            out.description = nonempty(cur.take_rest(), d, "description");
            break;
        }
        case Task::GRG: {
            // sentence := phrase ( " " box_list )? "."   report := sentence ( " " sentence )*
            while (true) {
                const std::size_t start = cur.pos();
                std::size_t end = start;
                const auto rest = cur.rest();
                std::size_t i = 0;
                bool boxed = false;
                for (; i < rest.size(); ++i) {
                    if (rest.substr(i, 2) == " [") {
                        boxed = true;
                        break;
                    }
                    if (rest[i] == '.' && (i + 1 == rest.size() || rest[i + 1] == ' ')) break;
                }
                if (i == rest.size()) throw ParseError(start + i, "\".\" ending the sentence");
                end = start + i;
                Finding f;
                f.phrase = nonempty(rest.substr(0, i), start, "finding phrase");
                cur.set_pos(end);
                if (boxed) {
                    cur.expect(" ");
                    f.boxes = strict_box_list(cur, out.warnings);
                }
                cur.expect(".");
                out.boxes.insert(out.boxes.end(), f.boxes.begin(), f.boxes.end());
                out.findings.push_back(std::move(f));
                if (cur.at_end()) break;
                cur.expect(" ");
            }
            break;
        }
    }
    return out;
}

struct BoxToken {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::optional<NormBox> box;
};

/// Finds "[a, b, c, d]" groups anywhere in the text, tolerating spaces.
inline std::vector<BoxToken> scan_box_groups(std::string_view text) {
    std::vector<BoxToken> out;
    std::size_t i = 0;
    while ((i = text.find('[', i)) != std::string_view::npos) {
        std::size_t j = i + 1;
        double vals[4];
        bool ok = true;
        for (int k = 0; k < 4 && ok; ++k) {
            while (j < text.size() && text[j] == ' ') ++j;
            const char* first = text.data() + j;
            const char* last = text.data() + text.size();
            if (j < text.size() && text[j] == '+') ++first;
            auto [ptr, ec] = std::from_chars(first, last, vals[k], std::chars_format::fixed);
            if (ec != std::errc()) {
                ok = false;
                break;
            }
            j = static_cast<std::size_t>(ptr - text.data());
            while (j < text.size() && text[j] == ' ') ++j;
            const char sep = k < 3 ? ',' : ']';
            if (j >= text.size() || text[j] != sep) ok = false;
            else ++j;
        }
        if (ok) {
            out.push_back({i, j, NormBox{vals[0], vals[1], vals[2], vals[3]}});
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

inline std::string clean_fragment(std::string_view s) {
    s = trim(s);
    while (!s.empty() && (s.back() == ':' || s.back() == ',' || s.back() == '-')) s = trim(s.substr(0, s.size() - 1));
    while (!s.empty() && (s.front() == '.' || s.front() == ',' || s.front() == ';')) s = trim(s.substr(1));
    while (!s.empty() && s.back() == '.') s = trim(s.substr(0, s.size() - 1));
    return std::string(s);
}

inline ParsedOutput parse_lenient(std::string_view text, Task task) {
    ParsedOutput out;
    out.task = task;
    out.salvaged = true;
    const auto groups = scan_box_groups(text);

    // Split into text chunks and box tokens, attaching each box to the
    // nearest preceding phrase fragment.
    std::string pending;
    bool pending_open = false;
    auto push_text = [&](std::string_view chunk) {
        std::size_t start = 0;
        for (;;) {
            const auto dot = chunk.find(". ", start);
            if (dot == std::string_view::npos) break;
            pending += std::string(chunk.substr(start, dot - start));
            if (auto p = clean_fragment(pending); !p.empty()) out.findings.push_back({p, {}});
            pending.clear();
            pending_open = false;
            start = dot + 2;
        }
        pending += std::string(chunk.substr(start));
        if (!trim(pending).empty()) pending_open = true;
    };
    std::size_t cursor = 0;
    for (const auto& g : groups) {
        push_text(text.substr(cursor, g.begin - cursor));
        cursor = g.end;
        std::string reason;
        auto b = checked_box(*g.box, out.warnings, reason);
        if (!b) {
            out.warnings.push_back("dropped box: expected " + reason);
            continue;
        }
        if (pending_open) {
            out.findings.push_back({clean_fragment(pending), {*b}});
            pending.clear();
            pending_open = false;
        } else if (!out.findings.empty()) {
            out.findings.back().boxes.push_back(*b);
        } else {
            out.findings.push_back({"", {*b}});
        }
        out.boxes.push_back(*b);
    }
    push_text(text.substr(cursor));
    if (auto p = clean_fragment(pending); !p.empty()) out.findings.push_back({p, {}});

    const std::string lower = to_lower(text);
    switch (task) {
        case Task::PG:
        case Task::DETECTION: {
            for (const auto& f : out.findings)
                if (!f.boxes.empty()) {
                    out.location_or_phrase = f.phrase;
                    break;
                }
            if (out.location_or_phrase.empty() && !out.findings.empty()) out.location_or_phrase = out.findings.front().phrase;
            break;
        }
        case Task::AGRG_LOCATE:
        case Task::AGRG_DESCRIBE:
        case Task::AGRG_BOTH: {
            for (std::string_view key : {"location of the ", "description of the "}) {
                if (auto at = lower.find(key); at != std::string::npos) {
                    const auto from = at + key.size();
                    const auto colon = text.find(':', from);
                    if (colon != std::string_view::npos) {
                        out.location_or_phrase = std::string(trim(text.substr(from, colon - from)));
                        break;
                    }
                }
            }
            std::optional<std::size_t> desc_from;
            if (auto at = lower.find("description:"); at != std::string::npos) {
                desc_from = at + std::string_view("description:").size();
            } else if (auto at2 = lower.find("description of the "); at2 != std::string::npos) {
                if (auto colon = text.find(':', at2); colon != std::string_view::npos) desc_from = colon + 1;
            }
            if (desc_from) {
                auto d = std::string(trim(text.substr(*desc_from)));
                if (!d.empty()) out.description = d;
            } else if (task == Task::AGRG_DESCRIBE) {
                std::string stripped;
                std::size_t c = 0;
                for (const auto& g : groups) {
                    stripped += std::string(text.substr(c, g.begin - c));
                    c = g.end;
                }
                stripped += std::string(text.substr(c));
                if (auto d = std::string(trim(stripped)); !d.empty()) out.description = d;
            }
            out.findings.clear();
            break;
        }
        case Task::GRG: break;
    }
    return out;
}

}  // namespace detail

/// Parses a grounded model output. Strict mode accepts only exact template
/// productions and throws ParseError; lenient mode never throws and sets
/// `salvaged` when the strict grammar did not match.
inline ParsedOutput parse_output(std::string_view text, Task task, ParseMode mode) {
    if (mode == ParseMode::strict) return detail::parse_strict(text, task);
    try {
        return detail::parse_strict(text, task);
    } catch (const ParseError&) {
        return detail::parse_lenient(text, task);
    }
}

/// Removes coordinate groups ("[0.1,0.2,0.3,0.4]") and normalizes the
/// whitespace they leave behind, including spaces before punctuation.
inline std::string strip_box_groups(std::string_view text) {
    std::string tmp;
    std::size_t cursor = 0;
    for (const auto& g : detail::scan_box_groups(text)) {
        tmp += std::string(text.substr(cursor, g.begin - cursor));
        tmp += ' ';
        cursor = g.end;
    }
    tmp += std::string(text.substr(cursor));

    std::string out;
    bool space = false;
    for (char c : tmp) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        const bool punct = c == '.' || c == ',' || c == ';' || c == ':';
        if (space && !out.empty() && !punct) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

}  // namespace cure
