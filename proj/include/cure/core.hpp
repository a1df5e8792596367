#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cure {

/// Base class for every domain error raised by the toolkit. The CLI maps
/// these to exit code 1; anything else is treated as an internal failure.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyAfterClamp : public Error {
public:
    EmptyAfterClamp() : Error("box is empty after clamping to the unit square") {}
};

class FormatError : public Error {
public:
    FormatError(std::size_t line, const std::string& reason)
        : Error("line " + std::to_string(line) + ": " + reason), line_(line), reason_(reason) {}
    std::size_t line() const noexcept { return line_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::string reason_;
};

inline constexpr double kBoxEps = 1e-9;

/// Axis-aligned box in normalized image coordinates (center/size form).
struct NormBox {
    double cx = 0.5;
    double cy = 0.5;
    double w = 0.0;
    double h = 0.0;

    friend bool operator==(const NormBox&, const NormBox&) = default;
};

/// Corner form of a box. Also used for raw rectangles that need not lie
/// inside the unit square (geometry helpers accept those).
struct Rect {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }
    bool empty() const noexcept { return !(x2 > x1) || !(y2 > y1); }

    friend bool operator==(const Rect&, const Rect&) = default;
};

inline Rect box_corners(const NormBox& b) noexcept {
    return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

inline NormBox from_corners(const Rect& r) noexcept {
    return {(r.x1 + r.x2) / 2.0, (r.y1 + r.y2) / 2.0, r.x2 - r.x1, r.y2 - r.y1};
}

inline Rect intersect(const Rect& a, const Rect& b) noexcept {
    return {std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
}

/// Intersects the box with [0,1]^2. Throws EmptyAfterClamp when nothing is left.
inline NormBox clamp_box(const NormBox& b) {
    const Rect r = box_corners(b);
    const Rect c{std::clamp(r.x1, 0.0, 1.0), std::clamp(r.y1, 0.0, 1.0), std::clamp(r.x2, 0.0, 1.0),
                 std::clamp(r.y2, 0.0, 1.0)};
    if (c.empty()) throw EmptyAfterClamp();
    // Boxes already inside the frame are returned bit-for-bit.
    if (c == r) return b;
    return from_corners(c);
}

inline bool is_valid_box(const NormBox& b) noexcept {
    if (!(b.w > 0.0) || !(b.h > 0.0)) return false;
    const Rect r = box_corners(b);
    return r.x1 >= -kBoxEps && r.y1 >= -kBoxEps && r.x2 <= 1.0 + kBoxEps && r.y2 <= 1.0 + kBoxEps;
}

enum class Task { PG, GRG, AGRG_LOCATE, AGRG_DESCRIBE, AGRG_BOTH, DETECTION };

/// Sources are grouped by the supervision family of their tasks; the three
/// AGRG subtasks belong to one family.
enum class TaskFamily { PG, GRG, AGRG };

enum class Split { train, val, test };

inline std::string_view to_string(Task t) noexcept {
    switch (t) {
        case Task::PG: return "PG";
        case Task::GRG: return "GRG";
        case Task::AGRG_LOCATE: return "AGRG_LOCATE";
        case Task::AGRG_DESCRIBE: return "AGRG_DESCRIBE";
        case Task::AGRG_BOTH: return "AGRG_BOTH";
        case Task::DETECTION: return "DETECTION";
    }
    return "?";
}

inline std::string_view to_string(TaskFamily f) noexcept {
    switch (f) {
        case TaskFamily::PG: return "PG";
        case TaskFamily::GRG: return "GRG";
        case TaskFamily::AGRG: return "AGRG";
    }
    return "?";
}

inline std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline std::optional<Task> parse_task(std::string_view s) noexcept {
    for (Task t : {Task::PG, Task::GRG, Task::AGRG_LOCATE, Task::AGRG_DESCRIBE, Task::AGRG_BOTH, Task::DETECTION})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

inline std::optional<TaskFamily> parse_task_family(std::string_view s) noexcept {
    for (TaskFamily f : {TaskFamily::PG, TaskFamily::GRG, TaskFamily::AGRG})
        if (to_string(f) == s) return f;
    return std::nullopt;
}

inline std::optional<Split> parse_split(std::string_view s) noexcept {
    for (Split x : {Split::train, Split::val, Split::test})
        if (to_string(x) == s) return x;
    return std::nullopt;
}

inline TaskFamily family_of(Task t) noexcept {
    switch (t) {
        case Task::GRG: return TaskFamily::GRG;
        case Task::AGRG_LOCATE:
        case Task::AGRG_DESCRIBE:
        case Task::AGRG_BOTH: return TaskFamily::AGRG;
        case Task::PG:
        case Task::DETECTION: return TaskFamily::PG;
    }
    return TaskFamily::PG;
}

inline bool task_has_boxes(Task t) noexcept { return t != Task::AGRG_DESCRIBE; }
inline bool task_has_text(Task t) noexcept {
    return t == Task::AGRG_DESCRIBE || t == Task::AGRG_BOTH || t == Task::GRG;
}

/// One grounded sentence of a report: phrase plus zero or more boxes.
/// Findings without boxes are global (text-only) sentences.
struct Finding {
    std::string phrase;
    std::vector<NormBox> boxes;

    friend bool operator==(const Finding&, const Finding&) = default;
};

/// One image/finding unit before rendering. For GRG records the report
/// lives in `findings`; every other task uses `text` and `boxes`.
struct AnnotationRecord {
    std::string image_id;
    std::string source_id;
    Task task = Task::PG;
    std::string category;
    std::optional<std::string> text;
    std::vector<NormBox> boxes;
    Split split = Split::train;

    std::vector<Finding> findings;
    std::optional<std::string> id;
    std::optional<std::string> label;
    std::optional<bool> has_abnormality;
    std::optional<bool> has_device;

    /// Sample key used when joining predictions against gold records.
    std::string key() const { return id ? *id : image_id; }

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// A dataset/task pair; PadChest-PG and PadChest-GRG are distinct sources.
struct DataSourceId {
    std::string name;
    TaskFamily task = TaskFamily::PG;

    friend bool operator==(const DataSourceId&, const DataSourceId&) = default;
    friend auto operator<=>(const DataSourceId&, const DataSourceId&) = default;
};

struct InstructionInstance {
    std::string image_id;
    std::string source_id;
    Task task = Task::PG;
    std::string category;
    std::string instruction;
    std::string response;
    AnnotationRecord structured;

    friend bool operator==(const InstructionInstance&, const InstructionInstance&) = default;
};

// Small deterministic RNG helpers. std::*_distribution output is
// implementation-defined, so seeded artifacts use these instead.

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// seed = hash(global_seed, key, index)
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(global_seed ^ fnv1a64(key)) + index);
}

template <class Rng>
double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Rng>
double uniform_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Unbiased integer in [0, n).
template <class Rng>
std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

template <class Rng, class T>
void shuffle(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace cure
