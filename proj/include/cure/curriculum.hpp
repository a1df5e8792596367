#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cure/core.hpp"

namespace cure {

class NoMetrics : public Error {
public:
    NoMetrics() : Error("aggregate score needs at least one of IoU / text score") {}
};

class MissingMetrics : public Error {
public:
    explicit MissingMetrics(const std::string& what) : Error("missing metrics for " + what) {}
};

class EmptyLeaf : public Error {
public:
    EmptyLeaf(const std::string& source, const std::string& category)
        : Error("no records for source '" + source + "', category '" + category + "'") {}
};

enum class Strategy { natural, uniform, curriculum };
enum class Level { inter, intra };

inline std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::natural: return "natural";
        case Strategy::uniform: return "uniform";
        case Strategy::curriculum: return "curriculum";
    }
    return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) noexcept {
    for (Strategy x : {Strategy::natural, Strategy::uniform, Strategy::curriculum})
        if (to_string(x) == s) return x;
    return std::nullopt;
}

struct CurriculumConfig {
    double alpha = 0.8;
    long warmup_steps = 3000;
    long reweight_interval = 3000;
    long total_steps = 6000;
    Strategy inter_strategy = Strategy::curriculum;
    Strategy intra_strategy = Strategy::curriculum;
    std::map<std::string, std::size_t> eval_subset_sizes;
    std::size_t default_eval_subset = 100;
    double min_prob = 0.0;
    long batch_size = 1;

    std::size_t eval_subset_size(const std::string& source) const {
        auto it = eval_subset_sizes.find(source);
        return it == eval_subset_sizes.end() ? default_eval_subset : it->second;
    }
};

inline void validate(const CurriculumConfig& c) {
    if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw Error("alpha must lie in [0,1]");
    if (c.warmup_steps < 0 || c.total_steps < 0 || c.warmup_steps > c.total_steps) throw Error("need 0 <= warmup_steps <= total_steps");
    if (c.total_steps > c.warmup_steps && c.reweight_interval <= 0) throw Error("reweight_interval must be positive");
    if (!(c.min_prob >= 0.0 && c.min_prob < 1.0)) throw Error("min_prob must lie in [0,1)");
    if (c.batch_size <= 0) throw Error("batch_size must be positive");
}

struct CategoryMetric {
    std::optional<double> iou;
    std::optional<double> text_score;
};

/// Evaluation results for one source. AGRG sources may report categories
/// per subtask; `per_category` is the fallback for every subtask.
struct SourceMetrics {
    DataSourceId source;
    std::optional<double> iou;
    std::optional<double> text_score;
    std::map<std::string, CategoryMetric> per_category;
    std::map<Task, std::map<std::string, CategoryMetric>> per_subtask;
};

/// s = alpha*IoU + (1-alpha)*text. With one metric defined, s is that metric.
inline double aggregate_score(std::optional<double> iou, std::optional<double> text, double alpha) {
    if (iou && text) return alpha * *iou + (1.0 - alpha) * *text;
    if (iou) return *iou;
    if (text) return *text;
    throw NoMetrics();
}

inline double aggregate_score(const SourceMetrics& m, double alpha) { return aggregate_score(m.iou, m.text_score, alpha); }
inline double aggregate_score(const CategoryMetric& m, double alpha) { return aggregate_score(m.iou, m.text_score, alpha); }

/// p_i = e_i / sum(e); uniform when the errors sum to zero.
inline std::vector<double> normalize_errors(std::span<const double> errors) {
    if (errors.empty()) throw Error("normalize_errors needs at least one entry");
    double total = 0.0;
    for (double e : errors) {
        if (!std::isfinite(e) || e < 0.0) throw Error("errors must be finite and nonnegative");
        total += e;
    }
    std::vector<double> p(errors.size());
    if (total == 0.0) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(errors.size()));
        return p;
    }
    for (std::size_t i = 0; i < errors.size(); ++i) p[i] = errors[i] / total;
    return p;
}

struct DistributionInputs {
    std::vector<double> sizes;
    /// Aggregate scores (curriculum only); error = 1 - score.
    std::vector<std::optional<double>> scores;
    std::vector<std::string> names;
    TaskFamily family = TaskFamily::PG;
    double min_prob = 0.0;
};

namespace detail {

inline std::vector<double> apply_floor(std::vector<double> p, double min_prob) {
    if (min_prob <= 0.0) return p;
    double total = 0.0;
    for (auto& v : p) {
        v = std::max(v, min_prob);
        total += v;
    }
    for (auto& v : p) v /= total;
    return p;
}

}  // namespace detail

/// Sampling distribution for one level.
///   natural    p ∝ size
///   uniform    p = 1/K
///   curriculum p = normalize_errors(1 - score)
/// The GRG intra level is always uniform.
inline std::vector<double> build_distribution(Level level, Strategy strategy, const DistributionInputs& in) {
    const std::size_t k = std::max(in.sizes.size(), in.scores.size());
    if (k == 0) throw Error("distribution over zero entries");
    if (level == Level::intra && in.family == TaskFamily::GRG) strategy = Strategy::uniform;

    std::vector<double> p(k);
    switch (strategy) {
        case Strategy::uniform: std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(k)); break;
        case Strategy::natural: {
            if (in.sizes.size() != k) throw Error("natural sampling needs a size per entry");
            double total = 0.0;
            for (double s : in.sizes) {
                if (!(s >= 0.0) || !std::isfinite(s)) throw Error("sizes must be finite and nonnegative");
                total += s;
            }
            if (total == 0.0) throw Error("natural sampling over empty sources");
            for (std::size_t i = 0; i < k; ++i) p[i] = in.sizes[i] / total;
            break;
        }
        case Strategy::curriculum: {
            if (in.scores.size() != k) throw MissingMetrics("curriculum distribution");
            std::vector<double> errors(k);
            for (std::size_t i = 0; i < k; ++i) {
                if (!in.scores[i]) throw MissingMetrics(i < in.names.size() ? "'" + in.names[i] + "'" : "entry " + std::to_string(i));
                errors[i] = std::clamp(1.0 - *in.scores[i], 0.0, 1.0);
            }
            p = normalize_errors(errors);
            break;
        }
    }
    return detail::apply_floor(std::move(p), in.min_prob);
}

/// Category distribution inside one source (or one AGRG subtask).
struct CellState {
    std::optional<Task> subtask;
    std::vector<std::string> categories;
    std::vector<double> sizes;
    std::vector<std::optional<double>> errors;
    std::vector<double> probs;
};

struct SourceState {
    DataSourceId id;
    double size = 0.0;
    std::optional<double> score;
    std::optional<double> error;
    double prob = 0.0;
    std::vector<CellState> cells;
};

struct CurriculumState {
    int stage_index = 0;
    std::vector<SourceState> sources;

    const SourceState* find(const std::string& name) const {
        for (const auto& s : sources)
            if (s.id.name == name) return &s;
        return nullptr;
    }
};

/// Shape of the sampling tree: sources, their subtask cells and category sizes.
struct CellLayout {
    std::optional<Task> subtask;
    std::vector<std::pair<std::string, double>> categories;
};

struct SourceLayout {
    DataSourceId id;
    std::vector<CellLayout> cells;
};

/// Stage 0: uniform at both levels.
inline CurriculumState initial_state(std::span<const SourceLayout> layout) {
    if (layout.empty()) throw Error("curriculum needs at least one source");
    CurriculumState st;
    for (const auto& src : layout) {
        SourceState s;
        s.id = src.id;
        s.prob = 1.0 / static_cast<double>(layout.size());
        for (const auto& cell : src.cells) {
            if (cell.categories.empty()) throw Error("source '" + src.id.name + "' has an empty category set");
            CellState c;
            c.subtask = cell.subtask;
            for (const auto& [name, size] : cell.categories) {
                c.categories.push_back(name);
                c.sizes.push_back(size);
                s.size += size;
            }
            c.errors.assign(c.categories.size(), std::nullopt);
            c.probs.assign(c.categories.size(), 1.0 / static_cast<double>(c.categories.size()));
            s.cells.push_back(std::move(c));
        }
        if (s.cells.empty()) throw Error("source '" + src.id.name + "' has no categories");
        st.sources.push_back(std::move(s));
    }
    return st;
}

namespace detail {

inline const CategoryMetric* find_category(const SourceMetrics& m, const std::optional<Task>& subtask, const std::string& cat) {
    if (subtask) {
        if (auto it = m.per_subtask.find(*subtask); it != m.per_subtask.end())
            if (auto jt = it->second.find(cat); jt != it->second.end()) return &jt->second;
    }
    if (auto it = m.per_category.find(cat); it != m.per_category.end()) return &it->second;
    return nullptr;
}

}  // namespace detail

/// Computes the next stage's distributions from evaluation metrics.
///
/// Curriculum strategies need metrics for every source. Inside a cell,
/// categories the evaluation subset did not cover take the mean error of
/// the covered ones; a cell with no covered category is an error.
inline CurriculumState advance_stage(const CurriculumConfig& cfg, const CurriculumState& state, std::span<const SourceMetrics> metrics) {
    CurriculumState next = state;
    next.stage_index = state.stage_index + 1;

    auto metrics_for = [&](const std::string& name) -> const SourceMetrics* {
        for (const auto& m : metrics)
            if (m.source.name == name) return &m;
        return nullptr;
    };

    DistributionInputs inter;
    inter.min_prob = cfg.min_prob;
    for (auto& s : next.sources) {
        inter.sizes.push_back(s.size);
        inter.names.push_back(s.id.name);
        const auto* m = metrics_for(s.id.name);
        s.score.reset();
        s.error.reset();
        if (m && (m->iou || m->text_score)) {
            s.score = aggregate_score(*m, cfg.alpha);
            s.error = 1.0 - *s.score;
        }
        if (cfg.inter_strategy == Strategy::curriculum && !s.score) throw MissingMetrics("source '" + s.id.name + "'");
        inter.scores.push_back(s.score);
    }
    const auto inter_p = build_distribution(Level::inter, cfg.inter_strategy, inter);
    for (std::size_t i = 0; i < next.sources.size(); ++i) next.sources[i].prob = inter_p[i];

    for (auto& s : next.sources) {
        const auto* m = metrics_for(s.id.name);
        for (auto& cell : s.cells) {
            DistributionInputs intra;
            intra.family = s.id.task;
            intra.min_prob = cfg.min_prob;
            intra.sizes = cell.sizes;
            intra.names = cell.categories;
            std::vector<std::optional<double>> scores(cell.categories.size());
            double sum = 0.0;
            std::size_t covered = 0;
            for (std::size_t c = 0; c < cell.categories.size(); ++c) {
                const CategoryMetric* cm = m ? detail::find_category(*m, cell.subtask, cell.categories[c]) : nullptr;
                if (cm && (cm->iou || cm->text_score)) {
                    scores[c] = aggregate_score(*cm, cfg.alpha);
                    sum += *scores[c];
                    ++covered;
                }
            }
            for (std::size_t c = 0; c < scores.size(); ++c) cell.errors[c] = scores[c] ? std::optional<double>(1.0 - *scores[c]) : std::nullopt;
            const bool needs = cfg.intra_strategy == Strategy::curriculum && s.id.task != TaskFamily::GRG;
            if (needs) {
                if (covered == 0) {
                    std::string where = "categories of source '" + s.id.name + "'";
                    if (cell.subtask) where += " subtask " + std::string(to_string(*cell.subtask));
                    throw MissingMetrics(where);
                }
                const double mean = sum / static_cast<double>(covered);
                for (auto& sc : scores)
                    if (!sc) sc = mean;
            }
            intra.scores = std::move(scores);
            cell.probs = build_distribution(Level::intra, cfg.intra_strategy, intra);
        }
    }
    return next;
}

/// Record indices arranged by source → cell → category, aligned with a
/// CurriculumState built from the same pool.
struct PoolIndex {
    std::vector<SourceLayout> layout;
    std::vector<std::vector<std::vector<std::vector<std::size_t>>>> leaves;
};

/// Groups records by source_id (first-appearance order), then by AGRG
/// subtask, then by category (lexicographic). Mixed task families within
/// one source are rejected.
inline PoolIndex index_pool(std::span<const AnnotationRecord> records) {
    PoolIndex idx;
    std::map<std::string, std::size_t> source_pos;
    std::vector<std::map<std::optional<Task>, std::map<std::string, std::vector<std::size_t>>>> tree;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const TaskFamily fam = family_of(r.task);
        auto [it, inserted] = source_pos.emplace(r.source_id, idx.layout.size());
        if (inserted) {
            idx.layout.push_back({{r.source_id, fam}, {}});
            tree.emplace_back();
        } else if (idx.layout[it->second].id.task != fam) {
            throw Error("source '" + r.source_id + "' mixes task families");
        }
        std::optional<Task> sub;
        if (fam == TaskFamily::AGRG) sub = r.task;
        tree[it->second][sub][r.category].push_back(i);
    }
    idx.leaves.resize(tree.size());
    for (std::size_t s = 0; s < tree.size(); ++s) {
        for (const auto& [sub, cats] : tree[s]) {
            CellLayout cell{sub, {}};
            std::vector<std::vector<std::size_t>> cell_leaves;
            for (const auto& [cat, ids] : cats) {
                cell.categories.emplace_back(cat, static_cast<double>(ids.size()));
                cell_leaves.push_back(ids);
            }
            idx.layout[s].cells.push_back(std::move(cell));
            idx.leaves[s].push_back(std::move(cell_leaves));
        }
    }
    return idx;
}

struct DrawnSample {
    std::size_t source = 0;
    std::size_t cell = 0;
    std::size_t category = 0;
    std::size_t record = 0;
};

template <class Rng>
std::size_t draw_index(std::span<const double> probs, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        acc += probs[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

/// Hierarchical draw with replacement: source ~ inter, AGRG subtask ~
/// uniform, category ~ intra, record ~ uniform within the category.
template <class Rng>
DrawnSample draw_sample(const CurriculumState& state, const PoolIndex& pool, Rng& rng) {
    std::vector<double> inter;
    inter.reserve(state.sources.size());
    for (const auto& s : state.sources) inter.push_back(s.prob);
    DrawnSample d;
    d.source = draw_index<Rng>(inter, rng);
    const auto& src = state.sources[d.source];
    d.cell = src.cells.size() == 1 ? 0 : uniform_index(rng, src.cells.size());
    const auto& cell = src.cells[d.cell];
    d.category = draw_index<Rng>(cell.probs, rng);

    if (d.source >= pool.leaves.size() || d.cell >= pool.leaves[d.source].size() ||
        d.category >= pool.leaves[d.source][d.cell].size() || pool.leaves[d.source][d.cell][d.category].empty())
        throw EmptyLeaf(src.id.name, cell.categories[d.category]);
    const auto& leaf = pool.leaves[d.source][d.cell][d.category];
    d.record = leaf[uniform_index(rng, leaf.size())];
    return d;
}

// ---------------------------------------------------------------------------
// Closed loop

/// Evaluation provider driven by the curriculum loop.
class Learner {
public:
    virtual ~Learner() = default;
    virtual void observe(const AnnotationRecord& sample) = 0;
    virtual std::vector<SourceMetrics> evaluate(int stage, std::span<const AnnotationRecord> subset) = 0;
};

class LearnerFailure : public Error {
public:
    LearnerFailure(int stage, const std::string& what) : Error("learner failed at stage " + std::to_string(stage) + ": " + what) {}
};

/// e(n) = e0 * exp(-k n) + floor
struct SimCategoryParams {
    double e0 = 0.5;
    double k = 0.001;
    double floor = 0.05;
};

inline double simulated_error(const SimCategoryParams& p, double n) { return p.e0 * std::exp(-p.k * n) + p.floor; }

/// Deterministic parametric stand-in for a model: per-category error decays
/// exponentially with the number of training samples seen. Reports IoU = 1 - e.
class SimulatedLearner : public Learner {
public:
    explicit SimulatedLearner(SimCategoryParams defaults = {}) : defaults_(defaults) {}

    void set_params(const std::string& source, const std::string& category, SimCategoryParams p) { params_[{source, category}] = p; }

    const SimCategoryParams& params(const std::string& source, const std::string& category) const {
        auto it = params_.find({source, category});
        return it == params_.end() ? defaults_ : it->second;
    }

    void observe(const AnnotationRecord& r) override { ++counts_[{r.source_id, r.category}]; }

    double seen(const std::string& source, const std::string& category) const {
        auto it = counts_.find({source, category});
        return it == counts_.end() ? 0.0 : it->second;
    }

    double error(const std::string& source, const std::string& category) const {
        return simulated_error(params(source, category), seen(source, category));
    }

    std::vector<SourceMetrics> evaluate(int /*stage*/, std::span<const AnnotationRecord> subset) override {
        std::map<std::string, std::vector<const AnnotationRecord*>> by_source;
        std::vector<std::string> order;
        for (const auto& r : subset) {
            if (!by_source.count(r.source_id)) order.push_back(r.source_id);
            by_source[r.source_id].push_back(&r);
        }
        std::vector<SourceMetrics> out;
        for (const auto& name : order) out.push_back(step(name, by_source[name]));
        return out;
    }

    /// Metrics for one source given the evaluated records and current counts.
    SourceMetrics step(const std::string& source, std::span<const AnnotationRecord* const> items) const {
        SourceMetrics m;
        m.source.name = source;
        if (!items.empty()) m.source.task = family_of(items.front()->task);
        double sum = 0.0;
        for (const auto* r : items) {
            const double q = std::clamp(1.0 - error(source, r->category), 0.0, 1.0);
            sum += q;
            m.per_category[r->category].iou = q;
            if (m.source.task == TaskFamily::AGRG) m.per_subtask[r->task][r->category].iou = q;
        }
        if (!items.empty()) m.iou = sum / static_cast<double>(items.size());
        return m;
    }

private:
    SimCategoryParams defaults_;
    std::map<std::pair<std::string, std::string>, SimCategoryParams> params_;
    std::map<std::pair<std::string, std::string>, double> counts_;
};

struct StageLog {
    int index = 0;
    long start_step = 0;
    long steps = 0;
    CurriculumState state;
    /// samples drawn per [source][cell][category]
    std::vector<std::vector<std::vector<long>>> samples_per_cell;
    std::vector<SourceMetrics> metrics_after;
};

struct CurriculumRun {
    std::vector<StageLog> stages;
    std::vector<SourceMetrics> final_metrics;
};

/// Number of stages: one warm-up stage plus ceil((total - warmup) / interval).
inline int stage_count(const CurriculumConfig& cfg) {
    if (cfg.total_steps <= cfg.warmup_steps) return 1;
    return 1 + static_cast<int>((cfg.total_steps - cfg.warmup_steps + cfg.reweight_interval - 1) / cfg.reweight_interval);
}

/// Stratified random evaluation subset for one source: categories (per
/// subtask) are visited round-robin in sorted order, each shuffled with the
/// stage seed. Uses the source's val split, or all its records if it has none.
inline std::vector<AnnotationRecord> eval_subset(std::span<const AnnotationRecord> records, const std::string& source,
                                                 std::size_t size, std::uint64_t seed, int stage) {
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> strata;
    bool any_val = false;
    for (const auto& r : records)
        if (r.source_id == source && r.split == Split::val) any_val = true;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.source_id != source || (any_val && r.split != Split::val)) continue;
        strata[{std::string(to_string(r.task)), r.category}].push_back(i);
    }
    std::mt19937_64 rng(derive_seed(seed, "eval/" + source, static_cast<std::uint64_t>(stage)));
    std::vector<std::vector<std::size_t>> groups;
    for (auto& [key, ids] : strata) {
        shuffle(rng, ids);
        groups.push_back(ids);
    }
    std::vector<AnnotationRecord> out;
    for (std::size_t round = 0; out.size() < size; ++round) {
        bool any = false;
        for (const auto& g : groups) {
            if (round < g.size() && out.size() < size) {
                out.push_back(records[g[round]]);
                any = true;
            }
        }
        if (!any) break;
    }
    return out;
}

/// Warm-up stage, then cyclic evaluate/re-weight stages until total_steps.
/// Training draws come from the train split of `pool`.
inline CurriculumRun run_curriculum(const CurriculumConfig& cfg, std::span<const AnnotationRecord> pool, Learner& learner, std::uint64_t seed) {
    validate(cfg);
    std::vector<AnnotationRecord> train;
    for (const auto& r : pool)
        if (r.split == Split::train) train.push_back(r);
    if (train.empty()) throw Error("pool has no train-split records");
    const PoolIndex index = index_pool(train);
    CurriculumState state = initial_state(index.layout);

    std::mt19937_64 rng(derive_seed(seed, "draw", 0));
    CurriculumRun run;
    const int stages = stage_count(cfg);
    long consumed = 0;
    for (int k = 0; k < stages; ++k) {
        StageLog log;
        log.index = k;
        log.start_step = consumed;
        log.steps = k == 0 ? cfg.warmup_steps : std::min(cfg.reweight_interval, cfg.total_steps - consumed);
        log.state = state;
        log.samples_per_cell.resize(state.sources.size());
        for (std::size_t s = 0; s < state.sources.size(); ++s) {
            log.samples_per_cell[s].resize(state.sources[s].cells.size());
            for (std::size_t c = 0; c < state.sources[s].cells.size(); ++c)
                log.samples_per_cell[s][c].assign(state.sources[s].cells[c].categories.size(), 0);
        }
        for (long step = 0; step < log.steps * cfg.batch_size; ++step) {
            const auto d = draw_sample(state, index, rng);
            ++log.samples_per_cell[d.source][d.cell][d.category];
            learner.observe(train[d.record]);
        }
        consumed += log.steps;

        std::vector<AnnotationRecord> subset;
        for (const auto& s : state.sources) {
            auto part = eval_subset(pool, s.id.name, cfg.eval_subset_size(s.id.name), seed, k);
            subset.insert(subset.end(), part.begin(), part.end());
        }
        try {
            log.metrics_after = learner.evaluate(k, subset);
        } catch (const std::exception& e) {
            throw LearnerFailure(k, e.what());
        }
        const bool last = k + 1 == stages;
        if (!last) state = advance_stage(cfg, state, log.metrics_after);
        else run.final_metrics = log.metrics_after;
        run.stages.push_back(std::move(log));
    }
    return run;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

inline nlohmann::json category_metric_json(const CategoryMetric& m) { return {{"iou", opt_json(m.iou)}, {"text_score", opt_json(m.text_score)}}; }

inline CategoryMetric category_metric_from(const nlohmann::json& j) {
    if (j.is_number()) return {j.get<double>(), std::nullopt};
    return {opt_double(j, "iou"), opt_double(j, "text_score")};
}

}  // namespace detail

inline nlohmann::json metrics_to_json(const SourceMetrics& m) {
    nlohmann::json pc = nlohmann::json::object();
    for (const auto& [c, v] : m.per_category) pc[c] = detail::category_metric_json(v);
    nlohmann::json ps = nlohmann::json::object();
    for (const auto& [t, cats] : m.per_subtask) {
        nlohmann::json jc = nlohmann::json::object();
        for (const auto& [c, v] : cats) jc[c] = detail::category_metric_json(v);
        ps[std::string(to_string(t))] = jc;
    }
    return {{"source", m.source.name},
            {"task", std::string(to_string(m.source.task))},
            {"iou", detail::opt_json(m.iou)},
            {"text_score", detail::opt_json(m.text_score)},
            {"per_category", pc},
            {"per_subtask", ps}};
}

inline SourceMetrics metrics_from_json(const nlohmann::json& j) {
    SourceMetrics m;
    m.source.name = j.at("source").get<std::string>();
    if (j.contains("task")) {
        auto f = parse_task_family(j["task"].get<std::string>());
        if (!f) throw Error("unknown task family in metrics: " + j["task"].get<std::string>());
        m.source.task = *f;
    }
    m.iou = detail::opt_double(j, "iou");
    m.text_score = detail::opt_double(j, "text_score");
    if (j.contains("per_category"))
        for (const auto& [c, v] : j["per_category"].items()) m.per_category[c] = detail::category_metric_from(v);
    if (j.contains("per_subtask"))
        for (const auto& [t, cats] : j["per_subtask"].items()) {
            auto task = parse_task(t);
            if (!task) throw Error("unknown subtask in metrics: " + t);
            for (const auto& [c, v] : cats.items()) m.per_subtask[*task][c] = detail::category_metric_from(v);
        }
    for (auto v : {m.iou, m.text_score})
        if (v && !(*v >= 0.0 && *v <= 1.0)) throw Error("metric values must lie in [0,1]");
    return m;
}

inline std::vector<SourceMetrics> metrics_list_from_json(const nlohmann::json& j) {
    std::vector<SourceMetrics> out;
    const auto& arr = j.is_object() && j.contains("sources") ? j["sources"] : j;
    if (!arr.is_array()) throw Error("metrics must be a JSON array of source entries");
    for (const auto& e : arr) out.push_back(metrics_from_json(e));
    return out;
}

inline nlohmann::json state_to_json(const CurriculumState& st) {
    nlohmann::json sources = nlohmann::json::array();
    for (const auto& s : st.sources) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : s.cells) {
            nlohmann::json cats = nlohmann::json::array();
            for (std::size_t i = 0; i < c.categories.size(); ++i)
                cats.push_back({{"name", c.categories[i]}, {"size", c.sizes[i]}, {"error", detail::opt_json(c.errors[i])}, {"prob", c.probs[i]}});
            cells.push_back({{"subtask", c.subtask ? nlohmann::json(std::string(to_string(*c.subtask))) : nlohmann::json(nullptr)},
                             {"categories", cats}});
        }
        sources.push_back({{"source", s.id.name},
                           {"task", std::string(to_string(s.id.task))},
                           {"size", s.size},
                           {"score", detail::opt_json(s.score)},
                           {"error", detail::opt_json(s.error)},
                           {"prob", s.prob},
                           {"cells", cells}});
    }
    return {{"stage_index", st.stage_index}, {"sources", sources}};
}

inline CurriculumState state_from_json(const nlohmann::json& j) {
    CurriculumState st;
    st.stage_index = j.value("stage_index", 0);
    for (const auto& s : j.at("sources")) {
        SourceState ss;
        ss.id.name = s.at("source").get<std::string>();
        auto fam = parse_task_family(s.at("task").get<std::string>());
        if (!fam) throw Error("unknown task family in weights");
        ss.id.task = *fam;
        ss.size = s.value("size", 0.0);
        ss.score = detail::opt_double(s, "score");
        ss.error = detail::opt_double(s, "error");
        ss.prob = s.at("prob").get<double>();
        for (const auto& c : s.at("cells")) {
            CellState cs;
            if (!c.at("subtask").is_null()) cs.subtask = parse_task(c["subtask"].get<std::string>());
            for (const auto& cat : c.at("categories")) {
                cs.categories.push_back(cat.at("name").get<std::string>());
                cs.sizes.push_back(cat.value("size", 0.0));
                cs.errors.push_back(detail::opt_double(cat, "error"));
                cs.probs.push_back(cat.at("prob").get<double>());
            }
            ss.cells.push_back(std::move(cs));
        }
        st.sources.push_back(std::move(ss));
    }
    return st;
}

inline nlohmann::json run_to_json(const CurriculumRun& run) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : run.stages) {
        nlohmann::json counts = nlohmann::json::object();
        for (std::size_t i = 0; i < s.state.sources.size(); ++i) {
            const auto& src = s.state.sources[i];
            nlohmann::json per = nlohmann::json::object();
            for (std::size_t c = 0; c < src.cells.size(); ++c) {
                const std::string key = src.cells[c].subtask ? std::string(to_string(*src.cells[c].subtask)) : "all";
                nlohmann::json cats = nlohmann::json::object();
                for (std::size_t k = 0; k < src.cells[c].categories.size(); ++k) cats[src.cells[c].categories[k]] = s.samples_per_cell[i][c][k];
                per[key] = cats;
            }
            counts[src.id.name] = per;
        }
        nlohmann::json metrics = nlohmann::json::array();
        for (const auto& m : s.metrics_after) metrics.push_back(metrics_to_json(m));
        stages.push_back({{"index", s.index},
                          {"start_step", s.start_step},
                          {"steps", s.steps},
                          {"weights", state_to_json(s.state)},
                          {"samples_per_cell", counts},
                          {"metrics_after", metrics}});
    }
    nlohmann::json fin = nlohmann::json::array();
    for (const auto& m : run.final_metrics) fin.push_back(metrics_to_json(m));
    return {{"stages", stages}, {"final_metrics", fin}};
}

inline CurriculumConfig config_from_json(const nlohmann::json& j) {
    CurriculumConfig c;
    c.alpha = j.value("alpha", c.alpha);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.reweight_interval = j.value("reweight_interval", c.reweight_interval);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.min_prob = j.value("min_prob", c.min_prob);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.default_eval_subset = j.value("default_eval_subset", c.default_eval_subset);
    auto strat = [&](const char* key, Strategy& dst) {
        if (!j.contains(key)) return;
        auto s = parse_strategy(j[key].get<std::string>());
        if (!s) throw Error(std::string("unknown strategy for ") + key + ": " + j[key].get<std::string>());
        dst = *s;
    };
    strat("inter_strategy", c.inter_strategy);
    strat("intra_strategy", c.intra_strategy);
    if (j.contains("eval_subset_sizes"))
        for (const auto& [k, v] : j["eval_subset_sizes"].items()) c.eval_subset_sizes[k] = v.get<std::size_t>();
    validate(c);
    return c;
}

inline nlohmann::json config_to_json(const CurriculumConfig& c) {
    return {{"alpha", c.alpha},
            {"warmup_steps", c.warmup_steps},
            {"reweight_interval", c.reweight_interval},
            {"total_steps", c.total_steps},
            {"inter_strategy", std::string(to_string(c.inter_strategy))},
            {"intra_strategy", std::string(to_string(c.intra_strategy))},
            {"eval_subset_sizes", c.eval_subset_sizes},
            {"default_eval_subset", c.default_eval_subset},
            {"min_prob", c.min_prob},
            {"batch_size", c.batch_size}};
}

/// Source layout from a config document:
///   {"name": "...", "task": "PG|GRG|AGRG", "categories": {cat: size}}
///   AGRG may use "subtasks": {"AGRG_LOCATE": {cat: size}, ...}
inline std::vector<SourceLayout> layout_from_json(const nlohmann::json& sources) {
    std::vector<SourceLayout> out;
    for (const auto& s : sources) {
        SourceLayout l;
        l.id.name = s.at("name").get<std::string>();
        auto fam = parse_task_family(s.at("task").get<std::string>());
        if (!fam) throw Error("unknown task family '" + s["task"].get<std::string>() + "'");
        l.id.task = *fam;
        auto read_cats = [](const nlohmann::json& cats) {
            std::vector<std::pair<std::string, double>> v;
            for (const auto& [k, n] : cats.items()) v.emplace_back(k, n.get<double>());
            return v;
        };
        if (s.contains("subtasks")) {
            for (const auto& [t, cats] : s["subtasks"].items()) {
                auto task = parse_task(t);
                if (!task) throw Error("unknown subtask '" + t + "'");
                l.cells.push_back({task, read_cats(cats)});
            }
        } else {
            l.cells.push_back({std::nullopt, read_cats(s.at("categories"))});
        }
        out.push_back(std::move(l));
    }
    return out;
}

}  // namespace cure
