#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmd/core.hpp"
#include "dmd/datastore.hpp"
#include "dmd/dictionary.hpp"
#include "dmd/features.hpp"
#include "dmd/guidance_explicit.hpp"
#include "dmd/guidance_implicit.hpp"
#include "dmd/judgment.hpp"
#include "dmd/lemmatizer.hpp"
#include "dmd/llm.hpp"
#include "dmd/prompt.hpp"

namespace dmd {

// ---- metrics -----------------------------------------------------------------

/// Metaphorical is the positive class. An unparsed prediction is counted
/// only in `unparsed` (and `unparsed_positive` when the gold label is
/// positive); it is wrong for accuracy and a miss for F1, never a false
/// positive.
struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    std::size_t unparsed = 0;
    std::size_t unparsed_positive = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn + unparsed; }

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

using ScoredPair = std::pair<Label, std::optional<Label>>;

inline ConfusionCounts score(std::span<const ScoredPair> pairs) {
    ConfusionCounts c;
    for (const auto& [gold, pred] : pairs) {
        const bool pos = gold == Label::Metaphorical;
        if (!pred) {
            ++c.unparsed;
            if (pos) ++c.unparsed_positive;
        } else if (*pred == Label::Metaphorical) {
            pos ? ++c.tp : ++c.fp;
        } else {
            pos ? ++c.fn : ++c.tn;
        }
    }
    return c;
}

inline double accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw EmptyEvaluation();
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

/// 2tp / (2tp + fp + fn), with unparsed positives counted as misses; 0.0
/// when the denominator is 0.
inline double f1(const ConfusionCounts& c) {
    if (c.total() == 0) throw EmptyEvaluation();
    const auto denom = 2 * c.tp + c.fp + c.fn + c.unparsed_positive;
    return denom == 0 ? 0.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

inline double precision(const ConfusionCounts& c) {
    const auto denom = c.tp + c.fp;
    return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double recall(const ConfusionCounts& c) {
    const auto denom = c.tp + c.fn + c.unparsed_positive;
    return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

/// Arithmetic mean and sample standard deviation (divisor n-1; 0 for n==1).
inline std::pair<double, double> mean_std(std::span<const double> xs) {
    if (xs.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// ---- pipeline ----------------------------------------------------------------

enum class Mode { Full, ImplicitOnly, ExplicitOnly };

inline std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::Full: return "full";
        case Mode::ImplicitOnly: return "implicit_only";
        case Mode::ExplicitOnly: return "explicit_only";
    }
    return "full";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
    const auto l = util::to_lower(s);
    if (l == "full") return Mode::Full;
    if (l == "implicit" || l == "implicit_only" || l == "img") return Mode::ImplicitOnly;
    if (l == "explicit" || l == "explicit_only" || l == "exg") return Mode::ExplicitOnly;
    return std::nullopt;
}

inline bool uses_implicit(Mode m) { return m != Mode::ExplicitOnly; }
inline bool uses_explicit(Mode m) { return m != Mode::ImplicitOnly; }

/// Everything a detection needs. The store and encoder are only required
/// in modes that use implicit guidance.
struct Pipeline {
    std::shared_ptr<Gateway> gateway;
    LlmConfig llm;
    std::shared_ptr<const Datastore> store;
    std::shared_ptr<const EmbeddingProvider> encoder;
    HeadWeights weights;
    std::size_t k = kDefaultK;
    std::shared_ptr<DictionaryProvider> dictionary;
    Lemmatizer lemmatizer;
    TheoryTexts theory = TheoryTexts::defaults();
    TemplateSet templates;
    ExplicitOptions explicit_options;
    JudgeOptions judge_options;
    /// Use these steps instead of asking the model.
    std::optional<ThoughtChain> fixed_thoughts;
    /// Samples processed concurrently within a run.
    std::size_t jobs = 1;

    void validate(Mode mode) const {
        if (!gateway) throw ConfigError("pipeline has no LLM gateway");
        llm.validate();
        theory.validate();
        if (k == 0) throw ConfigError("k must be >= 1");
        if (uses_implicit(mode)) {
            if (!store) throw ConfigError("implicit guidance needs a datastore");
            if (!encoder) throw ConfigError("implicit guidance needs an embedding provider");
            weights.validate();
            if (!store->empty() && 2 * weights.head_dim() != store->dim())
                throw ConfigError("head weights produce " + std::to_string(2 * weights.head_dim()) +
                                  "-dim keys but the store holds " + std::to_string(store->dim()) + "-dim keys");
        }
    }
};

/// Per-sample record kept in run reports.
struct SampleOutcome {
    std::string sample_id;
    std::optional<Label> gold;
    std::optional<Label> predicted;
    std::optional<GuidedResponse> implicit;
    std::optional<GuidedResponse> explicit_;
    std::optional<std::string> judge_text;
    std::optional<Agreement> agreement;
    std::size_t llm_calls = 0;
    std::optional<std::string> error;
};

inline ThoughtCache make_thought_cache(const Pipeline& p) {
    return p.fixed_thoughts ? ThoughtCache(*p.fixed_thoughts) : ThoughtCache();
}

/// Runs the stages `mode` calls for on one sample, filling `out` as each
/// stage completes. Stage errors propagate.
inline void run_stages(const Pipeline& p, const Sample& sample, Mode mode, const std::string& run_id,
                       ThoughtCache& thoughts, SampleOutcome& out) {
    out.sample_id = sample.id();
    out.gold = sample.label();
    const CallContext ctx{run_id, sample.id(), Stage::Implicit};
    if (uses_implicit(mode)) {
        out.implicit = run_implicit(*p.gateway, p.llm, *p.store, sample, *p.encoder, p.weights, p.k,
                                    p.templates.implicit, ctx);
    }
    if (uses_explicit(mode)) {
        out.explicit_ = run_explicit(*p.gateway, p.llm, sample, p.dictionary.get(), p.lemmatizer, p.theory,
                                     p.templates, thoughts, ctx, p.explicit_options);
    }
    switch (mode) {
        case Mode::ImplicitOnly: out.predicted = out.implicit->answer; break;
        case Mode::ExplicitOnly: out.predicted = out.explicit_->answer; break;
        case Mode::Full: {
            auto v = run_judgment(*p.gateway, p.llm, *out.implicit, *out.explicit_, sample, p.templates, ctx,
                                  p.judge_options);
            out.judge_text = v.judge_text;
            out.agreement = v.agreement;
            out.predicted = v.final_answer;
            break;
        }
    }
}

/// run_stages() with errors caught and recorded; `predicted` stays empty
/// for a failed sample.
inline SampleOutcome detect_sample(const Pipeline& p, const Sample& sample, Mode mode, const std::string& run_id,
                                   ThoughtCache& thoughts) {
    SampleOutcome out;
    try {
        run_stages(p, sample, mode, run_id, thoughts, out);
    } catch (const std::exception& e) {
        out.predicted.reset();
        out.error = e.what();
    }
    out.llm_calls = p.gateway->call_count(run_id, sample.id());
    return out;
}

struct RunReport {
    Mode mode = Mode::Full;
    std::string run_id;
    std::size_t k = kDefaultK;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
    std::vector<SampleOutcome> per_sample;
};

struct AggregateReport {
    Mode mode = Mode::Full;
    std::vector<RunReport> runs;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    double mean_f1 = 0.0;
    double std_f1 = 0.0;
};

inline ConfusionCounts score_outcomes(const std::vector<SampleOutcome>& outcomes) {
    std::vector<ScoredPair> pairs;
    pairs.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        if (!o.gold) throw UnlabeledSample(o.sample_id);
        pairs.emplace_back(*o.gold, o.predicted);
    }
    return score(pairs);
}

/// Fills means and standard deviations from `runs`.
inline void aggregate(AggregateReport& agg) {
    std::vector<double> accs, f1s;
    for (const auto& r : agg.runs) {
        accs.push_back(r.accuracy);
        f1s.push_back(r.f1);
    }
    std::tie(agg.mean_acc, agg.std_acc) = mean_std(accs);
    std::tie(agg.mean_f1, agg.std_f1) = mean_std(f1s);
}

/// One pass over `samples`. Explicit-guidance thoughts are prepared before
/// the samples are dispatched and charged to the first sample.
inline RunReport run_once(const Pipeline& p, const std::vector<Sample>& samples, Mode mode, std::string run_id,
                          std::uint64_t seed) {
    RunReport rep;
    rep.mode = mode;
    rep.run_id = std::move(run_id);
    rep.k = p.k;
    rep.seed = seed;
    auto thoughts = make_thought_cache(p);
    if (uses_explicit(mode) && !samples.empty() && !p.explicit_options.per_sample_thoughts) {
        try {
            thoughts.get(*p.gateway, p.llm, p.theory, p.templates.thoughts,
                         {rep.run_id, samples.front().id(), Stage::Thoughts});
        } catch (const std::exception&) {
            // Left empty; each sample retries and records its own failure.
        }
    }
    rep.per_sample.resize(samples.size());
    const std::size_t jobs = std::max<std::size_t>(1, std::min(p.jobs, samples.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < samples.size(); ++i)
            rep.per_sample[i] = detect_sample(p, samples[i], mode, rep.run_id, thoughts);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < samples.size();)
                    rep.per_sample[i] = detect_sample(p, samples[i], mode, rep.run_id, thoughts);
            });
        }
    }
    rep.counts = score_outcomes(rep.per_sample);
    rep.accuracy = accuracy(rep.counts);
    rep.f1 = f1(rep.counts);
    return rep;
}

struct EvalOptions {
    std::size_t runs = 3;
    std::uint64_t base_seed = 0;
    /// Balanced per-class sample size; unset evaluates every sample.
    std::optional<std::size_t> n_per_class;
};

/// Run r draws its balanced subset with seed base_seed + r.
inline AggregateReport evaluate(const Pipeline& p, const Dataset& ds, Mode mode, const EvalOptions& opts) {
    if (opts.runs == 0) throw ConfigError("runs must be >= 1");
    p.validate(mode);
    for (const auto& s : ds.samples)
        if (!s.label()) throw UnlabeledSample(s.id());
    AggregateReport agg;
    agg.mode = mode;
    for (std::size_t r = 0; r < opts.runs; ++r) {
        const std::uint64_t seed = opts.base_seed + r;
        const auto subset = opts.n_per_class ? balanced_sample(ds, *opts.n_per_class, seed) : ds;
        if (subset.samples.empty()) throw EmptyEvaluation();
        agg.runs.push_back(
            run_once(p, subset.samples, mode, std::string(to_string(mode)) + "/run" + std::to_string(r), seed));
    }
    aggregate(agg);
    return agg;
}

inline std::vector<AggregateReport> ablate(const Pipeline& p, const Dataset& ds, const EvalOptions& opts) {
    std::vector<AggregateReport> out;
    for (auto m : {Mode::Full, Mode::ImplicitOnly, Mode::ExplicitOnly}) out.push_back(evaluate(p, ds, m, opts));
    return out;
}

// ---- report I/O ----------------------------------------------------------------

namespace detail {

inline json opt_label(const std::optional<Label>& l) {
    return l ? json(std::string(to_string(*l))) : json(nullptr);
}

inline std::optional<Label> label_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return parse_label(j.get<std::string>());
}

inline json response_json(const GuidedResponse& r) {
    return {{"answer", opt_label(r.answer)}, {"explanation", r.explanation}, {"prompt_digest", r.prompt_digest}};
}

inline GuidedResponse response_from(const json& j, Stage stage) {
    return {stage, label_from(j.at("answer")), j.at("explanation").get<std::string>(),
            j.at("prompt_digest").get<std::string>()};
}

}  // namespace detail

inline json counts_to_json(const ConfusionCounts& c) {
    return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn},
            {"unparsed", c.unparsed}, {"unparsed_positive", c.unparsed_positive}};
}

inline json outcome_to_json(const SampleOutcome& o) {
    json j{{"sample_id", o.sample_id},
           {"gold", detail::opt_label(o.gold)},
           {"predicted", detail::opt_label(o.predicted)},
           {"llm_calls", o.llm_calls}};
    if (o.implicit) j["implicit"] = detail::response_json(*o.implicit);
    if (o.explicit_) j["explicit"] = detail::response_json(*o.explicit_);
    if (o.judge_text) j["judge"] = {{"text", *o.judge_text}, {"agreement", std::string(to_string(*o.agreement))}};
    if (o.error) j["error"] = *o.error;
    return j;
}

inline SampleOutcome outcome_from_json(const json& j) {
    SampleOutcome o;
    o.sample_id = j.at("sample_id").get<std::string>();
    o.gold = detail::label_from(j.at("gold"));
    o.predicted = detail::label_from(j.at("predicted"));
    o.llm_calls = j.at("llm_calls").get<std::size_t>();
    if (j.contains("implicit")) o.implicit = detail::response_from(j["implicit"], Stage::Implicit);
    if (j.contains("explicit")) o.explicit_ = detail::response_from(j["explicit"], Stage::Explicit);
    if (j.contains("judge")) {
        o.judge_text = j["judge"].at("text").get<std::string>();
        const auto a = j["judge"].at("agreement").get<std::string>();
        o.agreement = a == "agree" ? Agreement::Agree : a == "conflict" ? Agreement::Conflict : Agreement::Partial;
    }
    if (j.contains("error")) o.error = j["error"].get<std::string>();
    return o;
}

inline json run_to_json(const RunReport& r) {
    json per = json::array();
    for (const auto& o : r.per_sample) per.push_back(outcome_to_json(o));
    return {{"run_id", r.run_id}, {"mode", std::string(to_string(r.mode))},
            {"k", r.k},           {"seed", r.seed},
            {"accuracy", r.accuracy}, {"f1", r.f1},
            {"counts", counts_to_json(r.counts)}, {"per_sample", std::move(per)}};
}

inline json aggregate_to_json(const AggregateReport& a) {
    json runs = json::array();
    for (const auto& r : a.runs) runs.push_back(run_to_json(r));
    return {{"mode", std::string(to_string(a.mode))},
            {"runs", std::move(runs)},
            {"mean_acc", a.mean_acc},
            {"std_acc", a.std_acc},
            {"mean_f1", a.mean_f1},
            {"std_f1", a.std_f1}};
}

inline RunReport run_from_json(const json& j) {
    RunReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.mode = parse_mode(j.at("mode").get<std::string>()).value_or(Mode::Full);
    r.k = j.at("k").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.f1 = j.at("f1").get<double>();
    const auto& c = j.at("counts");
    r.counts = {c.at("tp").get<std::size_t>(),  c.at("fp").get<std::size_t>(),
                c.at("tn").get<std::size_t>(),  c.at("fn").get<std::size_t>(),
                c.at("unparsed").get<std::size_t>(), c.at("unparsed_positive").get<std::size_t>()};
    for (const auto& o : j.at("per_sample")) r.per_sample.push_back(outcome_from_json(o));
    return r;
}

inline AggregateReport aggregate_from_json(const json& j) {
    AggregateReport a;
    a.mode = parse_mode(j.at("mode").get<std::string>()).value_or(Mode::Full);
    for (const auto& r : j.at("runs")) a.runs.push_back(run_from_json(r));
    a.mean_acc = j.at("mean_acc").get<double>();
    a.std_acc = j.at("std_acc").get<double>();
    a.mean_f1 = j.at("mean_f1").get<double>();
    a.std_f1 = j.at("std_f1").get<double>();
    return a;
}

/// Mode rows with Acc / F1 as mean ± std, in percent.
inline std::string render_table(const std::vector<AggregateReport>& reports) {
    auto row = [](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-16s %-6s %-18s %-18s\n", a.c_str(), b.c_str(), c.c_str(), d.c_str());
        return std::string(buf);
    };
    auto cell = [](double mean, double sd) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * mean, 100.0 * sd);
        return std::string(buf);
    };
    std::string out = row("Mode", "Runs", "Acc", "F1");
    for (const auto& r : reports)
        out += row(std::string(to_string(r.mode)), std::to_string(r.runs.size()), cell(r.mean_acc, r.std_acc),
                   cell(r.mean_f1, r.std_f1));
    return out;
}

}  // namespace dmd
