#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmd/dmd.hpp"

namespace dmd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitUnparseable = 2;
inline constexpr int kExitBackend = 3;

/// Merged settings for one command. Layers are flat JSON objects with the
/// keys listed in setting_keys(); flags override env, env overrides file.
struct Settings {
    LlmConfig llm;
    std::string backend = "openai";
    std::optional<std::string> mock_script;
    std::optional<std::string> store;
    std::optional<std::string> dataset;
    std::optional<std::string> dictionary;
    std::optional<std::string> dictionary_cache;
    std::optional<std::string> weights;
    std::optional<std::string> encoder;
    std::optional<std::string> templates_dir;
    std::optional<std::string> transcripts;
    std::optional<std::string> report;
    std::optional<std::string> theory;
    std::optional<std::string> thoughts;
    std::size_t k = kDefaultK;
    std::size_t runs = 3;
    std::optional<std::size_t> n_per_class;
    std::uint64_t seed = 0;
    Mode mode = Mode::Full;
    std::size_t jobs = 1;
    std::size_t max_in_flight = 4;
    std::chrono::milliseconds backoff{500};
    bool judge_strict = false;
    bool per_sample_thoughts = false;
};

enum class KeyKind { String, Path, Count, Number, Bool };

struct SettingKey {
    const char* name;
    KeyKind kind;
};

inline const std::vector<SettingKey>& setting_keys() {
    static const std::vector<SettingKey> keys{
        {"model", KeyKind::String},          {"temperature", KeyKind::Number},
        {"max_tokens", KeyKind::Count},      {"timeout_ms", KeyKind::Count},
        {"max_retries", KeyKind::Count},     {"base_url", KeyKind::String},
        {"api_key_env", KeyKind::String},    {"backend", KeyKind::String},
        {"mock_script", KeyKind::Path},      {"store", KeyKind::Path},
        {"dataset", KeyKind::Path},          {"dictionary", KeyKind::Path},
        {"dictionary_cache", KeyKind::Path}, {"weights", KeyKind::Path},
        {"encoder", KeyKind::String},        {"templates_dir", KeyKind::Path},
        {"transcripts", KeyKind::Path},      {"report", KeyKind::Path},
        {"theory", KeyKind::Path},           {"thoughts", KeyKind::Path},
        {"k", KeyKind::Count},               {"runs", KeyKind::Count},
        {"n_per_class", KeyKind::Count},     {"seed", KeyKind::Count},
        {"mode", KeyKind::String},           {"jobs", KeyKind::Count},
        {"max_in_flight", KeyKind::Count},   {"backoff_ms", KeyKind::Count},
        {"judge_strict", KeyKind::Bool},     {"per_sample_thoughts", KeyKind::Bool},
    };
    return keys;
}

inline const SettingKey* find_setting(std::string_view name) {
    for (const auto& k : setting_keys())
        if (name == k.name) return &k;
    return nullptr;
}

inline bool is_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

/// Reads a JSON config file. Relative paths in it resolve against the
/// file's directory.
inline json load_config_file(const std::string& path) {
    json j;
    try {
        j = json::parse(util::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config " + path + " is not a JSON object");
    const auto base = std::filesystem::path(path).parent_path();
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto* key = find_setting(it.key());
        if (!key) throw ConfigError("config " + path + ": unknown setting '" + it.key() + "'");
        if (key->kind != KeyKind::Path || !it->is_string()) continue;
        const auto value = it->get<std::string>();
        if (!value.empty() && !is_url(value) && std::filesystem::path(value).is_relative())
            *it = (base / value).lexically_normal().string();
    }
    return j;
}

inline json env_layer(const std::function<const char*(const char*)>& getenv = [](const char* n) {
    return std::getenv(n);
}) {
    json j = json::object();
    auto take = [&](const char* var, const char* key, const char* prefix = "") {
        if (const char* v = getenv(var); v && *v) j[key] = std::string(prefix) + v;
    };
    take("DMD_LLM_BASE_URL", "base_url");
    take("DMD_LLM_MODEL", "model");
    take(HttpDictionary::kBaseUrlEnv, "dictionary");
    take("DMD_EMBEDDING_URL", "encoder", "http:");
    return j;
}

inline Settings settings_from_json(const json& j) {
    Settings s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& name = it.key();
        const json& v = *it;
        const auto* key = find_setting(name);
        if (!key) throw ConfigError("unknown setting '" + name + "'");
        auto bad = [&](const char* want) { return ConfigError("setting '" + name + "' must be " + want); };
        std::string str;
        std::size_t count = 0;
        double number = 0.0;
        bool flag = false;
        switch (key->kind) {
            case KeyKind::String:
            case KeyKind::Path:
                if (!v.is_string()) throw bad("a string");
                str = v.get<std::string>();
                break;
            case KeyKind::Count:
                if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
                    throw bad("a non-negative integer");
                count = v.get<std::size_t>();
                break;
            case KeyKind::Number:
                if (!v.is_number()) throw bad("a number");
                number = v.get<double>();
                break;
            case KeyKind::Bool:
                if (!v.is_boolean()) throw bad("true or false");
                flag = v.get<bool>();
                break;
        }
        if (name == "model") s.llm.model_name = str;
        else if (name == "temperature") s.llm.temperature = number;
        else if (name == "max_tokens") s.llm.max_tokens = count;
        else if (name == "timeout_ms") s.llm.timeout = std::chrono::milliseconds(count);
        else if (name == "max_retries") s.llm.max_retries = count;
        else if (name == "base_url") s.llm.base_url = str;
        else if (name == "api_key_env") s.llm.api_key_env = str;
        else if (name == "backend") s.backend = str;
        else if (name == "mock_script") s.mock_script = str;
        else if (name == "store") s.store = str;
        else if (name == "dataset") s.dataset = str;
        else if (name == "dictionary") s.dictionary = str;
        else if (name == "dictionary_cache") s.dictionary_cache = str;
        else if (name == "weights") s.weights = str;
        else if (name == "encoder") s.encoder = str;
        else if (name == "templates_dir") s.templates_dir = str;
        else if (name == "transcripts") s.transcripts = str;
        else if (name == "report") s.report = str;
        else if (name == "theory") s.theory = str;
        else if (name == "thoughts") s.thoughts = str;
        else if (name == "k") s.k = count;
        else if (name == "runs") s.runs = count;
        else if (name == "n_per_class") s.n_per_class = count;
        else if (name == "seed") s.seed = count;
        else if (name == "jobs") s.jobs = count;
        else if (name == "max_in_flight") s.max_in_flight = count;
        else if (name == "backoff_ms") s.backoff = std::chrono::milliseconds(count);
        else if (name == "judge_strict") s.judge_strict = flag;
        else if (name == "per_sample_thoughts") s.per_sample_thoughts = flag;
        else if (name == "mode") {
            auto m = parse_mode(str);
            if (!m) throw ConfigError("unknown mode '" + str + "' (full, implicit, explicit)");
            s.mode = *m;
        }
    }
    return s;
}

inline Settings merge_settings(json file, const json& env, const json& flags) {
    file.update(env);
    file.update(flags);
    return settings_from_json(file);
}

// ---- target resolution -----------------------------------------------------

/// Index of the target in `words`. A word must occur exactly once unless an
/// index is given too, in which case the two must agree.
inline std::size_t resolve_target(const std::vector<std::string>& words, const std::optional<std::string>& word,
                                  const std::optional<std::size_t>& index) {
    if (index) {
        if (*index >= words.size()) throw IndexOutOfRange(0, *index, words.size());
        if (word && words[*index] != *word)
            throw ConfigError("word " + std::to_string(*index) + " is '" + words[*index] + "', not '" + *word + "'");
        return *index;
    }
    if (!word) throw ConfigError("give --target-word or --target-index");
    std::optional<std::size_t> found;
    std::size_t n = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i] != *word) continue;
        if (!found) found = i;
        ++n;
    }
    if (n == 0) throw ConfigError("target word '" + *word + "' does not occur in the sentence");
    if (n > 1) throw AmbiguousTarget(*word, n);
    return *found;
}

// ---- component wiring ------------------------------------------------------

/// test:<seed>:<dim>, precomputed:<path>, http:<url> (or a bare http URL).
inline std::shared_ptr<const EmbeddingProvider> make_encoder(const std::string& spec) {
    if (spec.starts_with("test:")) {
        const auto rest = spec.substr(5);
        const auto colon = rest.find(':');
        try {
            if (colon == std::string::npos) throw std::invalid_argument("missing dim");
            std::size_t used = 0;
            const auto seed = std::stoull(rest.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument("seed");
            const auto dim_text = rest.substr(colon + 1);
            const auto dim = std::stoull(dim_text, &used);
            if (used != dim_text.size() || dim == 0) throw std::invalid_argument("dim");
            return std::make_shared<TestEncoder>(dim, seed);
        } catch (const std::logic_error&) {
            throw ConfigError("bad encoder spec '" + spec + "' (expected test:<seed>:<dim>)");
        }
    }
    if (spec.starts_with("precomputed:")) {
        const auto path = spec.substr(12);
        return std::make_shared<PrecomputedProvider>(load_precomputed(path), path);
    }
    if (spec.starts_with("http:") && !is_url(spec)) return std::make_shared<HttpEmbeddingProvider>(spec.substr(5));
    if (is_url(spec)) return std::make_shared<HttpEmbeddingProvider>(spec);
    throw ConfigError("bad encoder spec '" + spec + "' (test:<seed>:<dim>, precomputed:<path> or http:<url>)");
}

/// Explicit weights file, else identity heads sized from the store or, for
/// an empty store, from one encoded probe sample.
inline HeadWeights resolve_weights(const Settings& s, const EmbeddingProvider& encoder, const Datastore* store,
                                   const Sample* probe) {
    if (s.weights) return load_head_weights(*s.weights);
    if (store && !store->empty()) {
        if (store->dim() % 4 != 0)
            throw ConfigError("store dim " + std::to_string(store->dim()) + " is not 4*d; pass --weights");
        return HeadWeights::identity(store->dim() / 4);
    }
    if (probe) return HeadWeights::identity(encoder.encode(*probe).v_s.size());
    throw ConfigError("cannot infer the embedding size; pass --weights");
}

inline void check_store_weights(const Datastore& store, const HeadWeights& weights) {
    if (store.empty()) return;
    auto it = store.metadata().find("weights");
    if (it != store.metadata().end() && it->second != weights_fingerprint(weights))
        throw ConfigError("store keys were built with weights " + it->second + " but the given weights are " +
                          weights_fingerprint(weights) + "; pass the matching --weights");
}

inline std::shared_ptr<LlmBackend> make_backend(const Settings& s) {
    if (s.backend == "mock") {
        if (!s.mock_script) throw ConfigError("--backend mock needs --mock-script");
        json script;
        try {
            script = json::parse(util::read_file(*s.mock_script));
            return std::make_shared<MockBackend>(MockBackend::rules_from_json(script));
        } catch (const json::exception& e) {
            throw ConfigError("mock script " + *s.mock_script + ": " + e.what());
        }
    }
    if (s.backend == "openai") return std::make_shared<OpenAiBackend>();
    throw ConfigError("unknown backend '" + s.backend + "' (openai, mock)");
}

/// Loads every input the given modes need, then opens the gateway (and its
/// transcript log) last so a bad setting fails before anything is written.
inline Pipeline assemble_pipeline(const Settings& s, const std::vector<Mode>& modes, const Sample* probe) {
    bool implicit = false;
    bool explicit_ = false;
    for (auto m : modes) {
        implicit = implicit || uses_implicit(m);
        explicit_ = explicit_ || uses_explicit(m);
    }
    if (s.k == 0) throw ConfigError("k must be >= 1");
    if (s.jobs == 0) throw ConfigError("jobs must be >= 1");
    if (s.max_in_flight == 0) throw ConfigError("max_in_flight must be >= 1");
    s.llm.validate();

    Pipeline p;
    p.llm = s.llm;
    p.k = s.k;
    p.jobs = s.jobs;
    auto backend = make_backend(s);
    if (s.templates_dir) p.templates = TemplateSet::load(*s.templates_dir);

    if (implicit) {
        if (!s.store) throw ConfigError("this mode needs --store");
        auto store = std::make_shared<Datastore>(load_datastore(*s.store));
        std::string spec;
        if (s.encoder) {
            spec = *s.encoder;
        } else if (auto it = store->metadata().find("encoder"); it != store->metadata().end()) {
            spec = it->second;
        } else {
            throw ConfigError("store records no encoder; pass --encoder");
        }
        p.encoder = make_encoder(spec);
        p.weights = resolve_weights(s, *p.encoder, store.get(), probe);
        check_store_weights(*store, p.weights);
        p.store = std::move(store);
    }

    if (explicit_) {
        if (s.dictionary) {
            if (is_url(*s.dictionary)) {
                p.dictionary = std::make_shared<HttpDictionary>(
                    *s.dictionary, s.dictionary_cache.value_or(".dmd-cache/dictionary"));
            } else {
                auto dict = std::make_shared<OfflineDictionary>(OfflineDictionary::load(*s.dictionary));
                p.lemmatizer = Lemmatizer(*dict->lemma_set());
                p.dictionary = std::move(dict);
            }
        }
        if (s.theory) p.theory = TheoryTexts::load(*s.theory);
        if (s.thoughts) p.fixed_thoughts = parse_thoughts(util::read_file(*s.thoughts));
        p.explicit_options.per_sample_thoughts = s.per_sample_thoughts;
    }
    p.judge_options.include_sample = !s.judge_strict;

    GatewayOptions go;
    go.max_in_flight = s.max_in_flight;
    go.backoff_base = s.backoff;
    p.gateway = std::make_shared<Gateway>(backend, go);
    for (auto m : modes) p.validate(m);
    if (s.transcripts) {
        go.transcript_path = s.transcripts;
        p.gateway = std::make_shared<Gateway>(std::move(backend), go);
    }
    return p;
}

// ---- commands --------------------------------------------------------------

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

inline int cmd_build_store(const Settings& s, Streams io) {
    if (!s.dataset) throw ConfigError("build-store needs --dataset");
    if (!s.store) throw ConfigError("build-store needs --store (output path)");
    if (!s.encoder) throw ConfigError("build-store needs --encoder");
    const auto ds = parse_dataset(*s.dataset);
    const auto encoder = make_encoder(*s.encoder);
    Datastore store;
    if (ds.samples.empty() && !s.weights) {
        store = build_datastore({}, {{"encoder", encoder->spec()}, {"dataset", ds.name}});
    } else {
        const auto weights = resolve_weights(s, *encoder, nullptr, ds.samples.empty() ? nullptr : &ds.samples[0]);
        store = build_store_from_dataset(ds, *encoder, weights);
    }
    save_datastore(store, *s.store);
    io.out << "wrote " << *s.store << ": count " << store.size() << ", dim " << store.dim() << '\n';
    return kExitOk;
}

struct DetectArgs {
    std::string sentence;
    std::optional<std::string> target_word;
    std::optional<std::size_t> target_index;
    std::string id = "cli";
    bool json_output = false;
};

inline void print_stage(std::ostream& out, const char* title, const std::optional<Label>& answer,
                        const std::string& text) {
    out << "--- " << title << ": " << (answer ? to_string(*answer) : std::string_view("unparsed")) << " ---\n"
        << text << '\n';
}

inline int cmd_detect(const Settings& s, const DetectArgs& a, Streams io) {
    const auto words = util::split_whitespace(a.sentence);
    if (words.empty()) throw ConfigError("--sentence is empty");
    const Sample sample(a.id, a.sentence, resolve_target(words, a.target_word, a.target_index));
    const auto p = assemble_pipeline(s, {s.mode}, &sample);

    auto thoughts = make_thought_cache(p);
    SampleOutcome o;
    run_stages(p, sample, s.mode, "detect", thoughts, o);
    o.llm_calls = p.gateway->call_count("detect", sample.id());

    if (a.json_output) {
        io.out << outcome_to_json(o).dump(2) << '\n';
    } else {
        io.out << "prediction: " << (o.predicted ? to_string(*o.predicted) : std::string_view("unparsed")) << '\n';
        io.out << "target: " << sample.target_word() << " (index " << sample.target_index() << ")\n";
        if (o.agreement) io.out << "agreement: " << to_string(*o.agreement) << '\n';
        if (o.implicit) print_stage(io.out, "implicit guidance", o.implicit->answer, o.implicit->explanation);
        if (o.explicit_) print_stage(io.out, "explicit guidance", o.explicit_->answer, o.explicit_->explanation);
        if (o.judge_text) print_stage(io.out, "judgment", o.predicted, *o.judge_text);
    }
    if (!o.predicted) {
        io.err << "error: no label could be read from the final answer\n";
        return kExitUnparseable;
    }
    return kExitOk;
}

/// The part of a report that depends only on inputs and settings.
inline json report_config(const std::string& command, const Settings& s, const Dataset& ds, const Pipeline& p) {
    json c{{"command", command},
           {"dataset", ds.name},
           {"dataset_size", ds.samples.size()},
           {"n_per_class", s.n_per_class ? json(*s.n_per_class) : json(nullptr)},
           {"runs", s.runs},
           {"seed", s.seed},
           {"k", s.k},
           {"model", s.llm.model_name},
           {"temperature", s.llm.temperature},
           {"max_tokens", s.llm.max_tokens},
           {"backend", s.backend},
           {"judge", s.judge_strict ? "strict" : "with_sample"},
           {"thoughts", s.thoughts ? "fixed" : s.per_sample_thoughts ? "per_sample" : "per_run"}};
    if (p.encoder) c["encoder"] = p.encoder->spec();
    if (p.store) {
        c["weights"] = weights_fingerprint(p.weights);
        c["store"] = p.store->metadata();
    }
    return c;
}

inline std::string table_path_for(const std::string& report_path) {
    std::filesystem::path p(report_path);
    if (p.extension() == ".txt") return p.replace_extension(".table.txt").string();
    return p.replace_extension(".txt").string();
}

/// evaluate (one mode) and ablate (all three) share this.
inline int cmd_evaluate(const std::string& command, const Settings& s, const std::vector<Mode>& modes, Streams io) {
    if (!s.dataset) throw ConfigError(command + " needs --dataset");
    if (!s.n_per_class) throw ConfigError(command + " needs --n-per-class");
    if (s.runs == 0) throw ConfigError("runs must be >= 1");
    const auto ds = parse_dataset(*s.dataset);
    const auto p = assemble_pipeline(s, modes, ds.samples.empty() ? nullptr : &ds.samples[0]);

    const auto started = utc_timestamp();
    const auto t0 = std::chrono::steady_clock::now();
    const EvalOptions opts{s.runs, s.seed, s.n_per_class};
    std::vector<AggregateReport> reports;
    for (auto m : modes) reports.push_back(evaluate(p, ds, m, opts));
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();

    json mode_json = json::array();
    for (const auto& r : reports) {
        mode_json.push_back(aggregate_to_json(r));
        for (const auto& run : r.runs) {
            std::size_t failed = 0;
            for (const auto& o : run.per_sample) failed += o.error ? 1 : 0;
            if (failed)
                io.err << "warning: " << run.run_id << ": " << failed << " of " << run.per_sample.size()
                       << " samples failed\n";
        }
    }
    std::int64_t latency = 0;
    const auto transcripts = p.gateway->transcripts();
    for (const auto& t : transcripts) latency += t.latency_ms;

    const auto table = render_table(reports);
    if (s.report) {
        json report{{"report", {{"config", report_config(command, s, ds, p)}, {"modes", std::move(mode_json)}}},
                    {"metadata",
                     {{"started", started},
                      {"finished", utc_timestamp()},
                      {"elapsed_ms", elapsed},
                      {"llm_calls", transcripts.size()},
                      {"llm_latency_ms", latency}}}};
        util::write_file(*s.report, report.dump(2) + "\n");
        util::write_file(table_path_for(*s.report), table);
    }
    io.out << table;
    if (s.report) io.out << "report: " << *s.report << '\n';
    return kExitOk;
}

// ---- entry point -----------------------------------------------------------

/// Binds CLI11 options to setting keys; only options actually given on the
/// command line end up in the flag layer.
class FlagLayer {
public:
    explicit FlagLayer(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* option(const std::string& names, std::string key, const std::string& help) {
        auto value = std::make_shared<T>();
        auto* opt = app_->add_option(names, *value, help);
        commits_.push_back([opt, value, key](json& j) {
            if (opt->count()) j[key] = *value;
        });
        return opt;
    }

    CLI::Option* flag(const std::string& names, std::string key, const std::string& help) {
        auto value = std::make_shared<bool>(false);
        auto* opt = app_->add_flag(names, *value, help);
        commits_.push_back([opt, value, key](json& j) {
            if (opt->count()) j[key] = *value;
        });
        return opt;
    }

    json collect() const {
        json j = json::object();
        for (const auto& c : commits_) c(j);
        return j;
    }

    CLI::App* app() const { return app_; }

private:
    CLI::App* app_;
    std::vector<std::function<void(json&)>> commits_;
};

inline void add_llm_flags(FlagLayer& f) {
    f.option<std::string>("--backend", "backend", "openai or mock");
    f.option<std::string>("--mock-script", "mock_script", "JSON rules for the mock backend");
    f.option<std::string>("--model", "model", "chat model name");
    f.option<double>("--temperature", "temperature", "sampling temperature");
    f.option<std::size_t>("--max-tokens", "max_tokens", "completion token limit");
    f.option<std::size_t>("--max-retries", "max_retries", "retries on 429/5xx/transport errors");
    f.option<std::size_t>("--timeout-ms", "timeout_ms", "per-request timeout");
    f.option<std::string>("--base-url", "base_url", "chat API base URL");
    f.option<std::string>("--api-key-env", "api_key_env", "environment variable holding the API key");
    f.option<std::size_t>("--max-in-flight", "max_in_flight", "concurrent model calls");
    f.option<std::size_t>("--backoff-ms", "backoff_ms", "base retry backoff");
    f.option<std::string>("--transcripts", "transcripts", "append one JSON line per model call here");
}

inline void add_pipeline_flags(FlagLayer& f) {
    add_llm_flags(f);
    f.option<std::string>("--store", "store", "datastore file");
    f.option<std::string>("--dictionary", "dictionary", "dictionary JSONL file or http(s) base URL");
    f.option<std::string>("--dictionary-cache", "dictionary_cache", "cache directory for a remote dictionary");
    f.option<std::string>("--weights", "weights", "head weights JSON");
    f.option<std::string>("--encoder", "encoder", "test:<seed>:<dim> | precomputed:<path> | http:<url>");
    f.option<std::size_t>("--k", "k", "neighbors per query (default 8)");
    f.option<std::string>("--templates-dir", "templates_dir", "directory overriding prompt templates");
    f.option<std::string>("--theory", "theory", "JSON with 'mip' and 'spv' theory texts");
    f.option<std::string>("--thoughts", "thoughts", "fixed reasoning steps instead of generated ones");
    f.flag("--judge-strict", "judge_strict", "judge sees only the two responses");
    f.flag("--per-sample-thoughts", "per_sample_thoughts", "generate reasoning steps for every sample");
}

inline void add_eval_flags(FlagLayer& f) {
    f.option<std::string>("--dataset", "dataset", "labeled JSONL dataset");
    f.option<std::size_t>("--n-per-class", "n_per_class", "balanced sample size per class");
    f.option<std::size_t>("--runs", "runs", "independent runs (default 3)");
    f.option<std::uint64_t>("--seed", "seed", "base seed; run r uses seed+r");
    f.option<std::size_t>("--jobs", "jobs", "samples processed concurrently");
    f.option<std::string>("--report", "report", "report JSON path; the table goes next to it as .txt");
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Metaphor detection from retrieved examples and dictionary reasoning", "dmd"};
    app.require_subcommand(1);

    auto config_path = std::make_shared<std::string>();
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", *config_path, "JSON settings file (flags and env override it)");
    };

    FlagLayer build(app.add_subcommand("build-store", "encode a dataset into a datastore file"));
    build.option<std::string>("--dataset", "dataset", "JSONL dataset to encode")->required();
    build.option<std::string>("--store,--out", "store", "output datastore path")->required();
    build.option<std::string>("--encoder", "encoder", "test:<seed>:<dim> | precomputed:<path> | http:<url>");
    build.option<std::string>("--weights", "weights", "head weights JSON (identity heads if absent)");
    add_config(build.app());

    DetectArgs detect_args;
    FlagLayer detect(app.add_subcommand("detect", "classify one target word"));
    add_pipeline_flags(detect);
    detect.option<std::string>("--mode", "mode", "full | implicit | explicit");
    detect.app()->add_option("--sentence", detect_args.sentence, "whitespace-tokenized sentence")->required();
    detect.app()->add_option("--target-word", detect_args.target_word, "target token (must be unique)");
    detect.app()->add_option("--target-index", detect_args.target_index, "0-based target token index");
    detect.app()->add_option("--id", detect_args.id, "sample id used in transcripts");
    detect.app()->add_flag("--json", detect_args.json_output, "print the outcome as JSON");
    add_config(detect.app());

    FlagLayer evaluate_cmd(app.add_subcommand("evaluate", "score one mode over repeated balanced runs"));
    add_pipeline_flags(evaluate_cmd);
    add_eval_flags(evaluate_cmd);
    evaluate_cmd.option<std::string>("--mode", "mode", "full | implicit | explicit");
    add_config(evaluate_cmd.app());

    FlagLayer ablate_cmd(app.add_subcommand("ablate", "evaluate full, implicit-only and explicit-only"));
    add_pipeline_flags(ablate_cmd);
    add_eval_flags(ablate_cmd);
    add_config(ablate_cmd.app());

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    Streams io{out, err};
    try {
        const FlagLayer* active = nullptr;
        for (const FlagLayer* f : {&build, &detect, &evaluate_cmd, &ablate_cmd})
            if (f->app()->parsed()) active = f;
        const json file = config_path->empty() ? json::object() : load_config_file(*config_path);
        const auto settings = merge_settings(file, env_layer(), active->collect());
        const std::string name = active->app()->get_name();
        if (name == "build-store") return cmd_build_store(settings, io);
        if (name == "detect") return cmd_detect(settings, detect_args, io);
        if (name == "evaluate") return cmd_evaluate(name, settings, {settings.mode}, io);
        return cmd_evaluate(name, settings, {Mode::Full, Mode::ImplicitOnly, Mode::ExplicitOnly}, io);
    } catch (const BackendError& e) {
        err << "error: model backend: " << e.what() << '\n';
        return kExitBackend;
    } catch (const MalformedThoughts& e) {
        err << "error: model backend: " << e.what() << '\n';
        return kExitBackend;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"dmd"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dmd::cli
