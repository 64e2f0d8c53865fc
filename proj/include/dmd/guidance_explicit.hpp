#pragma once

#include <cctype>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dmd/answer.hpp"
#include "dmd/core.hpp"
#include "dmd/dictionary.hpp"
#include "dmd/lemmatizer.hpp"
#include "dmd/llm.hpp"
#include "dmd/prompt.hpp"

namespace dmd {

/// Plain-language statements of the two metaphor theories handed to the
/// model when it drafts its reasoning steps.
struct TheoryTexts {
    std::string mip;
    std::string spv;

    static TheoryTexts defaults() {
        return {
            "A word is used metaphorically when the meaning it carries in this context differs from "
            "its basic meaning, the more concrete, physical or historically older sense a dictionary "
            "usually lists first, and the contextual meaning can still be understood by comparison "
            "with that basic meaning.",
            "Words have typical partners: a verb usually takes certain kinds of subjects and objects, "
            "an adjective certain kinds of nouns. A word is likely used metaphorically when the words "
            "around it are not the kind it normally combines with, so the combination breaks the "
            "expected co-occurrence pattern.",
        };
    }

    static TheoryTexts load(const std::string& path) {
        auto j = json::parse(util::read_file(path));
        TheoryTexts t{j.value("mip", std::string()), j.value("spv", std::string())};
        t.validate();
        return t;
    }

    void validate() const {
        if (mip.empty() || spv.empty()) throw ConfigError("both theory texts must be non-empty");
    }
};

enum class ThoughtSource { Generated, Cached, Fixed };

inline std::string_view to_string(ThoughtSource s) {
    switch (s) {
        case ThoughtSource::Generated: return "generated";
        case ThoughtSource::Cached: return "cached";
        case ThoughtSource::Fixed: return "fixed";
    }
    return "generated";
}

struct ThoughtChain {
    std::vector<std::string> steps;
    ThoughtSource source = ThoughtSource::Generated;
};

/// Splits a numbered list ("1. ...", "2) ...", "Step 3: ...") into steps.
/// Unnumbered lines after a step are folded into it; text before the first
/// step is ignored. No numbered line at all raises MalformedThoughts.
inline ThoughtChain parse_thoughts(std::string_view text) {
    static const std::regex enumerated(R"(^\s*(?:[-*]\s*)?(?:step\s*)?(\d+)\s*[.):]\s*(.*)$)", std::regex::icase);
    ThoughtChain chain;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string line(text.substr(pos, eol - pos));
        pos = eol + 1;
        std::smatch m;
        if (std::regex_match(line, m, enumerated)) {
            chain.steps.emplace_back(util::trim(m[2].str()));
        } else if (!chain.steps.empty() && !util::trim(line).empty()) {
            auto& last = chain.steps.back();
            if (!last.empty()) last += ' ';
            last += util::trim(line);
        }
        if (eol == text.size()) break;
    }
    std::erase_if(chain.steps, [](const std::string& s) { return s.empty(); });
    if (chain.steps.empty()) throw MalformedThoughts("no numbered steps found in thoughts response");
    return chain;
}

inline std::vector<ChatMessage> render_thoughts_prompt(const PromptTemplate& tmpl, const TheoryTexts& theory) {
    return render_prompt(tmpl, {{"mip", theory.mip}, {"spv", theory.spv}}, {"mip", "spv"});
}

/// One model call producing the multi-step reasoning plan.
inline ThoughtChain generate_thoughts(Gateway& gateway, const LlmConfig& config, const TheoryTexts& theory,
                                      const PromptTemplate& tmpl, CallContext ctx = {}) {
    theory.validate();
    ctx.stage = Stage::Thoughts;
    auto chain = parse_thoughts(gateway.complete(config, render_thoughts_prompt(tmpl, theory), ctx));
    chain.source = ThoughtSource::Generated;
    return chain;
}

/// Holds the reasoning plan for one evaluation run: generated on first use,
/// then served read-only. A chain loaded from a file is `Fixed`.
class ThoughtCache {
public:
    ThoughtCache() = default;
    explicit ThoughtCache(ThoughtChain fixed) : chain_(std::move(fixed)) { chain_->source = ThoughtSource::Fixed; }

    ThoughtChain get(Gateway& gateway, const LlmConfig& config, const TheoryTexts& theory,
                     const PromptTemplate& tmpl, const CallContext& ctx) {
        std::lock_guard lock(mu_);
        if (chain_) {
            ThoughtChain c = *chain_;
            if (c.source != ThoughtSource::Fixed) c.source = ThoughtSource::Cached;
            return c;
        }
        chain_ = generate_thoughts(gateway, config, theory, tmpl, ctx);
        return *chain_;
    }

    bool ready() const {
        std::lock_guard lock(mu_);
        return chain_.has_value();
    }

private:
    mutable std::mutex mu_;
    std::optional<ThoughtChain> chain_;
};

inline constexpr std::size_t kDefaultMaxExamplesPerSense = 3;

inline std::string render_dictionary_block(const std::optional<DictionaryEntry>& info,
                                           std::size_t max_examples = kDefaultMaxExamplesPerSense) {
    if (!info) return std::string(kNoDictionaryEntryNotice);
    std::string out = "Lemma: " + info->lemma;
    if (info->pos) out += " (" + *info->pos + ")";
    for (std::size_t i = 0; i < info->senses.size(); ++i) {
        const auto& s = info->senses[i];
        out += "\n" + std::to_string(i + 1) + ". " + s.definition;
        for (std::size_t e = 0; e < s.examples.size() && e < max_examples; ++e)
            out += "\n   Example: " + s.examples[e];
    }
    return out;
}

inline std::string render_thoughts_block(const ThoughtChain& thoughts) {
    std::string out;
    for (std::size_t i = 0; i < thoughts.steps.size(); ++i) {
        if (i) out += '\n';
        out += std::to_string(i + 1) + ". " + thoughts.steps[i];
    }
    return out;
}

inline std::vector<ChatMessage> render_explicit_prompt(const PromptTemplate& ins_ex, const ThoughtChain& thoughts,
                                                       const std::optional<DictionaryEntry>& info,
                                                       const Sample& sample,
                                                       std::size_t max_examples = kDefaultMaxExamplesPerSense) {
    if (thoughts.steps.empty()) throw PreconditionError("thought chain has no steps");
    return render_prompt(ins_ex,
                         {{"thoughts", render_thoughts_block(thoughts)},
                          {"dictionary", render_dictionary_block(info, max_examples)},
                          {"sentence", sample.sentence()},
                          {"target_word", sample.target_word()}},
                         {"thoughts", "dictionary", "sentence", "target_word"});
}

struct ExplicitOptions {
    std::size_t max_examples = kDefaultMaxExamplesPerSense;
    /// Generate fresh thoughts for every sample instead of once per run.
    bool per_sample_thoughts = false;
};

/// Lemmatize, look up, fetch (or reuse) thoughts, render, then one model
/// call. A dictionary that is down degrades to the no-entry notice.
inline GuidedResponse run_explicit(Gateway& gateway, const LlmConfig& config, const Sample& sample,
                                   DictionaryProvider* provider, const Lemmatizer& lemmatizer,
                                   const TheoryTexts& theory, const TemplateSet& templates, ThoughtCache& thoughts,
                                   CallContext ctx = {}, const ExplicitOptions& opts = {}) {
    if (ctx.sample_id.empty()) ctx.sample_id = sample.id();
    const auto lemma = lemmatizer.lemmatize(sample.target_word());
    std::optional<DictionaryEntry> info;
    if (provider) {
        try {
            info = lookup_dictionary(*provider, lemma);
        } catch (const ProviderUnavailable&) {
            info.reset();
        }
    }
    ThoughtChain chain;
    if (opts.per_sample_thoughts) {
        chain = generate_thoughts(gateway, config, theory, templates.thoughts, ctx);
    } else {
        chain = thoughts.get(gateway, config, theory, templates.thoughts, ctx);
    }
    const auto msgs = render_explicit_prompt(templates.explicit_, chain, info, sample, opts.max_examples);
    ctx.stage = Stage::Explicit;
    GuidedResponse r;
    r.stage = Stage::Explicit;
    r.prompt_digest = prompt_digest(msgs);
    r.explanation = gateway.complete(config, msgs, ctx);
    r.answer = extract_answer(r.explanation);
    return r;
}

}  // namespace dmd
