#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dmd/answer.hpp"
#include "dmd/core.hpp"
#include "dmd/llm.hpp"
#include "dmd/prompt.hpp"

namespace dmd {

/// How the two guidance answers relate. Partial covers any case where at
/// least one side could not be parsed, including both.
enum class Agreement { Agree, Conflict, Partial };

inline std::string_view to_string(Agreement a) {
    switch (a) {
        case Agreement::Agree: return "agree";
        case Agreement::Conflict: return "conflict";
        case Agreement::Partial: return "partial";
    }
    return "partial";
}

inline Agreement agreement_of(const GuidedResponse& im, const GuidedResponse& ex) {
    if (!im.answer || !ex.answer) return Agreement::Partial;
    return *im.answer == *ex.answer ? Agreement::Agree : Agreement::Conflict;
}

struct Verdict {
    std::optional<Label> final_answer;
    std::string judge_text;
    GuidedResponse implicit;
    GuidedResponse explicit_;
    Agreement agreement = Agreement::Partial;
    std::string prompt_digest;
};

/// With `sample` the full judge template is used; without it, the strict
/// template that shows only the two responses.
inline std::vector<ChatMessage> render_judge_prompt(const PromptTemplate& ins_j, const GuidedResponse& r_im,
                                                    const GuidedResponse& r_ex, const Sample* sample) {
    std::map<std::string, std::string> values{{"response_implicit", r_im.explanation},
                                              {"response_explicit", r_ex.explanation}};
    std::vector<std::string> required{"response_implicit", "response_explicit"};
    if (sample) {
        values["sentence"] = sample->sentence();
        values["target_word"] = sample->target_word();
        required.push_back("sentence");
        required.push_back("target_word");
    }
    return render_prompt(ins_j, values, required);
}

struct JudgeOptions {
    bool include_sample = true;
    /// Ask once more when the verdict has no parseable label.
    bool retry_unparseable = false;
};

inline Verdict run_judgment(Gateway& gateway, const LlmConfig& config, const GuidedResponse& r_im,
                            const GuidedResponse& r_ex, const Sample& sample, const TemplateSet& templates,
                            CallContext ctx = {}, const JudgeOptions& opts = {}) {
    const auto msgs = opts.include_sample ? render_judge_prompt(templates.judge, r_im, r_ex, &sample)
                                          : render_judge_prompt(templates.judge_strict, r_im, r_ex, nullptr);
    if (ctx.sample_id.empty()) ctx.sample_id = sample.id();
    ctx.stage = Stage::Judge;
    Verdict v;
    v.implicit = r_im;
    v.explicit_ = r_ex;
    v.agreement = agreement_of(r_im, r_ex);
    v.prompt_digest = prompt_digest(msgs);
    v.judge_text = gateway.complete(config, msgs, ctx);
    v.final_answer = extract_answer(v.judge_text);
    if (!v.final_answer && opts.retry_unparseable) {
        v.judge_text = gateway.complete(config, msgs, ctx);
        v.final_answer = extract_answer(v.judge_text);
    }
    return v;
}

}  // namespace dmd
