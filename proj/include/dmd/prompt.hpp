#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dmd/error.hpp"
#include "dmd/llm.hpp"
#include "dmd/util.hpp"

namespace dmd {

/// A chat prompt template. Text files hold an optional "[system]" section
/// and a "[user]" section; a file without markers is all user text.
/// Placeholders are written {{name}}.
struct PromptTemplate {
    std::string system;
    std::string user;

    static PromptTemplate parse(std::string_view text) {
        PromptTemplate t;
        std::string* cur = &t.user;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto eol = text.find('\n', pos);
            auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
            pos = eol == std::string_view::npos ? text.size() : eol + 1;
            const auto trimmed = util::trim(line);
            if (trimmed == "[system]") {
                cur = &t.system;
                continue;
            }
            if (trimmed == "[user]") {
                cur = &t.user;
                continue;
            }
            cur->append(line);
            cur->push_back('\n');
        }
        t.system = std::string(util::trim(t.system));
        t.user = std::string(util::trim(t.user));
        return t;
    }

    static PromptTemplate load(const std::string& path) { return parse(util::read_file(path)); }
};

namespace detail {

/// Single left-to-right pass: substituted values are never rescanned.
inline std::string substitute(std::string_view text, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("", "unterminated '{{'");
        const std::string name(util::trim(text.substr(open + 2, close - open - 2)));
        auto it = values.find(name);
        if (it == values.end()) throw TemplateError(name, "no value supplied");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

inline bool mentions(const PromptTemplate& t, const std::string& name) {
    const auto needle = "{{" + name + "}}";
    return util::contains(t.system, needle) || util::contains(t.user, needle);
}

}  // namespace detail

/// Renders a template into chat messages. Every name in `required` must
/// appear in the template and every placeholder in the template must have a
/// value; either violation raises TemplateError.
inline std::vector<ChatMessage> render_prompt(const PromptTemplate& t,
                                              const std::map<std::string, std::string>& values,
                                              const std::vector<std::string>& required) {
    for (const auto& name : required)
        if (!detail::mentions(t, name)) throw TemplateError(name, "missing from template");
    std::vector<ChatMessage> msgs;
    if (!t.system.empty()) msgs.push_back({Role::System, detail::substitute(t.system, values)});
    msgs.push_back({Role::User, detail::substitute(t.user, values)});
    if (msgs.back().content.empty()) throw TemplateError("", "user section renders empty");
    return msgs;
}

/// Digest of a rendered prompt (role + content of every message).
inline std::string prompt_digest(const std::vector<ChatMessage>& msgs) {
    std::uint64_t h = util::fnv1a64("");
    for (const auto& m : msgs) {
        h = util::fnv1a64(to_string(m.role), h);
        h = util::fnv1a64(std::string_view("\x1f", 1), h);
        h = util::fnv1a64(m.content, h);
        h = util::fnv1a64(std::string_view("\x1e", 1), h);
    }
    return util::hex64(h);
}

// ---- default prompt text -----------------------------------------------------

/// The answer-line instruction shared verbatim by both guidance stages.
inline constexpr std::string_view kAnswerInstruction =
    "Start your reply with exactly one line of the form \"ANSWER: METAPHORICAL\" or "
    "\"ANSWER: LITERAL\", then explain your reasoning.";

inline constexpr std::string_view kNoExamplesNotice = "(No reference examples were retrieved.)";

inline constexpr std::string_view kNoDictionaryEntryNotice = "No dictionary entry found for the target word.";

inline constexpr std::string_view kDefaultImplicitTemplate = R"([system]
You are an expert annotator of figurative language.
[user]
Decide whether the target word in the query sentence is used metaphorically or literally.

The labeled examples below were retrieved because their target words relate to their sentences in a way that resembles the query. Use them as references.

{{examples}}

Query sentence: {{sentence}}
Target word: {{target_word}}

Start your reply with exactly one line of the form "ANSWER: METAPHORICAL" or "ANSWER: LITERAL", then explain your reasoning.
)";

inline constexpr std::string_view kDefaultThoughtsTemplate = R"([system]
You are an expert in linguistics and metaphor theory.
[user]
Two theories are commonly used to identify metaphors.

MIP (Metaphor Identification Procedure): {{mip}}

SPV (Selectional Preference Violation): {{spv}}

Based on these two theories, write the reasoning steps an annotator should follow to decide whether a target word in a sentence is used metaphorically. Output only a numbered list (1., 2., 3., ...).
)";

inline constexpr std::string_view kDefaultExplicitTemplate = R"([system]
You are an expert annotator of figurative language.
[user]
Decide whether the target word in the sentence is used metaphorically or literally.

Dictionary information for the target word:
{{dictionary}}

Reason through the following steps:
{{thoughts}}

Sentence: {{sentence}}
Target word: {{target_word}}

Start your reply with exactly one line of the form "ANSWER: METAPHORICAL" or "ANSWER: LITERAL", then explain your reasoning.
)";

inline constexpr std::string_view kDefaultJudgeTemplate = R"([system]
You are a careful judge of metaphor annotations.
[user]
Two analyses of the same target word were produced from different perspectives. Perspective A reasons from retrieved labeled examples whose target words behave similarly. Perspective B reasons from metaphor theories and dictionary definitions. The two responses may disagree with each other, and it is possible that both are wrong, so check every argument against the sentence itself.

Sentence: {{sentence}}
Target word: {{target_word}}

Perspective A (implicit):
{{response_implicit}}

Perspective B (explicit):
{{response_explicit}}

Give your assessment, then end with exactly one line of the form "FINAL: METAPHORICAL" or "FINAL: LITERAL".
)";

/// Judge prompt without the sentence: only the two responses are shown.
inline constexpr std::string_view kDefaultJudgeStrictTemplate = R"([system]
You are a careful judge of metaphor annotations.
[user]
Two analyses of the same target word were produced from different perspectives. Perspective A reasons from retrieved labeled examples whose target words behave similarly. Perspective B reasons from metaphor theories and dictionary definitions. The two responses may disagree with each other, and it is possible that both are wrong, so weigh the arguments carefully.

Perspective A (implicit):
{{response_implicit}}

Perspective B (explicit):
{{response_explicit}}

Give your assessment, then end with exactly one line of the form "FINAL: METAPHORICAL" or "FINAL: LITERAL".
)";

/// All stage templates. load() takes overrides from a directory holding any
/// of implicit.txt, thoughts.txt, explicit.txt, judge.txt, judge_strict.txt.
struct TemplateSet {
    PromptTemplate implicit = PromptTemplate::parse(kDefaultImplicitTemplate);
    PromptTemplate thoughts = PromptTemplate::parse(kDefaultThoughtsTemplate);
    PromptTemplate explicit_ = PromptTemplate::parse(kDefaultExplicitTemplate);
    PromptTemplate judge = PromptTemplate::parse(kDefaultJudgeTemplate);
    PromptTemplate judge_strict = PromptTemplate::parse(kDefaultJudgeStrictTemplate);

    static TemplateSet load(const std::string& dir) {
        if (!std::filesystem::is_directory(dir)) throw IoError("templates directory not found: " + dir);
        TemplateSet set;
        auto maybe = [&](const char* file, PromptTemplate& slot) {
            const auto p = std::filesystem::path(dir) / file;
            if (std::filesystem::exists(p)) slot = PromptTemplate::load(p.string());
        };
        maybe("implicit.txt", set.implicit);
        maybe("thoughts.txt", set.thoughts);
        maybe("explicit.txt", set.explicit_);
        maybe("judge.txt", set.judge);
        maybe("judge_strict.txt", set.judge_strict);
        return set;
    }
};

}  // namespace dmd
