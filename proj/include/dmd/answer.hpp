#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>

#include "dmd/core.hpp"
#include "dmd/llm.hpp"
#include "dmd/util.hpp"

namespace dmd {

/// One perspective's model response (implicit or explicit guidance).
struct GuidedResponse {
    Stage stage = Stage::Implicit;
    std::optional<Label> answer;
    std::string explanation;
    std::string prompt_digest;
};

namespace detail {

inline std::string_view last_sentence(std::string_view text) {
    text = util::trim(text);
    while (!text.empty() && (text.back() == '.' || text.back() == '!' || text.back() == '?'))
        text.remove_suffix(1);
    const auto cut = text.find_last_of(".!?\n");
    return util::trim(cut == std::string_view::npos ? text : text.substr(cut + 1));
}

inline std::size_t count_word(const std::string& lower_text, std::string_view word) {
    std::size_t n = 0;
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; };
    for (auto pos = lower_text.find(word); pos != std::string::npos; pos = lower_text.find(word, pos + 1)) {
        const bool left = pos == 0 || !is_word(lower_text[pos - 1]);
        const auto end = pos + word.size();
        const bool right = end >= lower_text.size() || !is_word(lower_text[end]);
        if (left && right) ++n;
    }
    return n;
}

}  // namespace detail

/// Pulls the label out of a model response.
///
/// The last "ANSWER: <label>" or "FINAL: <label>" (any case, markdown
/// emphasis tolerated) wins. Failing that, whichever of the words
/// "metaphorical"/"literal" occurs more often in the final sentence; a tie
/// or no mention gives nullopt.
inline std::optional<Label> extract_answer(std::string_view text) {
    static const std::regex pattern(R"(\b(answer|final)\b[\s*_]*:[\s*_]*(metaphorical|literal)\b)",
                                    std::regex::icase | std::regex::ECMAScript);
    const std::string s(text);
    std::optional<Label> last;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it)
        last = parse_label((*it)[2].str());
    if (last) return last;

    const auto tail = util::to_lower(detail::last_sentence(text));
    const auto m = detail::count_word(tail, "metaphorical");
    const auto l = detail::count_word(tail, "literal");
    if (m > l) return Label::Metaphorical;
    if (l > m) return Label::Literal;
    return std::nullopt;
}

}  // namespace dmd
