#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dmd/util.hpp"

namespace dmd {

enum class PartOfSpeech { Verb, Noun };

inline std::optional<PartOfSpeech> parse_pos(std::string_view s) {
    const auto l = util::to_lower(s);
    if (l == "verb" || l == "v") return PartOfSpeech::Verb;
    if (l == "noun" || l == "n") return PartOfSpeech::Noun;
    return std::nullopt;
}

namespace detail {

// Irregular inflections, WordNet-exception style. Every value is a fixed
// point of the suffix rules (checked by the tests).
inline const std::unordered_map<std::string, std::string>& verb_exceptions() {
    static const std::unordered_map<std::string, std::string> table = {
        {"was", "be"},          {"were", "be"},         {"been", "be"},         {"am", "be"},
        {"is", "be"},           {"are", "be"},          {"had", "have"},        {"has", "have"},
        {"did", "do"},          {"does", "do"},         {"done", "do"},         {"went", "go"},
        {"gone", "go"},         {"goes", "go"},         {"flew", "fly"},        {"flown", "fly"},
        {"flies", "fly"},       {"ran", "run"},         {"came", "come"},       {"became", "become"},
        {"saw", "see"},         {"seen", "see"},        {"took", "take"},       {"taken", "take"},
        {"gave", "give"},       {"given", "give"},      {"ate", "eat"},         {"eaten", "eat"},
        {"made", "make"},       {"said", "say"},        {"told", "tell"},       {"sold", "sell"},
        {"thought", "think"},   {"brought", "bring"},   {"bought", "buy"},      {"fought", "fight"},
        {"sought", "seek"},     {"caught", "catch"},    {"taught", "teach"},    {"found", "find"},
        {"held", "hold"},       {"stood", "stand"},     {"understood", "understand"},
        {"knew", "know"},       {"known", "know"},      {"grew", "grow"},       {"grown", "grow"},
        {"threw", "throw"},     {"thrown", "throw"},    {"blew", "blow"},       {"blown", "blow"},
        {"drew", "draw"},       {"drawn", "draw"},      {"broke", "break"},     {"broken", "break"},
        {"spoke", "speak"},     {"spoken", "speak"},    {"chose", "choose"},    {"chosen", "choose"},
        {"froze", "freeze"},    {"frozen", "freeze"},   {"stole", "steal"},     {"stolen", "steal"},
        {"woke", "wake"},       {"woken", "wake"},      {"wrote", "write"},     {"written", "write"},
        {"rode", "ride"},       {"ridden", "ride"},     {"rose", "rise"},       {"risen", "rise"},
        {"drove", "drive"},     {"driven", "drive"},    {"struck", "strike"},   {"stuck", "stick"},
        {"sang", "sing"},       {"sung", "sing"},       {"rang", "ring"},       {"rung", "ring"},
        {"sprang", "spring"},   {"sprung", "spring"},   {"swam", "swim"},       {"swum", "swim"},
        {"swung", "swing"},     {"stung", "sting"},     {"clung", "cling"},     {"flung", "fling"},
        {"strung", "string"},   {"wrung", "wring"},     {"began", "begin"},     {"begun", "begin"},
        {"drank", "drink"},     {"drunk", "drink"},     {"sank", "sink"},       {"sunk", "sink"},
        {"shrank", "shrink"},   {"shrunk", "shrink"},   {"fell", "fall"},       {"fallen", "fall"},
        {"felt", "feel"},       {"kept", "keep"},       {"slept", "sleep"},     {"swept", "sweep"},
        {"wept", "weep"},       {"crept", "creep"},     {"left", "leave"},      {"meant", "mean"},
        {"dealt", "deal"},      {"lent", "lend"},       {"sent", "send"},       {"spent", "spend"},
        {"bent", "bend"},       {"built", "build"},     {"lost", "lose"},       {"met", "meet"},
        {"led", "lead"},        {"fed", "feed"},        {"bled", "bleed"},      {"bred", "breed"},
        {"fled", "flee"},       {"sped", "speed"},      {"slid", "slide"},      {"hid", "hide"},
        {"hidden", "hide"},     {"bit", "bite"},        {"bitten", "bite"},     {"shot", "shoot"},
        {"won", "win"},         {"spun", "spin"},       {"dug", "dig"},         {"hung", "hang"},
        {"bore", "bear"},       {"borne", "bear"},      {"tore", "tear"},       {"torn", "tear"},
        {"wore", "wear"},       {"worn", "wear"},       {"swore", "swear"},     {"sworn", "swear"},
        {"shook", "shake"},     {"shaken", "shake"},    {"forgot", "forget"},   {"forgotten", "forget"},
        {"got", "get"},         {"gotten", "get"},      {"forgave", "forgive"}, {"forgiven", "forgive"},
        {"overcame", "overcome"}, {"undertook", "undertake"}, {"undertaken", "undertake"},
        {"withdrew", "withdraw"}, {"withdrawn", "withdraw"}, {"heard", "hear"},   {"paid", "pay"},
        {"laid", "lay"},        {"lain", "lie"},        {"sat", "sit"},         {"spat", "spit"},
        {"lit", "light"},       {"slew", "slay"},       {"strove", "strive"},   {"striven", "strive"},
        {"wove", "weave"},      {"woven", "weave"},     {"dived", "dive"},      {"dove", "dive"},
        {"fleeing", "flee"},    {"seeing", "see"},      {"dying", "die"},       {"lying", "lie"},
        {"tying", "tie"},       {"died", "die"},        {"tied", "tie"},        {"lied", "lie"},
        {"dyed", "dye"},        {"eyed", "eye"},        {"agreed", "agree"},    {"freed", "free"},
        {"guaranteed", "guarantee"}, {"proceeded", "proceed"}, {"succeeded", "succeed"},
        {"exceeded", "exceed"}, {"needed", "need"},     {"seeded", "seed"},     {"heeded", "heed"},
        {"weeded", "weed"},     {"created", "create"},    {"being", "be"},        {"doing", "do"},
        {"going", "go"},        {"having", "have"},
    };
    return table;
}

inline const std::unordered_map<std::string, std::string>& noun_exceptions() {
    static const std::unordered_map<std::string, std::string> table = {
        {"men", "man"},     {"women", "woman"}, {"children", "child"}, {"feet", "foot"},
        {"teeth", "tooth"}, {"geese", "goose"}, {"mice", "mouse"},     {"lice", "louse"},
        {"oxen", "ox"},     {"people", "person"}, {"data", "datum"},   {"criteria", "criterion"},
        {"phenomena", "phenomenon"}, {"wives", "wife"}, {"knives", "knife"}, {"lives", "life"},
        {"leaves", "leaf"}, {"wolves", "wolf"}, {"halves", "half"},   {"shelves", "shelf"},
        {"thieves", "thief"}, {"selves", "self"}, {"calves", "calf"},  {"loaves", "loaf"},
    };
    return table;
}

inline bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

inline bool has_vowel(std::string_view s) {
    for (char c : s)
        if (is_vowel(c) || c == 'y') return true;
    return false;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

/// Vowel-group count, a cheap stand-in for syllables.
inline int vowel_groups(std::string_view s) {
    int n = 0;
    bool prev = false;
    for (char c : s) {
        const bool v = is_vowel(c);
        if (v && !prev) ++n;
        prev = v;
    }
    return n;
}

inline bool ends_cvc(std::string_view s) {
    if (s.size() < 3) return false;
    const char c1 = s[s.size() - 3], v = s[s.size() - 2], c2 = s.back();
    return !is_vowel(c1) && is_vowel(v) && !is_vowel(c2) && c2 != 'w' && c2 != 'x' && c2 != 'y';
}

/// Undo consonant doubling or restore a dropped final 'e' after stripping
/// -ed / -ing, Porter style.
inline std::string repair_stem(std::string stem) {
    const auto n = stem.size();
    if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
        stem[n - 1] != 'l' && stem[n - 1] != 's' && stem[n - 1] != 'z' && stem[n - 1] != 'f') {
        stem.pop_back();
        return stem;
    }
    for (std::string_view e : {"bl", "iz", "dg", "rg", "rs", "ps", "ns", "uc", "rc", "nc"}) {
        if (ends_with(stem, e)) return stem + "e";
    }
    if (n >= 3 && stem[n - 2] != 'e' && ends_with(stem, "at") && !is_vowel(stem[n - 3])) return stem + "e";
    if (!stem.empty() && (stem.back() == 'v' || stem.back() == 'u')) return stem + "e";
    if (vowel_groups(stem) == 1 && ends_cvc(stem)) return stem + "e";
    return stem;
}

}  // namespace detail

/// Rule-based English lemmatizer for verbs and nouns.
///
/// Lookup order: the word itself (when a lexicon is set and knows it), the
/// irregular-form table, then morphy-style suffix candidates. With a
/// lexicon, the first candidate it contains wins and an unmatched word is
/// returned lowercased; without one, the stem is repaired heuristically.
/// The step is repeated to a fixed point, so lemmatize() is idempotent.
class Lemmatizer {
public:
    Lemmatizer() = default;
    explicit Lemmatizer(std::unordered_set<std::string> lexicon) : lexicon_(std::move(lexicon)) {}

    bool has_lexicon() const noexcept { return lexicon_.has_value(); }

    std::string lemmatize(std::string_view word, std::optional<PartOfSpeech> pos = std::nullopt) const {
        std::string cur = util::to_lower(util::trim(word));
        if (cur.empty()) return cur;
        // Suffix steps always shorten the word, so this terminates well
        // inside the bound.
        for (std::size_t i = 0, n = cur.size() + 8; i < n; ++i) {
            auto next = step(cur, pos);
            if (next == cur) break;
            cur = std::move(next);
        }
        return cur;
    }

private:
    bool known(const std::string& w) const { return lexicon_ && lexicon_->count(w) > 0; }

    static std::vector<std::string> candidates(const std::string& w, PartOfSpeech pos) {
        using detail::ends_with;
        std::vector<std::string> out;
        auto add = [&](std::size_t strip, std::string_view repl) {
            if (w.size() <= strip) return;
            std::string stem = w.substr(0, w.size() - strip);
            if (stem.size() < 2 || !detail::has_vowel(stem)) return;
            out.push_back(stem + std::string(repl));
        };
        if (pos == PartOfSpeech::Verb) {
            if (ends_with(w, "ies")) add(3, "y");
            if (ends_with(w, "es")) {
                add(2, "e");
                add(2, "");
            }
            if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is"))
                add(1, "");
            if (ends_with(w, "ied")) add(3, "y");
            if (ends_with(w, "ed") && !ends_with(w, "eed")) {
                add(2, "e");
                add(2, "");
                if (w.size() > 4) {
                    auto stem = w.substr(0, w.size() - 2);
                    if (stem.size() >= 3 && stem.back() == stem[stem.size() - 2]) add(3, "");
                }
            }
            if (ends_with(w, "ing") && w.size() > 4) {
                add(3, "e");
                add(3, "");
                auto stem = w.substr(0, w.size() - 3);
                if (stem.size() >= 3 && stem.back() == stem[stem.size() - 2]) add(4, "");
            }
        } else {
            if (ends_with(w, "ies")) add(3, "y");
            for (std::string_view suf : {"sses", "xes", "zes", "ches", "shes"})
                if (ends_with(w, suf)) add(2, "");
            if (ends_with(w, "men")) add(3, "man");
            if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is"))
                add(1, "");
        }
        return out;
    }

    /// Best guess without a lexicon.
    static std::optional<std::string> heuristic(const std::string& w, PartOfSpeech pos) {
        using detail::ends_with;
        auto stem_of = [&](std::size_t strip) -> std::optional<std::string> {
            if (w.size() <= strip) return std::nullopt;
            std::string stem = w.substr(0, w.size() - strip);
            if (stem.size() < 2 || !detail::has_vowel(stem)) return std::nullopt;
            return stem;
        };
        if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
        if (pos == PartOfSpeech::Verb) {
            if (ends_with(w, "ied") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
            if (ends_with(w, "ing") && w.size() > 5)
                if (auto s = stem_of(3); s && s->size() >= 3) return detail::repair_stem(*s);
            if (ends_with(w, "ed") && !ends_with(w, "eed") && w.size() > 4)
                if (auto s = stem_of(2); s && s->size() >= 3) return detail::repair_stem(*s);
        }
        for (std::string_view suf : {"sses", "xes", "zzes", "ches", "shes"})
            if (ends_with(w, suf) && w.size() > suf.size() + 1) return w.substr(0, w.size() - 2);
        if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is") &&
            w.size() > 3)
            return w.substr(0, w.size() - 1);
        return std::nullopt;
    }

    std::string step(const std::string& w, std::optional<PartOfSpeech> pos) const {
        if (known(w)) return w;
        const bool try_verb = !pos || *pos == PartOfSpeech::Verb;
        const bool try_noun = !pos || *pos == PartOfSpeech::Noun;
        if (try_verb) {
            const auto& exc = detail::verb_exceptions();
            if (auto it = exc.find(w); it != exc.end()) return it->second;
        }
        if (try_noun) {
            const auto& exc = detail::noun_exceptions();
            if (auto it = exc.find(w); it != exc.end()) return it->second;
        }
        if (lexicon_) {
            for (auto p : {PartOfSpeech::Verb, PartOfSpeech::Noun}) {
                if ((p == PartOfSpeech::Verb && !try_verb) || (p == PartOfSpeech::Noun && !try_noun)) continue;
                for (const auto& c : candidates(w, p))
                    if (known(c)) return c;
            }
            return w;
        }
        auto guess = heuristic(w, try_verb ? PartOfSpeech::Verb : PartOfSpeech::Noun);
        return guess ? *guess : w;
    }

    std::optional<std::unordered_set<std::string>> lexicon_;
};

}  // namespace dmd
