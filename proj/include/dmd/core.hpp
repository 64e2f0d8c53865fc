#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmd/error.hpp"
#include "dmd/util.hpp"

namespace dmd {

using json = nlohmann::json;

enum class Label { Metaphorical, Literal };

inline std::string_view to_string(Label l) {
    return l == Label::Metaphorical ? "metaphorical" : "literal";
}

/// Case-insensitive; nullopt for anything other than the two label names.
inline std::optional<Label> parse_label(std::string_view s) {
    const auto lower = util::to_lower(util::trim(s));
    if (lower == "metaphorical") return Label::Metaphorical;
    if (lower == "literal") return Label::Literal;
    return std::nullopt;
}

/// One annotated (or unannotated) instance: a whitespace-tokenized sentence
/// with a single target word. Immutable once constructed.
class Sample {
public:
    /// Throws PreconditionError if the sentence has no words or the index is
    /// out of range.
    Sample(std::string id, std::string sentence, std::size_t target_index,
           std::optional<Label> label = std::nullopt, json extra = json::object())
        : id_(std::move(id)),
          sentence_(std::move(sentence)),
          words_(util::split_whitespace(sentence_)),
          target_index_(target_index),
          label_(label),
          extra_(std::move(extra)) {
        if (words_.empty()) throw PreconditionError("sample '" + id_ + "' has an empty sentence");
        if (target_index_ >= words_.size())
            throw PreconditionError("sample '" + id_ + "': target_index out of range");
    }

    const std::string& id() const noexcept { return id_; }
    const std::string& sentence() const noexcept { return sentence_; }
    const std::vector<std::string>& words() const noexcept { return words_; }
    std::size_t target_index() const noexcept { return target_index_; }
    const std::string& target_word() const noexcept { return words_[target_index_]; }
    const std::optional<Label>& label() const noexcept { return label_; }
    /// Unrecognized fields from the source record, preserved for output.
    const json& extra() const noexcept { return extra_; }

    Sample with_id(std::string id) const {
        Sample s = *this;
        s.id_ = std::move(id);
        return s;
    }

    friend bool operator==(const Sample& a, const Sample& b) {
        return a.id_ == b.id_ && a.sentence_ == b.sentence_ && a.target_index_ == b.target_index_ &&
               a.label_ == b.label_ && a.extra_ == b.extra_;
    }

private:
    std::string id_;
    std::string sentence_;
    std::vector<std::string> words_;
    std::size_t target_index_;
    std::optional<Label> label_;
    json extra_;
};

struct Dataset {
    std::string name;
    std::vector<Sample> samples;
};

inline json sample_to_json(const Sample& s) {
    json j = s.extra().is_object() ? s.extra() : json::object();
    j["id"] = s.id();
    j["sentence"] = s.sentence();
    j["target_index"] = s.target_index();
    j["target_word"] = s.target_word();
    if (s.label()) j["label"] = std::string(to_string(*s.label()));
    return j;
}

namespace detail {

struct SampleParseFailure {
    bool index_out_of_range = false;
    std::size_t index = 0;
    std::size_t words = 0;
    std::string reason;
};

/// Returns the sample, or fills `failure` and returns nullopt.
inline std::optional<Sample> sample_from_json_impl(const json& j, std::string fallback_id,
                                                   SampleParseFailure& failure) {
    if (!j.is_object()) {
        failure.reason = "record is not a JSON object";
        return std::nullopt;
    }
    auto sit = j.find("sentence");
    if (sit == j.end() || !sit->is_string()) {
        failure.reason = "missing or non-string field 'sentence'";
        return std::nullopt;
    }
    auto tit = j.find("target_index");
    if (tit == j.end() || !tit->is_number_integer() ||
        (tit->is_number_integer() && !tit->is_number_unsigned() && tit->get<std::int64_t>() < 0)) {
        failure.reason = "missing or invalid field 'target_index'";
        return std::nullopt;
    }
    std::string id = std::move(fallback_id);
    if (auto iit = j.find("id"); iit != j.end()) {
        if (!iit->is_string() || iit->get<std::string>().empty()) {
            failure.reason = "field 'id' must be a non-empty string";
            return std::nullopt;
        }
        id = iit->get<std::string>();
    }
    std::optional<Label> label;
    if (auto lit = j.find("label"); lit != j.end() && !lit->is_null()) {
        if (!lit->is_string() || !(label = parse_label(lit->get<std::string>()))) {
            failure.reason = "field 'label' must be \"metaphorical\" or \"literal\"";
            return std::nullopt;
        }
    }
    const auto sentence = sit->get<std::string>();
    const auto words = util::split_whitespace(sentence);
    if (words.empty()) {
        failure.reason = "sentence has no words";
        return std::nullopt;
    }
    const auto index = tit->get<std::uint64_t>();
    if (index >= words.size()) {
        failure.index_out_of_range = true;
        failure.index = index;
        failure.words = words.size();
        return std::nullopt;
    }
    if (auto wit = j.find("target_word"); wit != j.end()) {
        if (!wit->is_string() || wit->get<std::string>() != words[index]) {
            failure.reason = "field 'target_word' does not match words[target_index]";
            return std::nullopt;
        }
    }
    json extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k != "id" && k != "sentence" && k != "target_index" && k != "target_word" && k != "label")
            extra[k] = it.value();
    }
    return Sample(std::move(id), sentence, index, label, std::move(extra));
}

}  // namespace detail

/// Inverse of sample_to_json. Throws FormatError on invalid input.
inline Sample sample_from_json(const json& j) {
    detail::SampleParseFailure f;
    if (auto s = detail::sample_from_json_impl(j, "", f); s && !s->id().empty()) return *s;
    if (f.index_out_of_range) throw FormatError(0, "target_index out of range");
    throw FormatError(0, f.reason.empty() ? "missing field 'id'" : f.reason);
}

/// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based
/// and count blank lines.
inline Dataset parse_dataset_text(std::string_view text, std::string name) {
    Dataset ds{std::move(name), {}};
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (util::trim(line).empty()) {
            if (eol == text.size()) break;
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw MalformedRecord(line_no, std::string("invalid JSON: ") + e.what());
        }
        detail::SampleParseFailure f;
        auto s = detail::sample_from_json_impl(j, ds.name + ":" + std::to_string(line_no), f);
        if (!s) {
            if (f.index_out_of_range) throw IndexOutOfRange(line_no, f.index, f.words);
            throw MalformedRecord(line_no, f.reason);
        }
        if (!seen.insert(s->id()).second) throw DuplicateId(s->id());
        ds.samples.push_back(std::move(*s));
        if (eol == text.size()) break;
    }
    return ds;
}

/// Dataset name is the file stem.
inline Dataset parse_dataset(const std::string& path) {
    return parse_dataset_text(util::read_file(path), std::filesystem::path(path).stem().string());
}

inline std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    for (const auto& s : ds.samples) {
        out += sample_to_json(s).dump();
        out += '\n';
    }
    return out;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    util::write_file(path, serialize_dataset(ds));
}

/// Draws n_per_class samples of each label uniformly without replacement
/// (partial Fisher-Yates over a seeded mt19937_64). The result keeps the
/// original dataset order.
inline Dataset balanced_sample(const Dataset& ds, std::size_t n_per_class, std::uint64_t seed) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& lbl = ds.samples[i].label();
        if (!lbl) throw UnlabeledSample(ds.samples[i].id());
        by_class[*lbl == Label::Metaphorical ? 0 : 1].push_back(i);
    }
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < n_per_class)
            throw InsufficientClass(std::string(to_string(c == 0 ? Label::Metaphorical : Label::Literal)),
                                    by_class[c].size(), n_per_class);
    }
    std::mt19937_64 eng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(2 * n_per_class);
    for (auto& pool : by_class) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            auto j = i + util::uniform_below(eng, pool.size() - i);
            std::swap(pool[i], pool[j]);
            chosen.push_back(pool[i]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    Dataset out{ds.name, {}};
    out.samples.reserve(chosen.size());
    for (auto idx : chosen) out.samples.push_back(ds.samples[idx]);
    return out;
}

}  // namespace dmd
