#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dmd/error.hpp"
#include "dmd/http.hpp"
#include "dmd/util.hpp"

namespace dmd {

struct Sense {
    std::string definition;
    std::vector<std::string> examples;

    friend bool operator==(const Sense&, const Sense&) = default;
};

struct DictionaryEntry {
    std::string lemma;
    std::optional<std::string> pos;
    std::vector<Sense> senses;

    friend bool operator==(const DictionaryEntry&, const DictionaryEntry&) = default;
};

inline json entry_to_json(const DictionaryEntry& e) {
    json senses = json::array();
    for (const auto& s : e.senses) senses.push_back({{"definition", s.definition}, {"examples", s.examples}});
    json j{{"lemma", e.lemma}, {"senses", std::move(senses)}};
    if (e.pos) j["pos"] = *e.pos;
    return j;
}

inline DictionaryEntry entry_from_json(const json& j) {
    if (!j.is_object()) throw FormatError(0, "dictionary entry is not an object");
    DictionaryEntry e;
    if (!j.contains("lemma") || !j["lemma"].is_string() || j["lemma"].get<std::string>().empty())
        throw FormatError(0, "dictionary entry needs a non-empty 'lemma'");
    e.lemma = j["lemma"].get<std::string>();
    if (j.contains("pos") && j["pos"].is_string()) e.pos = j["pos"].get<std::string>();
    if (!j.contains("senses") || !j["senses"].is_array() || j["senses"].empty())
        throw FormatError(0, "dictionary entry '" + e.lemma + "' needs at least one sense");
    for (const auto& sj : j["senses"]) {
        if (!sj.is_object() || !sj.contains("definition") || !sj["definition"].is_string())
            throw FormatError(0, "sense of '" + e.lemma + "' needs a string 'definition'");
        Sense s;
        s.definition = sj["definition"].get<std::string>();
        if (sj.contains("examples")) {
            for (const auto& ex : sj["examples"]) {
                if (!ex.is_string()) throw FormatError(0, "example of '" + e.lemma + "' is not a string");
                s.examples.push_back(ex.get<std::string>());
            }
        }
        e.senses.push_back(std::move(s));
    }
    return e;
}

/// Source of definitions and usage examples for a lemma.
class DictionaryProvider {
public:
    virtual ~DictionaryProvider() = default;
    /// nullopt when the lemma is unknown. Remote providers may throw
    /// ProviderUnavailable.
    virtual std::optional<DictionaryEntry> lookup(const std::string& lemma) = 0;
    /// Every lemma the provider knows, if it can enumerate them. Feeds the
    /// lemmatizer's candidate validation.
    virtual std::optional<std::unordered_set<std::string>> lemma_set() const { return std::nullopt; }
};

/// In-memory dictionary loaded from JSONL. Repeated lemmas (e.g. one line
/// per part of speech) are merged: senses append in file order and the
/// first line's pos is kept.
class OfflineDictionary final : public DictionaryProvider {
public:
    OfflineDictionary() = default;
    explicit OfflineDictionary(const std::vector<DictionaryEntry>& entries) {
        for (const auto& e : entries) add(e);
    }

    static OfflineDictionary load(const std::string& path) {
        OfflineDictionary d;
        std::size_t line_no = 0;
        for (const auto& line : util::read_lines(path)) {
            ++line_no;
            if (util::trim(line).empty()) continue;
            try {
                d.add(entry_from_json(json::parse(line)));
            } catch (const json::parse_error& e) {
                throw FormatError(line_no, std::string("dictionary JSON: ") + e.what());
            } catch (const FormatError& e) {
                throw FormatError(line_no, e.what());
            }
        }
        return d;
    }

    std::optional<DictionaryEntry> lookup(const std::string& lemma) override {
        auto it = entries_.find(lemma);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::unordered_set<std::string>> lemma_set() const override {
        std::unordered_set<std::string> out;
        for (const auto& [k, _] : entries_) out.insert(k);
        return out;
    }

    std::size_t size() const noexcept { return entries_.size(); }

private:
    void add(const DictionaryEntry& e) {
        auto [it, inserted] = entries_.emplace(e.lemma, e);
        if (!inserted) it->second.senses.insert(it->second.senses.end(), e.senses.begin(), e.senses.end());
    }

    std::map<std::string, DictionaryEntry> entries_;
};

/// Remote dictionary: GET {base_url}/{lemma} returns an entry as JSON, 404
/// means unknown. Answers (including misses) are cached in memory and, when
/// a cache directory is set, as one JSON file per lemma.
class HttpDictionary final : public DictionaryProvider {
public:
    static constexpr const char* kBaseUrlEnv = "DMD_DICTIONARY_URL";

    HttpDictionary(std::string base_url, std::optional<std::string> cache_dir,
                   std::chrono::milliseconds timeout = std::chrono::seconds(15))
        : base_url_(std::move(base_url)), cache_dir_(std::move(cache_dir)), timeout_(timeout) {
        if (cache_dir_) std::filesystem::create_directories(*cache_dir_);
    }

    std::optional<DictionaryEntry> lookup(const std::string& lemma) override {
        {
            std::shared_lock lock(mu_);
            if (auto it = memory_.find(lemma); it != memory_.end()) return it->second;
        }
        if (auto cached = read_disk(lemma)) {
            std::unique_lock lock(mu_);
            memory_.emplace(lemma, *cached);
            return *cached;
        }
        auto fetched = fetch(lemma);
        std::unique_lock lock(mu_);
        memory_.emplace(lemma, fetched);
        write_disk(lemma, fetched);
        return fetched;
    }

    std::size_t network_calls() const noexcept { return network_calls_.load(); }

    static std::string cache_file_name(const std::string& lemma) {
        std::string out;
        for (unsigned char c : lemma) {
            if (std::isalnum(c) || c == '-' || c == '_') {
                out.push_back(static_cast<char>(c));
            } else {
                char buf[4];
                std::snprintf(buf, sizeof buf, "%%%02X", c);
                out += buf;
            }
        }
        return out + ".json";
    }

private:
    std::optional<DictionaryEntry> fetch(const std::string& lemma) {
        ++network_calls_;
        httplib::Result res;
        try {
            const auto url = http::split_url(base_url_);
            auto cli = http::make_client(url.origin, timeout_);
            res = cli->Get(url.path + "/" + httplib::detail::encode_url(lemma));
        } catch (const Error& e) {
            throw ProviderUnavailable(std::string("dictionary: ") + e.what());
        }
        if (!res) throw ProviderUnavailable("dictionary request failed: " + httplib::to_string(res.error()));
        if (res->status == 404) return std::nullopt;
        if (res->status != 200)
            throw ProviderUnavailable("dictionary returned HTTP " + std::to_string(res->status));
        try {
            return entry_from_json(json::parse(res->body));
        } catch (const std::exception& e) {
            throw ProviderUnavailable(std::string("dictionary response unusable: ") + e.what());
        }
    }

    std::optional<std::optional<DictionaryEntry>> read_disk(const std::string& lemma) const {
        if (!cache_dir_) return std::nullopt;
        const auto p = std::filesystem::path(*cache_dir_) / cache_file_name(lemma);
        if (!std::filesystem::exists(p)) return std::nullopt;
        try {
            auto j = json::parse(util::read_file(p.string()));
            if (j.value("found", true) == false) return std::optional<DictionaryEntry>{};
            return std::optional<DictionaryEntry>{entry_from_json(j)};
        } catch (const std::exception&) {
            return std::nullopt;  // unreadable cache file: refetch
        }
    }

    void write_disk(const std::string& lemma, const std::optional<DictionaryEntry>& e) const {
        if (!cache_dir_) return;
        const auto p = std::filesystem::path(*cache_dir_) / cache_file_name(lemma);
        json j = e ? entry_to_json(*e) : json{{"lemma", lemma}, {"found", false}};
        util::write_file(p.string(), j.dump());
    }

    std::string base_url_;
    std::optional<std::string> cache_dir_;
    std::chrono::milliseconds timeout_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::optional<DictionaryEntry>> memory_;
    std::atomic<std::size_t> network_calls_{0};
};

inline std::optional<DictionaryEntry> lookup_dictionary(DictionaryProvider& provider, const std::string& lemma) {
    return provider.lookup(lemma);
}

}  // namespace dmd
