#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

#include "dmd/features.hpp"
#include "dmd/http.hpp"

namespace dmd {

/// Client for a remote embedding service.
///
/// POST <url> with {"id","sentence","words","target_index","target_word"};
/// the service answers {"v_s":[...],"v_st":[...],"v_t":[...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(std::string url,
                                   std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : url_(std::move(url)), parts_(http::split_url(url_)), timeout_(timeout) {}

    TheoryInputs encode(const Sample& sample) const override {
        auto cli = http::make_client(parts_.origin, timeout_);
        const json req{{"id", sample.id()},
                       {"sentence", sample.sentence()},
                       {"words", sample.words()},
                       {"target_index", sample.target_index()},
                       {"target_word", sample.target_word()}};
        auto res = cli->Post(parts_.path.empty() ? "/" : parts_.path, req.dump(), "application/json");
        if (!res) http::throw_transport(res.error(), "embedding request failed");
        if (res->status == 404) throw MissingEmbedding(sample.id());
        if (res->status != 200) throw ApiError(res->status, res->body);
        json j;
        try {
            j = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw FormatError(e.byte, std::string("embedding response: ") + e.what());
        }
        for (const char* key : {"v_s", "v_st", "v_t"})
            if (!j.contains(key)) throw FormatError(0, std::string("embedding response missing '") + key + "'");
        TheoryInputs in{detail::json_to_vector(j["v_s"], "v_s"), detail::json_to_vector(j["v_st"], "v_st"),
                        detail::json_to_vector(j["v_t"], "v_t")};
        if (in.v_s.empty() || in.v_s.size() != in.v_st.size() || in.v_s.size() != in.v_t.size())
            throw ShapeError("embedding response vector dims disagree");
        return in;
    }

    std::string spec() const override { return "http:" + url_; }

private:
    std::string url_;
    http::Url parts_;
    std::chrono::milliseconds timeout_;
};

}  // namespace dmd
