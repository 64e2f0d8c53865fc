#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmd/http.hpp"
#include "dmd/llm.hpp"

namespace dmd {

/// OpenAI-compatible chat-completions client: POST {base_url}/chat/completions.
/// The API key is read from the environment variable named in the config on
/// every call and never persisted.
class OpenAiBackend final : public LlmBackend {
public:
    std::string complete(const LlmConfig& config, const std::vector<ChatMessage>& messages,
                         Stage) override {
        const auto url = http::split_url(config.base_url);
        auto cli = http::make_client(url.origin, config.timeout);
        httplib::Headers headers;
        if (!config.api_key_env.empty()) {
            if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
                headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        const auto body = chat_request_body(config, messages).dump();
        auto res = cli->Post(url.path + "/chat/completions", headers, body, "application/json");
        if (!res) http::throw_transport(res.error(), "chat completion request failed");
        if (res->status != 200) throw ApiError(res->status, res->body);
        try {
            auto j = json::parse(res->body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            if (!content.is_string()) throw ApiError(res->status, "response content is not a string");
            return content.get<std::string>();
        } catch (const json::exception& e) {
            throw ApiError(res->status, std::string("unparseable response body: ") + e.what());
        }
    }
};

}  // namespace dmd
