#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dmd/core.hpp"
#include "dmd/error.hpp"
#include "dmd/util.hpp"

namespace dmd {

enum class Role { System, User, Assistant };

inline std::string_view to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// Pipeline stage that issued a model call.
enum class Stage { Implicit, Explicit, Thoughts, Judge };

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Implicit: return "implicit";
        case Stage::Explicit: return "explicit";
        case Stage::Thoughts: return "thoughts";
        case Stage::Judge: return "judge";
    }
    return "implicit";
}

inline std::optional<Stage> parse_stage(std::string_view s) {
    const auto l = util::to_lower(s);
    if (l == "implicit") return Stage::Implicit;
    if (l == "explicit") return Stage::Explicit;
    if (l == "thoughts") return Stage::Thoughts;
    if (l == "judge") return Stage::Judge;
    return std::nullopt;
}

struct LlmConfig {
    std::string model_name = "gpt-3.5-turbo-0613";
    double temperature = 0.0;
    std::size_t max_tokens = 512;
    std::chrono::milliseconds timeout{60'000};
    std::size_t max_retries = 3;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";

    void validate() const {
        if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
        if (model_name.empty()) throw ConfigError("model name must not be empty");
    }
};

/// Chat-completions request body for `messages` under `config`.
inline json chat_request_body(const LlmConfig& config, const std::vector<ChatMessage>& messages) {
    json msgs = json::array();
    for (const auto& m : messages)
        msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    return {{"model", config.model_name},
            {"messages", std::move(msgs)},
            {"temperature", config.temperature},
            {"max_tokens", config.max_tokens}};
}

/// Which run/sample/stage a call belongs to; carried into the transcript.
struct CallContext {
    std::string run_id;
    std::string sample_id;
    Stage stage = Stage::Implicit;
};

struct Transcript {
    json request;
    std::string response;
    std::string model;
    std::int64_t latency_ms = 0;
    std::string timestamp;
    std::string run_id;
    std::string sample_id;
    Stage stage = Stage::Implicit;
    std::size_t attempts = 1;
    std::optional<std::string> error;

    json to_json() const {
        json j{{"run_id", run_id},       {"sample_id", sample_id}, {"stage", std::string(to_string(stage))},
               {"model", model},         {"request", request},     {"response", response},
               {"attempts", attempts},   {"latency_ms", latency_ms}, {"timestamp", timestamp}};
        if (error) j["error"] = *error;
        return j;
    }
};

/// Transport behind the gateway. Implementations throw TransportError,
/// TimeoutError or ApiError; the gateway decides what to retry.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const LlmConfig& config, const std::vector<ChatMessage>& messages,
                                 Stage stage) = 0;
};

// ---- scripted mock ---------------------------------------------------------

/// A mock rule. With `match` set it is a persistent matcher fired whenever
/// the concatenated prompt contains the substring; without it, a FIFO entry
/// consumed once. `stage` optionally restricts either kind.
struct MockRule {
    std::optional<std::string> match;
    std::optional<Stage> stage;
    std::string response;
};

struct CapturedRequest {
    Stage stage;
    std::vector<ChatMessage> messages;

    std::string text() const {
        std::string out;
        for (const auto& m : messages) {
            if (!out.empty()) out += '\n';
            out += m.content;
        }
        return out;
    }
};

/// Deterministic scripted backend. Matchers are tried in rule order before
/// any FIFO entry. Calls are serialized.
class MockBackend final : public LlmBackend {
public:
    explicit MockBackend(std::vector<MockRule> rules) {
        for (auto& r : rules) {
            if (r.match) matchers_.push_back(std::move(r));
            else fifo_.push_back({std::move(r), false});
        }
    }

    /// Script file: {"rules":[{"match":"...","stage":"judge","response":"..."}, ...]}
    /// or a bare array of rules.
    static std::vector<MockRule> rules_from_json(const json& j) {
        const json& arr = j.is_object() ? j.at("rules") : j;
        if (!arr.is_array()) throw FormatError(0, "mock script must be an array of rules");
        std::vector<MockRule> rules;
        for (const auto& rj : arr) {
            if (!rj.is_object() || !rj.contains("response") || !rj["response"].is_string())
                throw FormatError(0, "mock rule needs a string 'response'");
            MockRule r;
            r.response = rj["response"].get<std::string>();
            if (rj.contains("match")) r.match = rj["match"].get<std::string>();
            if (rj.contains("stage")) {
                r.stage = parse_stage(rj["stage"].get<std::string>());
                if (!r.stage) throw FormatError(0, "unknown stage in mock rule");
            }
            rules.push_back(std::move(r));
        }
        return rules;
    }

    static json rules_to_json(const std::vector<MockRule>& rules) {
        json arr = json::array();
        for (const auto& r : rules) {
            json rj{{"response", r.response}};
            if (r.match) rj["match"] = *r.match;
            if (r.stage) rj["stage"] = std::string(to_string(*r.stage));
            arr.push_back(std::move(rj));
        }
        return {{"rules", std::move(arr)}};
    }

    std::string complete(const LlmConfig&, const std::vector<ChatMessage>& messages, Stage stage) override {
        std::lock_guard lock(mu_);
        captured_.push_back({stage, messages});
        const auto text = captured_.back().text();
        for (const auto& r : matchers_) {
            if (r.stage && *r.stage != stage) continue;
            if (util::contains(text, *r.match)) return r.response;
        }
        for (auto& [r, used] : fifo_) {
            if (used || (r.stage && *r.stage != stage)) continue;
            used = true;
            return r.response;
        }
        throw ScriptExhausted();
    }

    std::vector<CapturedRequest> captured() const {
        std::lock_guard lock(mu_);
        return captured_;
    }

    std::size_t call_count() const {
        std::lock_guard lock(mu_);
        return captured_.size();
    }

private:
    mutable std::mutex mu_;
    std::vector<MockRule> matchers_;
    std::vector<std::pair<MockRule, bool>> fifo_;
    std::vector<CapturedRequest> captured_;
};

// ---- gateway ---------------------------------------------------------------

struct GatewayOptions {
    std::size_t max_in_flight = 4;
    std::optional<std::string> transcript_path;
    std::chrono::milliseconds backoff_base{500};
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// The model call used by every stage: validates input, bounds concurrency,
/// retries transient failures with exponential backoff and records one
/// transcript per call (however many attempts it took).
class Gateway {
public:
    explicit Gateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options = {})
        : backend_(std::move(backend)),
          options_(std::move(options)),
          slots_(static_cast<std::ptrdiff_t>(options_.max_in_flight == 0 ? 1 : options_.max_in_flight)) {
        if (options_.max_in_flight > kMaxSlots) throw ConfigError("max_in_flight too large");
        if (options_.transcript_path) {
            log_.open(*options_.transcript_path, std::ios::app);
            if (!log_) throw IoError("cannot open transcript log: " + *options_.transcript_path);
        }
    }

    std::string complete(const LlmConfig& config, const std::vector<ChatMessage>& messages,
                         const CallContext& ctx) {
        if (messages.empty()) throw PreconditionError("complete() needs at least one message");
        if (messages.front().role == Role::Assistant)
            throw PreconditionError("first message must be system or user");
        for (const auto& m : messages)
            if (m.content.empty()) throw PreconditionError("message content must be non-empty");

        Transcript t;
        t.request = chat_request_body(config, messages);
        t.model = config.model_name;
        t.run_id = ctx.run_id;
        t.sample_id = ctx.sample_id;
        t.stage = ctx.stage;
        t.timestamp = utc_timestamp();

        slots_.acquire();
        const auto start = std::chrono::steady_clock::now();
        std::exception_ptr failure;
        std::size_t attempt = 0;
        for (;; ++attempt) {
            try {
                t.response = backend_->complete(config, messages, ctx.stage);
                failure = nullptr;
                break;
            } catch (const ApiError& e) {
                failure = std::current_exception();
                if (!e.retryable() || attempt >= config.max_retries) break;
            } catch (const TransportError&) {
                failure = std::current_exception();
                if (attempt >= config.max_retries) break;
            } catch (const TimeoutError&) {
                failure = std::current_exception();
                if (attempt >= config.max_retries) break;
            } catch (...) {
                failure = std::current_exception();
                break;
            }
            std::this_thread::sleep_for(options_.backoff_base * (1LL << std::min<std::size_t>(attempt, 16)));
        }
        slots_.release();
        t.attempts = attempt + 1;
        t.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        if (failure) {
            try {
                std::rethrow_exception(failure);
            } catch (const std::exception& e) {
                t.error = e.what();
            }
        }
        std::string response = t.response;
        record(std::move(t));
        if (failure) std::rethrow_exception(failure);
        return response;
    }

    std::vector<Transcript> transcripts() const {
        std::lock_guard lock(mu_);
        return transcripts_;
    }

    std::size_t call_count() const {
        std::lock_guard lock(mu_);
        return transcripts_.size();
    }

    /// Number of recorded calls tagged with this run and sample.
    std::size_t call_count(const std::string& run_id, const std::string& sample_id) const {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& t : transcripts_)
            if (t.run_id == run_id && t.sample_id == sample_id) ++n;
        return n;
    }

private:
    static constexpr std::ptrdiff_t kMaxSlots = 1024;

    void record(Transcript t) {
        std::lock_guard lock(mu_);
        if (log_.is_open()) {
            log_ << t.to_json().dump() << '\n';
            log_.flush();
        }
        transcripts_.push_back(std::move(t));
    }

    std::shared_ptr<LlmBackend> backend_;
    GatewayOptions options_;
    std::counting_semaphore<kMaxSlots> slots_;
    mutable std::mutex mu_;
    std::ofstream log_;
    std::vector<Transcript> transcripts_;
};

}  // namespace dmd
