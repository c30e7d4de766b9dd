#pragma once

#include <chrono>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "posaudit/backend_types.hpp"

namespace posaudit {

struct CapabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HttpBackendConfig {
    std::string base_url;           // e.g. "http://localhost:8000"
    std::string model;
    std::string api_key_env;        // env var holding the API key; empty = no auth header
    std::string chat_path = "/v1/chat/completions";
    bool supports_continuation = false;  // assistant-prefix continuation capability
    int max_retries = 4;
    int initial_backoff_ms = 500;
    int rate_limit_rpm = 0;  // 0 = unlimited
    int timeout_s = 300;
};

// Chat-completion client: system+user messages in, content plus optional
// reasoning_content out. Transport failures retry with exponential backoff;
// exhausted retries yield finish_reason=error so the run can continue.
class HttpBackend : public Backend {
  public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty()) throw std::invalid_argument("HttpBackend: base_url required");
    }

    std::string id() const override { return "http:" + config_.base_url; }
    bool supports_continuation() const override { return config_.supports_continuation; }

    BackendOutput generate(const PromptBundle& prompt, const DecodeConfig& decode) override {
        decode.validate();
        nlohmann::json body = request_body(prompt, decode);
        return post_with_retries(body);
    }

    std::vector<BackendOutput> continue_from(const PromptBundle& prompt,
                                             const std::string& prefix_text,
                                             const DecodeConfig& decode, int n) override {
        if (!config_.supports_continuation)
            throw CapabilityError("backend " + id() + " does not support continuation");
        decode.validate();
        std::vector<BackendOutput> outs;
        outs.reserve(n);
        for (int i = 0; i < n; ++i) {
            DecodeConfig d = decode;
            d.seed = hash_combine(decode.seed, static_cast<std::uint64_t>(i));
            nlohmann::json body = request_body(prompt, d);
            body["messages"].push_back(
                {{"role", "assistant"}, {"content", prefix_text}, {"prefix", true}});
            body["continue_final_message"] = true;
            body["add_generation_prompt"] = false;
            outs.push_back(post_with_retries(body));
        }
        return outs;
    }

  private:
    nlohmann::json request_body(const PromptBundle& prompt, const DecodeConfig& decode) const {
        nlohmann::json body{
            {"model", config_.model},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", prompt.system_text}},
                                    {{"role", "user"}, {"content", prompt.user_text}}})},
            {"max_tokens", decode.max_tokens},
            {"seed", decode.seed},
        };
        if (decode.strategy == DecodeStrategy::greedy) {
            body["temperature"] = 0.0;
        } else {
            body["temperature"] = decode.temperature;
            body["top_p"] = decode.top_p;
        }
        return body;
    }

    BackendOutput post_with_retries(const nlohmann::json& body) {
        int backoff_ms = config_.initial_backoff_ms;
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
            rate_limit();
            httplib::Client client(config_.base_url);
            client.set_read_timeout(config_.timeout_s, 0);
            client.set_connection_timeout(10, 0);
            httplib::Headers headers;
            if (!config_.api_key_env.empty()) {
                const char* key = std::getenv(config_.api_key_env.c_str());
                if (!key)
                    return error_output("API key env var not set: " + config_.api_key_env);
                headers.emplace("Authorization", std::string("Bearer ") + key);
            }
            auto res = client.Post(config_.chat_path, headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 401 || res->status == 403)
                return error_output("auth error: HTTP " + std::to_string(res->status));
            if (res->status >= 500 || res->status == 429) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                return error_output("HTTP " + std::to_string(res->status) + ": " + res->body);
            return parse_response(res->body);
        }
        return error_output("retries exhausted: " + last_error);
    }

    BackendOutput parse_response(const std::string& body) const {
        try {
            nlohmann::json j = nlohmann::json::parse(body);
            const auto& choice = j.at("choices").at(0);
            const auto& message = choice.at("message");
            BackendOutput out;
            out.text = message.value("content", "");
            if (message.contains("reasoning_content") && message["reasoning_content"].is_string())
                out.reasoning_text = message["reasoning_content"].get<std::string>();
            std::string reason = choice.value("finish_reason", "stop");
            out.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
            return out;
        } catch (const std::exception& e) {
            return error_output(std::string("malformed response: ") + e.what());
        }
    }

    static BackendOutput error_output(const std::string& message) {
        BackendOutput out;
        out.finish_reason = FinishReason::error;
        out.error_message = message;
        return out;
    }

    void rate_limit() {
        if (config_.rate_limit_rpm <= 0) return;
        using clock = std::chrono::steady_clock;
        std::unique_lock lock(rate_mu_);
        auto now = clock::now();
        while (!request_times_.empty() && now - request_times_.front() > std::chrono::minutes(1))
            request_times_.pop_front();
        if (static_cast<int>(request_times_.size()) >= config_.rate_limit_rpm) {
            auto wait_until = request_times_.front() + std::chrono::minutes(1);
            lock.unlock();
            std::this_thread::sleep_until(wait_until);
            lock.lock();
            now = clock::now();
            while (!request_times_.empty() &&
                   now - request_times_.front() > std::chrono::minutes(1))
                request_times_.pop_front();
        }
        request_times_.push_back(clock::now());
    }

    HttpBackendConfig config_;
    std::mutex rate_mu_;
    std::deque<std::chrono::steady_clock::time_point> request_times_;
};

}  // namespace posaudit
