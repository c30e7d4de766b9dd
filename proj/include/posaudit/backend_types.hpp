#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "posaudit/mcq.hpp"
#include "posaudit/util.hpp"

namespace posaudit {

enum class DecodeStrategy { greedy, nucleus };

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::greedy;
    double top_p = 0.95;
    double temperature = 0.7;
    int max_tokens = 8192;
    std::uint64_t seed = 0;

    void validate() const {
        if (strategy == DecodeStrategy::nucleus) {
            if (!(top_p > 0.0 && top_p <= 1.0))
                throw std::invalid_argument("nucleus decoding requires top_p in (0,1]");
            if (!(temperature > 0.0))
                throw std::invalid_argument("nucleus decoding requires temperature > 0");
        }
        if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
    }

    // Stable string used in cache keys; greedy ignores top_p/temperature.
    std::string fingerprint() const {
        if (strategy == DecodeStrategy::greedy)
            return "greedy/mt=" + std::to_string(max_tokens) + "/seed=" + std::to_string(seed);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "nucleus/p=%.4f/T=%.4f/mt=%d/seed=%llu", top_p, temperature,
                      max_tokens, static_cast<unsigned long long>(seed));
        return buf;
    }
};

enum class FinishReason { stop, length, error };

inline std::string to_string(FinishReason r) {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    throw std::logic_error("bad FinishReason");
}

inline FinishReason finish_reason_from_string(const std::string& s) {
    if (s == "stop") return FinishReason::stop;
    if (s == "length") return FinishReason::length;
    if (s == "error") return FinishReason::error;
    throw std::invalid_argument("unknown finish reason: " + s);
}

struct BackendOutput {
    std::string text;
    std::optional<std::string> reasoning_text;  // separately-returned reasoning field
    FinishReason finish_reason = FinishReason::stop;
    std::string error_message;

    bool ok() const { return finish_reason != FinishReason::error; }
    // The analysis trajectory: reasoning (when present) followed by text.
    std::string full_trajectory() const {
        return reasoning_text ? *reasoning_text + text : text;
    }
};

struct CacheKey {
    std::string backend_id;
    std::string model;
    std::string mode;
    std::string dataset_id;
    std::string question_id;
    int shift = 0;
    std::string decode_fingerprint;
    std::string continuation_fingerprint;  // empty for main-run generations

    std::string to_string() const {
        return backend_id + "|" + model + "|" + mode + "|" + dataset_id + "|" + question_id + "|s" +
               std::to_string(shift) + "|" + decode_fingerprint + "|" + continuation_fingerprint;
    }
    std::uint64_t hash() const { return hash_str(to_string()); }
    bool operator==(const CacheKey&) const = default;
};

class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual bool supports_continuation() const = 0;
    virtual BackendOutput generate(const PromptBundle& prompt, const DecodeConfig& decode) = 0;
    // n independent continuations of prefix_text, each with a distinct derived seed.
    // Outputs hold the continuation only, not the prefix.
    virtual std::vector<BackendOutput> continue_from(const PromptBundle& prompt,
                                                     const std::string& prefix_text,
                                                     const DecodeConfig& decode, int n) = 0;
};

}  // namespace posaudit
