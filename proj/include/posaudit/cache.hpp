#pragma once

#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "posaudit/backend_types.hpp"

namespace posaudit {

inline constexpr int kCacheSchemaVersion = 1;

// Append-only persistent generation cache, one JSON object per line with the
// key fields flattened alongside the output. get() returns the last write for
// a key; corrupt lines are skipped and counted.
class GenerationCache {
  public:
    explicit GenerationCache(std::string path) : path_(std::move(path)) { load(); }

    std::optional<BackendOutput> get(const CacheKey& key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key.to_string());
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(const CacheKey& key, const BackendOutput& output) {
        std::lock_guard lock(mu_);
        nlohmann::json j{
            {"schema_version", kCacheSchemaVersion},
            {"backend_id", key.backend_id},
            {"model", key.model},
            {"mode", key.mode},
            {"dataset_id", key.dataset_id},
            {"question_id", key.question_id},
            {"shift", key.shift},
            {"decode_fingerprint", key.decode_fingerprint},
            {"continuation_fingerprint", key.continuation_fingerprint},
            {"text", output.text},
            {"finish_reason", to_string(output.finish_reason)},
            {"error_message", output.error_message},
        };
        if (output.reasoning_text) j["reasoning_text"] = *output.reasoning_text;
        std::ofstream out(path_, std::ios::app);
        if (!out) throw std::runtime_error("cannot append to cache file: " + path_);
        out << j.dump() << "\n";
        out.flush();
        entries_[key.to_string()] = output;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }
    std::size_t corrupt_lines() const { return corrupt_lines_; }
    const std::string& path() const { return path_; }

  private:
    void load() {
        std::ifstream in(path_);
        if (!in) return;  // no cache yet
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                nlohmann::json j = nlohmann::json::parse(line);
                CacheKey key;
                key.backend_id = j.at("backend_id").get<std::string>();
                key.model = j.at("model").get<std::string>();
                key.mode = j.at("mode").get<std::string>();
                key.dataset_id = j.at("dataset_id").get<std::string>();
                key.question_id = j.at("question_id").get<std::string>();
                key.shift = j.at("shift").get<int>();
                key.decode_fingerprint = j.at("decode_fingerprint").get<std::string>();
                key.continuation_fingerprint = j.at("continuation_fingerprint").get<std::string>();
                BackendOutput out;
                out.text = j.at("text").get<std::string>();
                out.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
                out.error_message = j.value("error_message", "");
                if (j.contains("reasoning_text"))
                    out.reasoning_text = j["reasoning_text"].get<std::string>();
                entries_[key.to_string()] = std::move(out);
            } catch (const std::exception&) {
                ++corrupt_lines_;
            }
        }
    }

    std::string path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, BackendOutput> entries_;
    std::size_t corrupt_lines_ = 0;
};

}  // namespace posaudit
