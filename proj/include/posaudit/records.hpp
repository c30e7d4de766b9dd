#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "posaudit/backend_types.hpp"
#include "posaudit/http_backend.hpp"
#include "posaudit/intervene.hpp"
#include "posaudit/mocksim.hpp"
#include "posaudit/parse.hpp"

namespace posaudit {

inline constexpr int kRecordSchemaVersion = 1;

// One (question, permutation) generation with its analysis results.
struct GenerationRecord {
    std::string run_id;
    std::string question_id;
    int shift = 0;
    int correct_position = 0;
    int correct_index = 0;
    std::string subject;
    BackendOutput output;
    // analysis fields, recomputable from output
    std::optional<char> final_answer;
    std::size_t total_chars = 0;
    std::optional<double> ccp_value;
    std::optional<double> effsw_value;
    int n_mentions = 0;

    bool operator==(const GenerationRecord& other) const {
        return run_id == other.run_id && question_id == other.question_id &&
               shift == other.shift && correct_position == other.correct_position &&
               correct_index == other.correct_index && subject == other.subject &&
               output.text == other.output.text &&
               output.reasoning_text == other.output.reasoning_text &&
               output.finish_reason == other.output.finish_reason &&
               final_answer == other.final_answer && total_chars == other.total_chars &&
               ccp_value == other.ccp_value && effsw_value == other.effsw_value &&
               n_mentions == other.n_mentions;
    }
};

inline nlohmann::json to_json(const GenerationRecord& r) {
    nlohmann::json j{
        {"schema_version", kRecordSchemaVersion},
        {"run_id", r.run_id},
        {"question_id", r.question_id},
        {"shift", r.shift},
        {"correct_position", r.correct_position},
        {"correct_index", r.correct_index},
        {"subject", r.subject},
        {"text", r.output.text},
        {"finish_reason", to_string(r.output.finish_reason)},
        {"error_message", r.output.error_message},
        {"total_chars", r.total_chars},
        {"n_mentions", r.n_mentions},
    };
    if (r.output.reasoning_text) j["reasoning_text"] = *r.output.reasoning_text;
    if (r.final_answer) j["final_answer"] = std::string(1, *r.final_answer);
    if (r.ccp_value) j["ccp"] = *r.ccp_value;
    if (r.effsw_value) j["effsw"] = *r.effsw_value;
    return j;
}

inline GenerationRecord generation_record_from_json(const nlohmann::json& j) {
    GenerationRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.question_id = j.at("question_id").get<std::string>();
    r.shift = j.at("shift").get<int>();
    r.correct_position = j.at("correct_position").get<int>();
    r.correct_index = j.at("correct_index").get<int>();
    r.subject = j.value("subject", "");
    r.output.text = j.at("text").get<std::string>();
    r.output.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
    r.output.error_message = j.value("error_message", "");
    if (j.contains("reasoning_text")) r.output.reasoning_text = j["reasoning_text"].get<std::string>();
    if (j.contains("final_answer")) r.final_answer = j["final_answer"].get<std::string>().at(0);
    r.total_chars = j.at("total_chars").get<std::size_t>();
    if (j.contains("ccp")) r.ccp_value = j["ccp"].get<double>();
    if (j.contains("effsw")) r.effsw_value = j["effsw"].get<double>();
    r.n_mentions = j.at("n_mentions").get<int>();
    return r;
}

inline void write_records_jsonl(const std::string& path,
                                const std::vector<GenerationRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write records file: " + path);
    for (const auto& r : records) out << to_json(r).dump() << "\n";
}

inline std::vector<GenerationRecord> read_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read records file: " + path);
    std::vector<GenerationRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(generation_record_from_json(nlohmann::json::parse(line)));
    }
    return records;
}

inline nlohmann::json to_json(const TruncationTrial& t) {
    nlohmann::json j{
        {"schema_version", kRecordSchemaVersion},
        {"question_id", t.question_id},
        {"shift", t.shift},
        {"offset", t.offset},
        {"abs_pos", t.abs_pos},
        {"replicate", t.replicate},
        {"changed", t.changed},
        {"toward_preferred", t.toward_preferred},
    };
    if (t.new_answer) j["new_answer"] = std::string(1, *t.new_answer);
    return j;
}

inline TruncationTrial trial_from_json(const nlohmann::json& j) {
    TruncationTrial t;
    t.question_id = j.at("question_id").get<std::string>();
    t.shift = j.at("shift").get<int>();
    t.offset = j.at("offset").get<double>();
    t.abs_pos = j.at("abs_pos").get<double>();
    t.replicate = j.at("replicate").get<int>();
    t.changed = j.at("changed").get<bool>();
    t.toward_preferred = j.at("toward_preferred").get<bool>();
    if (j.contains("new_answer")) t.new_answer = j["new_answer"].get<std::string>().at(0);
    return t;
}

inline void write_trials_jsonl(const std::string& path, const std::vector<TruncationTrial>& trials) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write trials file: " + path);
    for (const auto& t : trials) out << to_json(t).dump() << "\n";
}

inline std::vector<TruncationTrial> read_trials_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read trials file: " + path);
    std::vector<TruncationTrial> trials;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        trials.push_back(trial_from_json(nlohmann::json::parse(line)));
    }
    return trials;
}

// Full run configuration; serialized form round-trips losslessly.
struct RunConfig {
    std::string run_id;
    std::string model = "mock-model";
    Mode mode = Mode::reason;
    std::string benchmark = "synthetic";

    std::string backend_kind = "mock";  // "mock" or "http"
    MockParams mock_params;
    HttpBackendConfig http;

    std::string dataset_path;            // empty => synthetic dataset
    std::string dataset_format = "json";
    int synthetic_questions = 0;         // used when dataset_path is empty

    DecodeConfig decode;
    int workers = 1;
    std::uint64_t seed = 0;
    std::string cache_path;
    std::string out_dir = ".";
    int subsample = 0;  // seeded uniform question subsample; 0 = all

    bool fallback_extraction = false;
    bool intervention_all_shifts = false;
    bool strict_tables = false;  // restrict tables to fully-extracted questions
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j{
        {"schema_version", kRecordSchemaVersion},
        {"run_id", c.run_id},
        {"model", c.model},
        {"mode", to_string(c.mode)},
        {"benchmark", c.benchmark},
        {"backend",
         {{"kind", c.backend_kind},
          {"mock_params",
           {{"baseline_pref", c.mock_params.baseline_pref},
            {"accuracy_strength", c.mock_params.accuracy_strength},
            {"drift_strength", c.mock_params.drift_strength},
            {"length_log_mean", c.mock_params.length_log_mean},
            {"length_log_sd", c.mock_params.length_log_sd},
            {"mention_rate", c.mock_params.mention_rate},
            {"preferred_position", c.mock_params.preferred_position}}},
          {"http",
           {{"base_url", c.http.base_url},
            {"model", c.http.model},
            {"api_key_env", c.http.api_key_env},
            {"chat_path", c.http.chat_path},
            {"supports_continuation", c.http.supports_continuation},
            {"max_retries", c.http.max_retries},
            {"rate_limit_rpm", c.http.rate_limit_rpm},
            {"timeout_s", c.http.timeout_s}}}}},
        {"dataset",
         {{"path", c.dataset_path},
          {"format", c.dataset_format},
          {"synthetic_questions", c.synthetic_questions}}},
        {"decode",
         {{"strategy", c.decode.strategy == DecodeStrategy::greedy ? "greedy" : "nucleus"},
          {"top_p", c.decode.top_p},
          {"temperature", c.decode.temperature},
          {"max_tokens", c.decode.max_tokens}}},
        {"workers", c.workers},
        {"seed", c.seed},
        {"cache_path", c.cache_path},
        {"out_dir", c.out_dir},
        {"subsample", c.subsample},
        {"flags",
         {{"fallback_extraction", c.fallback_extraction},
          {"intervention_all_shifts", c.intervention_all_shifts},
          {"strict_tables", c.strict_tables}}},
    };
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.run_id = j.at("run_id").get<std::string>();
    c.model = j.value("model", c.model);
    c.mode = mode_from_string(j.value("mode", "reason"));
    c.benchmark = j.value("benchmark", c.benchmark);
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        c.backend_kind = b.value("kind", "mock");
        if (b.contains("mock_params")) {
            const auto& m = b["mock_params"];
            if (m.contains("baseline_pref"))
                c.mock_params.baseline_pref = m["baseline_pref"].get<std::array<double, 4>>();
            c.mock_params.accuracy_strength =
                m.value("accuracy_strength", c.mock_params.accuracy_strength);
            c.mock_params.drift_strength = m.value("drift_strength", c.mock_params.drift_strength);
            c.mock_params.length_log_mean =
                m.value("length_log_mean", c.mock_params.length_log_mean);
            c.mock_params.length_log_sd = m.value("length_log_sd", c.mock_params.length_log_sd);
            c.mock_params.mention_rate = m.value("mention_rate", c.mock_params.mention_rate);
            c.mock_params.preferred_position =
                m.value("preferred_position", c.mock_params.preferred_position);
        }
        if (b.contains("http")) {
            const auto& h = b["http"];
            c.http.base_url = h.value("base_url", "");
            c.http.model = h.value("model", "");
            c.http.api_key_env = h.value("api_key_env", "");
            c.http.chat_path = h.value("chat_path", c.http.chat_path);
            c.http.supports_continuation = h.value("supports_continuation", false);
            c.http.max_retries = h.value("max_retries", c.http.max_retries);
            c.http.rate_limit_rpm = h.value("rate_limit_rpm", c.http.rate_limit_rpm);
            c.http.timeout_s = h.value("timeout_s", c.http.timeout_s);
        }
    }
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        c.dataset_path = d.value("path", "");
        c.dataset_format = d.value("format", "json");
        c.synthetic_questions = d.value("synthetic_questions", 0);
    }
    if (j.contains("decode")) {
        const auto& d = j["decode"];
        c.decode.strategy =
            d.value("strategy", "greedy") == "nucleus" ? DecodeStrategy::nucleus
                                                       : DecodeStrategy::greedy;
        c.decode.top_p = d.value("top_p", c.decode.top_p);
        c.decode.temperature = d.value("temperature", c.decode.temperature);
        c.decode.max_tokens = d.value("max_tokens", c.decode.max_tokens);
    }
    c.workers = j.value("workers", 1);
    c.seed = j.value("seed", std::uint64_t{0});
    c.cache_path = j.value("cache_path", "");
    c.out_dir = j.value("out_dir", ".");
    c.subsample = j.value("subsample", 0);
    if (j.contains("flags")) {
        const auto& f = j["flags"];
        c.fallback_extraction = f.value("fallback_extraction", false);
        c.intervention_all_shifts = f.value("intervention_all_shifts", false);
        c.strict_tables = f.value("strict_tables", false);
    }
    return c;
}

}  // namespace posaudit
