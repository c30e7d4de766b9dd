#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "posaudit/cache.hpp"
#include "posaudit/http_backend.hpp"
#include "posaudit/intervene.hpp"
#include "posaudit/metrics.hpp"
#include "posaudit/mocksim.hpp"
#include "posaudit/records.hpp"
#include "posaudit/stats.hpp"

namespace posaudit {

inline std::unique_ptr<Backend> make_backend(const RunConfig& config) {
    if (config.backend_kind == "mock") return std::make_unique<MockBackend>(config.mock_params);
    if (config.backend_kind == "http") return std::make_unique<HttpBackend>(config.http);
    throw std::invalid_argument("unknown backend kind: " + config.backend_kind);
}

inline std::vector<McqItem> load_run_items(const RunConfig& config, int* filtered_out = nullptr) {
    std::vector<McqItem> items;
    int filtered = 0;
    if (!config.dataset_path.empty()) {
        auto loaded = load_dataset(config.dataset_path, config.dataset_format);
        items = std::move(loaded.items);
        filtered = loaded.filtered_count;
    } else {
        items = make_synthetic_dataset(config.synthetic_questions, config.seed);
    }
    if (config.subsample > 0 && config.subsample < static_cast<int>(items.size())) {
        std::mt19937_64 rng(hash_combine(config.seed, hash_str("subsample")));
        std::shuffle(items.begin(), items.end(), rng);
        items.resize(config.subsample);
        std::sort(items.begin(), items.end(),
                  [](const McqItem& a, const McqItem& b) { return a.id < b.id; });
    }
    if (filtered_out) *filtered_out = filtered;
    return items;
}

struct RunResult {
    RunConfig config;
    std::vector<GenerationRecord> records;  // (question, shift) in item order
    int filtered_items = 0;
    int n_error_records = 0;
    int backend_calls = 0;
};

inline GenerationRecord build_record(const RunConfig& config, const McqItem& item,
                                     const PermutedVariant& variant, const BackendOutput& output,
                                     const ParseOptions& parse_opts) {
    GenerationRecord rec;
    rec.run_id = config.run_id;
    rec.question_id = item.id;
    rec.shift = variant.shift;
    rec.correct_position = variant.correct_position;
    rec.correct_index = item.correct_index;
    rec.subject = item.subject;
    rec.output = output;
    if (output.ok()) {
        ParsedGeneration parsed = parse_generation(output, parse_opts);
        rec.final_answer = parsed.final_answer;
        rec.total_chars = parsed.total_chars;
        rec.n_mentions = static_cast<int>(parsed.mentions.size());
        if (parsed.final_answer) rec.ccp_value = ccp(parsed.mentions, *parsed.final_answer);
        if (parsed.total_chars > 0)
            rec.effsw_value = eff_switching(parsed.mentions, parsed.total_chars);
    }
    return rec;
}

// Main run: every question x 4 permutations, cache-aware, idempotent.
inline RunResult run_main(const RunConfig& config) {
    RunResult result;
    result.config = config;
    auto items = load_run_items(config, &result.filtered_items);
    auto backend = make_backend(config);
    std::unique_ptr<GenerationCache> cache;
    if (!config.cache_path.empty()) cache = std::make_unique<GenerationCache>(config.cache_path);
    ParseOptions parse_opts;
    parse_opts.letter_frequency_fallback = config.fallback_extraction;

    std::string dataset_id =
        config.dataset_path.empty() ? "synthetic-" + std::to_string(config.synthetic_questions)
                                    : config.dataset_path;

    result.records.resize(items.size() * 4);
    std::atomic<std::size_t> next{0};
    std::atomic<int> backend_calls{0};
    std::atomic<int> errors{0};

    auto worker = [&]() {
        for (;;) {
            std::size_t task = next.fetch_add(1);
            if (task >= items.size() * 4) break;
            const McqItem& item = items[task / 4];
            int s = static_cast<int>(task % 4);
            PermutedVariant variant = permute(item)[s];
            PromptBundle prompt = render_prompt(item, variant, config.mode);
            CacheKey key{backend->id(), config.model,   to_string(config.mode), dataset_id,
                         item.id,       variant.shift,  config.decode.fingerprint(), ""};
            std::optional<BackendOutput> output;
            if (cache) output = cache->get(key);
            if (!output) {
                DecodeConfig decode = config.decode;
                decode.seed = hash_combine(config.seed, key.hash());
                output = backend->generate(prompt, decode);
                backend_calls.fetch_add(1);
                if (cache) cache->put(key, *output);
            }
            if (!output->ok()) errors.fetch_add(1);
            result.records[task] = build_record(config, item, variant, *output, parse_opts);
        }
    };
    int n_workers = std::max(1, config.workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    result.backend_calls = backend_calls.load();
    result.n_error_records = errors.load();
    return result;
}

inline std::string records_path(const RunConfig& config) {
    return (std::filesystem::path(config.out_dir) / ("records-" + config.run_id + ".jsonl"))
        .string();
}
inline std::string trials_path(const RunConfig& config) {
    return (std::filesystem::path(config.out_dir) / ("trials-" + config.run_id + ".jsonl"))
        .string();
}

inline void persist_run(const RunResult& result) {
    std::filesystem::create_directories(result.config.out_dir);
    write_records_jsonl(records_path(result.config), result.records);
    nlohmann::json meta{
        {"schema_version", kRecordSchemaVersion},
        {"run_id", result.config.run_id},
        {"config", to_json(result.config)},
        {"filtered_items", result.filtered_items},
        {"n_error_records", result.n_error_records},
        {"backend_calls", result.backend_calls},
        {"n_records", result.records.size()},
    };
    std::ofstream out((std::filesystem::path(result.config.out_dir) /
                       ("meta-" + result.config.run_id + ".json"))
                          .string(),
                      std::ios::trunc);
    out << meta.dump(2) << "\n";
}

struct AggregationResult {
    std::vector<QuestionAggregate> aggregates;  // sorted by question id
    int n_nonerror_records = 0;
    int n_zero_extraction_questions = 0;
    int n_partial_extraction_questions = 0;
};

inline AggregationResult aggregate_records(const std::vector<GenerationRecord>& records,
                                           bool strict_tables = false) {
    std::map<std::string, std::vector<const GenerationRecord*>> by_question;
    AggregationResult out;
    for (const auto& r : records) {
        by_question[r.question_id].push_back(&r);
        if (r.output.ok()) ++out.n_nonerror_records;
    }
    for (const auto& [qid, recs] : by_question) {
        std::vector<PermutationRecord> perms;
        std::string subject;
        int correct_index = 0;
        for (const auto* r : recs) {
            subject = r->subject;
            correct_index = r->correct_index;
            PermutationRecord p;
            p.shift = r->shift;
            p.error = !r->output.ok();
            if (!p.error) p.parsed = parse_generation(r->output);
            perms.push_back(std::move(p));
        }
        auto agg = aggregate_question(qid, correct_index, perms, subject);
        if (!agg) {
            ++out.n_zero_extraction_questions;
            continue;
        }
        if (agg->n_extracted < static_cast<int>(recs.size())) {
            ++out.n_partial_extraction_questions;
            if (strict_tables) continue;
        }
        out.aggregates.push_back(std::move(*agg));
    }
    return out;
}

struct RunAnalysis {
    std::string run_id;
    ConfigSummary summary;
    std::vector<QuestionAggregate> aggregates;
    BinTable quartiles;                // k = 4
    std::vector<BinTable> robustness;  // k in {3, 5, 10}
    std::optional<PartialCorrResult> partial;
    std::string partial_error;
    PreferredPosition preferred;
    int n_zero_extraction_questions = 0;
    int n_partial_extraction_questions = 0;
    int n_error_records = 0;
};

inline std::vector<LengthPbsPoint> length_pbs_points(
    const std::vector<QuestionAggregate>& aggregates) {
    std::vector<LengthPbsPoint> pts;
    pts.reserve(aggregates.size());
    for (const auto& a : aggregates)
        pts.push_back({a.question_id, a.mean_len_chars, a.pbs_value});
    return pts;
}

inline RunAnalysis analyze_run(const RunConfig& config,
                               const std::vector<GenerationRecord>& records,
                               int n_error_records) {
    RunAnalysis analysis;
    analysis.run_id = config.run_id;
    analysis.n_error_records = n_error_records;
    auto agg = aggregate_records(records, config.strict_tables);
    analysis.aggregates = std::move(agg.aggregates);
    analysis.n_zero_extraction_questions = agg.n_zero_extraction_questions;
    analysis.n_partial_extraction_questions = agg.n_partial_extraction_questions;
    if (analysis.aggregates.empty()) throw std::runtime_error("no records for run " + config.run_id);
    analysis.summary = summarize_config(analysis.aggregates, config.model, to_string(config.mode),
                                        config.benchmark, agg.n_nonerror_records);
    auto points = length_pbs_points(analysis.aggregates);
    if (points.size() >= 4) analysis.quartiles = bin_by_length(points, 4);
    for (int k : {3, 5, 10})
        if (points.size() >= static_cast<std::size_t>(k))
            analysis.robustness.push_back(bin_by_length(points, k));
    std::vector<double> x, y, z;
    for (const auto& a : analysis.aggregates) {
        x.push_back(a.mean_len_chars);
        y.push_back(a.pbs_value);
        z.push_back(a.accuracy);
    }
    try {
        analysis.partial = partial_corr(x, y, z);
    } catch (const std::exception& e) {
        analysis.partial_error = e.what();
    }
    analysis.preferred = preferred_position(analysis.aggregates);
    return analysis;
}

struct PairSpec {
    std::string family;
    std::string bench;
    std::string comparison;  // e.g. "reason > cot"
    std::string run_a;
    std::string run_b;
    Alternative alternative = Alternative::greater;
};

struct WilcoxonRow {
    std::string family;
    std::string bench;
    std::string comparison;
    std::size_t n = 0;
    double mean_diff = 0.0;
    double p_one_sided = 1.0;
    bool degenerate = false;
    int n_dropped = 0;  // question ids missing on one side
    std::string skipped_reason;
};

inline WilcoxonRow paired_wilcoxon_row(const PairSpec& spec,
                                       const std::vector<QuestionAggregate>& a,
                                       const std::vector<QuestionAggregate>& b) {
    WilcoxonRow row;
    row.family = spec.family;
    row.bench = spec.bench;
    row.comparison = spec.comparison;
    std::map<std::string, double> pbs_b;
    for (const auto& q : b) pbs_b[q.question_id] = q.pbs_value;
    std::vector<double> va, vb;
    for (const auto& q : a) {
        auto it = pbs_b.find(q.question_id);
        if (it == pbs_b.end()) {
            ++row.n_dropped;
            continue;
        }
        va.push_back(q.pbs_value);
        vb.push_back(it->second);
    }
    row.n_dropped += static_cast<int>(b.size() - va.size());
    if (va.empty()) {
        row.skipped_reason = "no shared question ids";
        return row;
    }
    auto res = wilcoxon_paired_one_sided(va, vb, spec.alternative);
    row.n = va.size();
    row.mean_diff = res.mean_diff;
    row.p_one_sided = res.p_one_sided;
    row.degenerate = res.degenerate;
    return row;
}

struct ScatterPoint {
    std::string model, mode, benchmark;
    double mean_len_chars = 0.0;
    double mean_pbs = 0.0;
};

struct AuditReport {
    std::vector<RunAnalysis> runs;
    std::vector<WilcoxonRow> wilcoxon;
    std::vector<ScatterPoint> scatter;
    std::optional<InterventionAnalysis> intervention;
    nlohmann::json metadata;
};

inline AuditReport analyze(const std::vector<std::pair<RunConfig, std::vector<GenerationRecord>>>&
                               runs_with_records,
                           const std::vector<PairSpec>& pairs = {}) {
    AuditReport report;
    std::map<std::string, const RunAnalysis*> by_id;
    for (const auto& [config, records] : runs_with_records) {
        report.runs.push_back(analyze_run(config, records, 0));
        const RunAnalysis& a = report.runs.back();
        report.scatter.push_back({a.summary.model, a.summary.mode, a.summary.benchmark,
                                  a.summary.mean_len_chars, a.summary.mean_pbs});
    }
    for (const auto& a : report.runs) by_id[a.run_id] = &a;
    for (const auto& spec : pairs) {
        auto ia = by_id.find(spec.run_a);
        auto ib = by_id.find(spec.run_b);
        if (ia == by_id.end() || ib == by_id.end()) {
            WilcoxonRow row;
            row.family = spec.family;
            row.bench = spec.bench;
            row.comparison = spec.comparison;
            row.skipped_reason = "missing pair member";
            report.wilcoxon.push_back(row);
            continue;
        }
        report.wilcoxon.push_back(
            paired_wilcoxon_row(spec, ia->second->aggregates, ib->second->aggregates));
    }
    nlohmann::json run_ids = nlohmann::json::array();
    for (const auto& a : report.runs) run_ids.push_back(a.run_id);
    report.metadata = {{"schema_version", kRecordSchemaVersion}, {"run_ids", run_ids}};
    return report;
}

// A config file holds either a single run object or {"runs": [...], "pairs": [...]}.
struct ConfigFile {
    std::vector<RunConfig> runs;
    std::vector<PairSpec> pairs;
};

inline ConfigFile load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    ConfigFile file;
    if (j.contains("runs")) {
        for (const auto& r : j["runs"]) file.runs.push_back(run_config_from_json(r));
        if (j.contains("pairs")) {
            for (const auto& p : j["pairs"]) {
                PairSpec spec;
                spec.family = p.value("family", "");
                spec.bench = p.value("bench", "");
                spec.comparison = p.value("comparison", "");
                spec.run_a = p.at("run_a").get<std::string>();
                spec.run_b = p.at("run_b").get<std::string>();
                spec.alternative = p.value("alternative", "greater") == "less"
                                       ? Alternative::less
                                       : Alternative::greater;
                file.pairs.push_back(std::move(spec));
            }
        }
    } else {
        file.runs.push_back(run_config_from_json(j));
    }
    return file;
}

// ---------------------------------------------------------------------------
// Intervention driver

struct InterventionRunResult {
    std::vector<TruncationTrial> trials;
    InterventionAnalysis analysis;
    int preferred_position = 0;
    int n_skipped_no_ccp = 0;
};

// First max_questions questions with a defined CCP, in id order; shift 0 only
// unless the config enables all four permutations.
inline InterventionRunResult run_intervention_for_run(const RunConfig& config,
                                                      const std::vector<GenerationRecord>& records,
                                                      int max_questions = 200) {
    auto backend = make_backend(config);
    if (!backend->supports_continuation())
        throw CapabilityError("backend does not support continuation; intervention skipped");
    auto agg = aggregate_records(records);
    if (agg.aggregates.empty()) throw std::runtime_error("no records to intervene on");
    auto preferred = preferred_position(agg.aggregates);

    int filtered = 0;
    auto items = load_run_items(config, &filtered);
    std::map<std::string, const McqItem*> items_by_id;
    for (const auto& item : items) items_by_id[item.id] = &item;

    std::map<std::string, std::vector<const GenerationRecord*>> by_question;
    for (const auto& r : records) {
        if (!config.intervention_all_shifts && r.shift != 0) continue;
        by_question[r.question_id].push_back(&r);
    }
    InterventionRunResult out;
    std::vector<InterventionInput> inputs;
    int n_questions = 0;
    for (const auto& [qid, recs] : by_question) {
        if (n_questions >= max_questions) break;
        bool usable = false;
        for (const auto* r : recs) {
            if (!r->output.ok() || !r->final_answer || !r->ccp_value || r->total_chars == 0)
                continue;
            auto item_it = items_by_id.find(qid);
            if (item_it == items_by_id.end()) continue;
            InterventionInput input;
            input.question_id = qid;
            input.shift = r->shift;
            PermutedVariant variant = permute(*item_it->second)[r->shift];
            input.prompt = render_prompt(*item_it->second, variant, config.mode);
            input.raw_text = r->output.full_trajectory();
            input.ccp_value = *r->ccp_value;
            input.original_answer = *r->final_answer;
            inputs.push_back(std::move(input));
            usable = true;
        }
        if (usable)
            ++n_questions;
        else
            ++out.n_skipped_no_ccp;
    }
    InterventionOptions opts;
    opts.preferred_position = preferred.position;
    opts.base_seed = config.seed;
    opts.parse_options.letter_frequency_fallback = config.fallback_extraction;
    out.trials = run_intervention(*backend, inputs, opts);
    out.analysis = bucket_analysis(out.trials);
    out.preferred_position = preferred.position;
    return out;
}

// ---------------------------------------------------------------------------
// In-memory mock pipeline + calibration oracles

// Exact null moments of per-question PBS under 4 iid uniform position draws,
// by enumeration of the 4^4 outcomes.
struct NullPbsMoments {
    double mean = 0.0;
    double sd = 0.0;
};

inline NullPbsMoments null_pbs_moments() {
    double sum = 0.0, sum2 = 0.0;
    for (int outcome = 0; outcome < 256; ++outcome) {
        std::array<double, 4> hist{0, 0, 0, 0};
        int o = outcome;
        for (int i = 0; i < 4; ++i) {
            hist[o % 4] += 0.25;
            o /= 4;
        }
        double v = pbs(hist);
        sum += v;
        sum2 += v * v;
    }
    NullPbsMoments m;
    m.mean = sum / 256.0;
    m.sd = std::sqrt(sum2 / 256.0 - m.mean * m.mean);
    return m;
}

// Full mock pipeline without file IO: items -> prompts -> mock text -> parse
// -> per-question aggregates.
inline AggregationResult run_mock_in_memory(const std::vector<McqItem>& items,
                                            const MockParams& params, Mode mode,
                                            std::uint64_t seed,
                                            const ParseOptions& parse_opts = ParseOptions{}) {
    AggregationResult out;
    for (const auto& item : items) {
        std::vector<PermutationRecord> perms;
        auto variants = permute(item);
        for (int s = 0; s < 4; ++s) {
            PromptBundle prompt = render_prompt(item, variants[s], mode);
            std::uint64_t call_seed = hash_combine(
                seed, hash_combine(hash_str(item.id), static_cast<std::uint64_t>(s)));
            BackendOutput output = mock_generate(prompt, params, call_seed);
            PermutationRecord p;
            p.shift = s;
            p.error = !output.ok();
            if (!p.error) p.parsed = parse_generation(output, parse_opts);
            perms.push_back(std::move(p));
            if (output.ok()) ++out.n_nonerror_records;
        }
        auto agg = aggregate_question(item.id, item.correct_index, perms, item.subject);
        if (!agg) {
            ++out.n_zero_extraction_questions;
            continue;
        }
        if (agg->n_extracted < 4) ++out.n_partial_extraction_questions;
        out.aggregates.push_back(std::move(*agg));
    }
    return out;
}

struct CalibrationSummary {
    int replicates = 0;
    int questions = 0;
    double type1_rate = 0.0;      // fraction of replicates with partial-corr p < 0.05
    double pooled_mean_pbs = 0.0;
    double expected_null_mean = 0.0;
    double null_sd = 0.0;
    double pooled_se = 0.0;
    std::size_t n_pooled = 0;
};

// Type-I calibration of the partial-correlation test on null (lambda = 0,
// uniform baseline) mock data, plus the pooled mean-PBS check against the
// enumerated null.
inline CalibrationSummary simulate_null_calibration(int replicates, int questions,
                                                    std::uint64_t seed,
                                                    MockParams params = MockParams{}) {
    params.drift_strength = 0.0;
    params.accuracy_strength = 0.0;
    params.baseline_pref = {0.25, 0.25, 0.25, 0.25};
    CalibrationSummary summary;
    summary.replicates = replicates;
    summary.questions = questions;
    auto null_moments = null_pbs_moments();
    summary.expected_null_mean = null_moments.mean;
    summary.null_sd = null_moments.sd;
    int significant = 0;
    double pbs_sum = 0.0;
    std::size_t n_pbs = 0;
    for (int rep = 0; rep < replicates; ++rep) {
        std::uint64_t rep_seed = hash_combine(seed, static_cast<std::uint64_t>(rep));
        auto items = make_synthetic_dataset(questions, rep_seed);
        auto agg = run_mock_in_memory(items, params, Mode::reason, rep_seed);
        std::vector<double> x, y, z;
        for (const auto& a : agg.aggregates) {
            x.push_back(a.mean_len_chars);
            y.push_back(a.pbs_value);
            z.push_back(a.accuracy);
            pbs_sum += a.pbs_value;
            ++n_pbs;
        }
        auto pc = partial_corr(x, y, z);
        if (pc.p_two_sided < 0.05) ++significant;
    }
    summary.type1_rate = static_cast<double>(significant) / replicates;
    summary.pooled_mean_pbs = pbs_sum / static_cast<double>(n_pbs);
    summary.n_pooled = n_pbs;
    summary.pooled_se = summary.null_sd / std::sqrt(static_cast<double>(n_pbs));
    return summary;
}

}  // namespace posaudit
