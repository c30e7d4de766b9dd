// Command-line driver for the position-bias audit pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "posaudit/audit.hpp"
#include "posaudit/report_io.hpp"

namespace {

using namespace posaudit;

void apply_overrides(RunConfig& config, const std::optional<std::string>& out,
                     const std::optional<std::uint64_t>& seed, const std::optional<int>& workers) {
    if (out) config.out_dir = *out;
    if (seed) config.seed = *seed;
    if (workers) config.workers = *workers;
}

int cmd_run(const std::string& config_path, const std::optional<std::string>& run_id,
            const std::optional<std::string>& out, const std::optional<std::uint64_t>& seed,
            const std::optional<int>& workers, bool resume) {
    ConfigFile file = load_config_file(config_path);
    int executed = 0;
    for (RunConfig config : file.runs) {
        if (run_id && config.run_id != *run_id) continue;
        apply_overrides(config, out, seed, workers);
        if (!resume && !config.cache_path.empty() &&
            std::filesystem::exists(config.cache_path))
            std::filesystem::remove(config.cache_path);
        RunResult result = run_main(config);
        persist_run(result);
        std::printf("run %s: %zu records, %d backend calls, %d errors, %d filtered items\n",
                    config.run_id.c_str(), result.records.size(), result.backend_calls,
                    result.n_error_records, result.filtered_items);
        ++executed;
    }
    if (executed == 0) {
        std::fprintf(stderr, "error: no matching run in config\n");
        return 1;
    }
    return 0;
}

int cmd_intervene(const std::string& config_path, const std::optional<std::string>& run_id,
                  int max_questions, const std::optional<std::string>& out,
                  const std::optional<std::uint64_t>& seed) {
    ConfigFile file = load_config_file(config_path);
    for (RunConfig config : file.runs) {
        if (run_id && config.run_id != *run_id) continue;
        apply_overrides(config, out, seed, std::nullopt);
        std::string path = records_path(config);
        if (!std::filesystem::exists(path)) {
            std::fprintf(stderr, "error: no records for run %s (expected %s)\n",
                         config.run_id.c_str(), path.c_str());
            return 1;
        }
        auto records = read_records_jsonl(path);
        auto result = run_intervention_for_run(config, records, max_questions);
        write_trials_jsonl(trials_path(config), result.trials);
        report_detail::write_file(
            std::filesystem::path(config.out_dir) / ("intervention-" + config.run_id + ".csv"),
            intervention_csv(result.analysis));
        std::printf("intervene %s: %zu trials, preferred position %c, chi2 p=%g\n",
                    config.run_id.c_str(), result.trials.size(),
                    static_cast<char>('A' + result.preferred_position),
                    result.analysis.before_after_ccp.p_value);
    }
    return 0;
}

int cmd_analyze(const std::string& config_path, const std::optional<std::string>& out,
                const std::optional<std::uint64_t>& seed) {
    ConfigFile file = load_config_file(config_path);
    std::vector<std::pair<RunConfig, std::vector<GenerationRecord>>> runs;
    std::string report_dir;
    for (RunConfig config : file.runs) {
        // records are read from the run's own out_dir; --out only redirects
        // where the report lands
        apply_overrides(config, std::nullopt, seed, std::nullopt);
        report_dir = out.value_or(config.out_dir);
        std::string path = records_path(config);
        if (!std::filesystem::exists(path)) {
            std::fprintf(stderr, "error: no records for run %s (run `posaudit run` first)\n",
                         config.run_id.c_str());
            return 1;
        }
        runs.emplace_back(config, read_records_jsonl(path));
    }
    if (runs.empty()) {
        std::fprintf(stderr, "error: no records\n");
        return 1;
    }
    AuditReport report = analyze(runs, file.pairs);
    // attach intervention trials when present
    for (const auto& [config, records] : runs) {
        std::string tpath = trials_path(config);
        if (std::filesystem::exists(tpath)) {
            report.intervention = bucket_analysis(read_trials_jsonl(tpath));
            break;
        }
    }
    write_report(report, report_dir);
    std::printf("report written to %s\n", report_dir.c_str());
    return 0;
}

int cmd_report(const std::string& report_path) {
    std::ifstream in(report_path);
    if (!in) {
        std::fprintf(stderr, "error: cannot open %s\n", report_path.c_str());
        return 1;
    }
    nlohmann::json j;
    in >> j;
    std::printf("%s\n", kSummaryCsvHeader);
    for (const auto& r : j.at("runs")) {
        const auto& s = r.at("summary");
        std::printf("%s,%s,%s,%d,%.4f,%.4f,%s,%s,%.1f,%.4f\n",
                    s.at("model").get<std::string>().c_str(),
                    s.at("mode").get<std::string>().c_str(),
                    s.at("benchmark").get<std::string>().c_str(), s.at("n_records").get<int>(),
                    s.at("acc").get<double>(), s.at("pbs").get<double>(),
                    s.contains("ccp") ? std::to_string(s["ccp"].get<double>()).c_str() : "",
                    s.contains("effsw") ? std::to_string(s["effsw"].get<double>()).c_str() : "",
                    s.at("len_chars").get<double>(), s.at("extraction_rate").get<double>());
    }
    if (j.contains("wilcoxon") && !j["wilcoxon"].empty()) {
        std::printf("\n%s\n", kWilcoxonCsvHeader);
        for (const auto& w : j["wilcoxon"])
            std::printf("%s,%s,%s,%zu,%g,%g\n", w.value("family", "").c_str(),
                        w.value("bench", "").c_str(), w.value("comparison", "").c_str(),
                        w.value("n", std::size_t{0}), w.value("mean_diff", 0.0),
                        w.value("p", 1.0));
    }
    return 0;
}

int cmd_simulate(int replicates, int questions, std::uint64_t seed, double drift) {
    if (drift > 0.0) {
        MockParams params;
        params.drift_strength = drift;
        params.accuracy_strength = 1.0;
        int monotone = 0, significant = 0;
        for (int rep = 0; rep < replicates; ++rep) {
            std::uint64_t rep_seed = hash_combine(seed, static_cast<std::uint64_t>(rep));
            auto items = make_synthetic_dataset(questions, rep_seed);
            auto agg = run_mock_in_memory(items, params, Mode::reason, rep_seed);
            auto points = length_pbs_points(agg.aggregates);
            auto table = bin_by_length(points, 4);
            if (table.strictly_monotone) ++monotone;
            std::vector<double> x, y, z;
            for (const auto& a : agg.aggregates) {
                x.push_back(a.mean_len_chars);
                y.push_back(a.pbs_value);
                z.push_back(a.accuracy);
            }
            auto pc = partial_corr(x, y, z);
            if (pc.rho > 0 && pc.p_two_sided < 0.05) ++significant;
        }
        nlohmann::json out{{"replicates", replicates},
                           {"questions", questions},
                           {"drift_strength", drift},
                           {"quartile_monotone_rate", static_cast<double>(monotone) / replicates},
                           {"significant_rate", static_cast<double>(significant) / replicates}};
        std::printf("%s\n", out.dump(2).c_str());
        return 0;
    }
    auto summary = simulate_null_calibration(replicates, questions, seed);
    nlohmann::json out{{"replicates", summary.replicates},
                       {"questions", summary.questions},
                       {"type1_rate", summary.type1_rate},
                       {"pooled_mean_pbs", summary.pooled_mean_pbs},
                       {"expected_null_mean", summary.expected_null_mean},
                       {"pooled_se", summary.pooled_se}};
    std::printf("%s\n", out.dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"position-bias audit harness for multiple-choice QA"};
    app.require_subcommand(1);

    std::string config_path, report_path;
    std::optional<std::string> run_id, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool resume = true;
    int max_questions = 200;
    int replicates = 200, questions = 500;
    std::uint64_t sim_seed = 0;
    double drift = 0.0;

    auto* run = app.add_subcommand("run", "generate records for every question x permutation");
    run->add_option("--config", config_path, "run config JSON")->required();
    run->add_option("--run-id", run_id, "only this run id from the config file");
    run->add_option("--out", out_dir, "output directory override");
    run->add_option("--seed", seed, "seed override");
    run->add_option("--workers", workers, "worker count override");
    run->add_flag("--resume,!--no-resume", resume, "reuse the generation cache (default on)");

    auto* intervene = app.add_subcommand("intervene", "truncation intervention on a completed run");
    intervene->add_option("--config", config_path, "run config JSON")->required();
    intervene->add_option("--run-id", run_id, "only this run id");
    intervene->add_option("--max-questions", max_questions, "questions with defined CCP to probe");
    intervene->add_option("--out", out_dir, "output directory override");
    intervene->add_option("--seed", seed, "seed override");

    auto* analyze_cmd = app.add_subcommand("analyze", "compute all tables from stored records");
    analyze_cmd->add_option("--config", config_path, "run config JSON")->required();
    analyze_cmd->add_option("--out", out_dir, "output directory override");
    analyze_cmd->add_option("--seed", seed, "seed override");

    auto* report = app.add_subcommand("report", "print tables from an existing report.json");
    report->add_option("--report", report_path, "path to report.json")->required();

    auto* simulate = app.add_subcommand("simulate", "mock calibration suite");
    simulate->add_option("--replicates", replicates, "number of seeded replicates");
    simulate->add_option("--questions", questions, "questions per replicate");
    simulate->add_option("--seed", sim_seed, "base seed");
    simulate->add_option("--drift", drift, "drift strength; 0 runs the null calibration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, run_id, out_dir, seed, workers, resume);
        if (intervene->parsed())
            return cmd_intervene(config_path, run_id, max_questions, out_dir, seed);
        if (analyze_cmd->parsed()) return cmd_analyze(config_path, out_dir, seed);
        if (report->parsed()) return cmd_report(report_path);
        if (simulate->parsed()) return cmd_simulate(replicates, questions, sim_seed, drift);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
