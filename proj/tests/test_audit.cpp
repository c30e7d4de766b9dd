#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "posaudit/audit.hpp"
#include "posaudit/report_io.hpp"

using namespace posaudit;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

RunConfig mock_config(const std::string& run_id, int questions, Mode mode = Mode::reason) {
    RunConfig config;
    config.run_id = run_id;
    config.mode = mode;
    config.backend_kind = "mock";
    config.synthetic_questions = questions;
    config.seed = 21;
    config.mock_params.drift_strength = 0.3;
    return config;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("null PBS moments match the exact partition enumeration") {
    // 4 iid uniform draws into 4 cells: the 256 outcomes group into the five
    // count partitions below, each with a closed-form per-question score
    double hand_mean = (4.0 * std::sqrt(0.75) + 48.0 * std::sqrt(0.375) + 36.0 * 0.5 +
                        144.0 * std::sqrt(0.125) + 24.0 * 0.0) /
                       256.0;
    auto m = null_pbs_moments();
    CHECK(m.mean == Catch::Approx(hand_mean).margin(1e-12));
    CHECK(m.mean == Catch::Approx(0.39753776).margin(1e-7));
    CHECK(m.sd > 0.0);
    CHECK(m.sd < kPbsMax);
}

TEST_CASE("run_main produces one record per question-permutation") {
    auto config = mock_config("smoke", 50);
    auto result = run_main(config);
    CHECK(result.records.size() == 200);
    CHECK(result.backend_calls == 200);
    CHECK(result.n_error_records == 0);
    int extracted = 0;
    for (const auto& r : result.records) {
        CHECK(r.run_id == "smoke");
        CHECK(r.shift >= 0);
        CHECK(r.shift <= 3);
        CHECK(r.correct_position == (r.correct_index + r.shift) % 4);
        if (r.final_answer) ++extracted;
    }
    CHECK(extracted == 200);
}

TEST_CASE("rerun from a warm cache is byte-identical with zero backend calls") {
    auto dir = temp_dir("posaudit_cache_run");
    auto config = mock_config("cached", 20);
    config.cache_path = (dir / "cache.jsonl").string();
    auto first = run_main(config);
    CHECK(first.backend_calls == 80);
    auto second = run_main(config);
    CHECK(second.backend_calls == 0);
    REQUIRE(first.records.size() == second.records.size());
    for (std::size_t i = 0; i < first.records.size(); ++i) {
        CHECK(first.records[i] == second.records[i]);
        CHECK(to_json(first.records[i]).dump() == to_json(second.records[i]).dump());
    }
}

TEST_CASE("multi-worker run matches the single-worker run") {
    auto base = mock_config("workers", 15);
    auto serial = run_main(base);
    auto parallel_config = base;
    parallel_config.workers = 4;
    auto parallel = run_main(parallel_config);
    REQUIRE(serial.records.size() == parallel.records.size());
    for (std::size_t i = 0; i < serial.records.size(); ++i)
        CHECK(serial.records[i] == parallel.records[i]);
}

TEST_CASE("records JSONL round trip is lossless") {
    auto dir = temp_dir("posaudit_records");
    auto config = mock_config("roundtrip", 10);
    config.out_dir = dir.string();
    auto result = run_main(config);
    persist_run(result);

    auto path = records_path(config);
    REQUIRE(std::filesystem::exists(path));
    auto loaded = read_records_jsonl(path);
    REQUIRE(loaded.size() == result.records.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) CHECK(loaded[i] == result.records[i]);

    // every line carries the schema version
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.at("schema_version") == kRecordSchemaVersion);
    }
    // the run metadata file exists and round-trips the config
    auto meta = nlohmann::json::parse(read_file(dir / "meta-roundtrip.json"));
    CHECK(meta.at("n_records") == result.records.size());
    auto config_back = run_config_from_json(meta.at("config"));
    CHECK(to_json(config_back).dump() == to_json(config).dump());
}

TEST_CASE("trials JSONL round trip is lossless") {
    auto dir = temp_dir("posaudit_trials");
    std::vector<TruncationTrial> trials;
    TruncationTrial with_answer;
    with_answer.question_id = "q00001";
    with_answer.shift = 2;
    with_answer.offset = -0.05;
    with_answer.abs_pos = 0.45;
    with_answer.replicate = 1;
    with_answer.new_answer = 'D';
    with_answer.changed = true;
    with_answer.toward_preferred = true;
    trials.push_back(with_answer);
    TruncationTrial unextracted;
    unextracted.question_id = "q00002";
    unextracted.offset = 0.15;
    unextracted.abs_pos = 0.98;
    trials.push_back(unextracted);

    auto path = (dir / "trials.jsonl").string();
    write_trials_jsonl(path, trials);
    auto loaded = read_trials_jsonl(path);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) CHECK(to_json(loaded[i]).dump() == to_json(trials[i]).dump());
    CHECK_FALSE(loaded[1].new_answer.has_value());
}

TEST_CASE("RunConfig JSON round trip is lossless") {
    RunConfig config;
    config.run_id = "full";
    config.model = "m1";
    config.mode = Mode::cot;
    config.benchmark = "bench-x";
    config.backend_kind = "http";
    config.http.base_url = "http://example.invalid";
    config.http.model = "remote";
    config.http.api_key_env = "KEY_ENV";
    config.http.supports_continuation = true;
    config.mock_params.baseline_pref = {0.1, 0.2, 0.3, 0.4};
    config.mock_params.drift_strength = 0.7;
    config.dataset_path = "data.json";
    config.dataset_format = "json";
    config.decode = DecodeConfig{DecodeStrategy::nucleus, 0.9, 0.8, 4096, 0};
    config.workers = 3;
    config.seed = 123456789;
    config.cache_path = "cache.jsonl";
    config.out_dir = "out";
    config.subsample = 7;
    config.fallback_extraction = true;
    config.strict_tables = true;

    auto j = to_json(config);
    auto back = run_config_from_json(j);
    CHECK(to_json(back).dump() == j.dump());
    CHECK(back.mode == Mode::cot);
    CHECK(back.decode.strategy == DecodeStrategy::nucleus);
    CHECK(back.mock_params.baseline_pref == config.mock_params.baseline_pref);
    CHECK(back.http.supports_continuation);
}

TEST_CASE("analyze_run assembles tables, correlation, and preferred position") {
    auto config = mock_config("analysis", 60);
    config.mock_params.drift_strength = 0.5;
    config.mock_params.preferred_position = 1;
    auto result = run_main(config);
    auto analysis = analyze_run(config, result.records, result.n_error_records);

    CHECK(analysis.run_id == "analysis");
    CHECK(analysis.aggregates.size() == 60);
    CHECK(analysis.summary.n_records == 240);
    CHECK(analysis.summary.extraction_rate == 1.0);
    CHECK(analysis.summary.mean_len_chars >= 1200.0);
    REQUIRE(analysis.summary.mean_ccp.has_value());
    CHECK(*analysis.summary.mean_ccp >= 0.0);
    CHECK(*analysis.summary.mean_ccp <= 1.0);

    CHECK(analysis.quartiles.k == 4);
    REQUIRE(analysis.robustness.size() == 3);
    CHECK(analysis.robustness[0].k == 3);
    CHECK(analysis.robustness[1].k == 5);
    CHECK(analysis.robustness[2].k == 10);
    int total = 0;
    for (int c : analysis.quartiles.bin_counts) total += c;
    CHECK(total == 60);

    REQUIRE(analysis.partial.has_value());
    CHECK(analysis.partial->n == 60);
    CHECK(analysis.preferred.position == 1);
}

TEST_CASE("analyze_run refuses an empty run") {
    auto config = mock_config("empty", 0);
    auto result = run_main(config);
    CHECK(result.records.empty());
    CHECK_THROWS_AS(analyze_run(config, result.records, 0), std::runtime_error);
}

TEST_CASE("analyze pairs runs through the paired Wilcoxon") {
    auto config_a = mock_config("run-a", 40, Mode::reason);
    config_a.mock_params.drift_strength = 0.8;
    auto config_b = mock_config("run-b", 40, Mode::cot);
    config_b.mock_params.drift_strength = 0.0;
    config_b.mock_params.length_log_mean = 7.0;
    auto ra = run_main(config_a);
    auto rb = run_main(config_b);

    PairSpec pair{"fam", "synthetic", "reason > cot", "run-a", "run-b", Alternative::greater};
    PairSpec missing{"fam", "synthetic", "reason > ???", "run-a", "no-such-run",
                     Alternative::greater};
    auto report = analyze({{config_a, ra.records}, {config_b, rb.records}}, {pair, missing});

    REQUIRE(report.runs.size() == 2);
    REQUIRE(report.scatter.size() == 2);
    REQUIRE(report.wilcoxon.size() == 2);
    const auto& row = report.wilcoxon[0];
    CHECK(row.comparison == "reason > cot");
    CHECK(row.n == 40);  // both runs share all synthetic question ids
    CHECK(row.n_dropped == 0);
    CHECK(row.skipped_reason.empty());
    CHECK(row.p_one_sided > 0.0);
    CHECK(row.p_one_sided <= 1.0);
    CHECK(report.wilcoxon[1].skipped_reason == "missing pair member");
    CHECK(report.metadata.at("run_ids").size() == 2);
}

TEST_CASE("config files accept a single run or a runs/pairs bundle") {
    auto dir = temp_dir("posaudit_config");

    auto single_path = (dir / "single.json").string();
    {
        std::ofstream out(single_path);
        out << to_json(mock_config("solo", 5)).dump();
    }
    auto single = load_config_file(single_path);
    REQUIRE(single.runs.size() == 1);
    CHECK(single.runs[0].run_id == "solo");
    CHECK(single.pairs.empty());

    auto bundle_path = (dir / "bundle.json").string();
    {
        nlohmann::json bundle{
            {"runs", nlohmann::json::array({to_json(mock_config("r1", 5)),
                                            to_json(mock_config("r2", 5, Mode::cot))})},
            {"pairs", nlohmann::json::array({{{"family", "f"},
                                              {"bench", "b"},
                                              {"comparison", "r1 > r2"},
                                              {"run_a", "r1"},
                                              {"run_b", "r2"},
                                              {"alternative", "less"}}})}};
        std::ofstream out(bundle_path);
        out << bundle.dump();
    }
    auto bundle = load_config_file(bundle_path);
    REQUIRE(bundle.runs.size() == 2);
    CHECK(bundle.runs[1].mode == Mode::cot);
    REQUIRE(bundle.pairs.size() == 1);
    CHECK(bundle.pairs[0].run_b == "r2");
    CHECK(bundle.pairs[0].alternative == Alternative::less);

    CHECK_THROWS_AS(load_config_file((dir / "missing.json").string()), std::runtime_error);
}

TEST_CASE("run_intervention_for_run drives continuations off main-run records") {
    auto config = mock_config("interv", 12);
    config.mock_params.drift_strength = 0.5;
    auto result = run_main(config);
    auto out = run_intervention_for_run(config, result.records, 10);
    // 10 questions x 4 offsets x 3 replicates, shift 0 only
    CHECK(out.trials.size() == 120);
    for (const auto& t : out.trials) CHECK(t.shift == 0);
    CHECK(out.analysis.buckets.size() == 4);
    CHECK(out.preferred_position >= 0);
    CHECK(out.preferred_position <= 3);

    // deterministic replay
    auto again = run_intervention_for_run(config, result.records, 10);
    REQUIRE(again.trials.size() == out.trials.size());
    for (std::size_t i = 0; i < out.trials.size(); ++i)
        CHECK(to_json(again.trials[i]).dump() == to_json(out.trials[i]).dump());
}

TEST_CASE("subsample selects a seeded subset by id") {
    auto config = mock_config("sub", 30);
    config.subsample = 8;
    auto result = run_main(config);
    CHECK(result.records.size() == 32);
    auto again = run_main(config);
    REQUIRE(again.records.size() == 32);
    for (std::size_t i = 0; i < 32; ++i) CHECK(again.records[i] == result.records[i]);
    // ids come back in sorted order
    for (std::size_t i = 4; i < 32; i += 4)
        CHECK(result.records[i - 4].question_id < result.records[i].question_id);
}

TEST_CASE("write_report regeneration is byte-identical") {
    auto config_a = mock_config("rep-a", 25);
    auto config_b = mock_config("rep-b", 25, Mode::cot);
    auto ra = run_main(config_a);
    auto rb = run_main(config_b);
    PairSpec pair{"fam", "synthetic", "rep-a > rep-b", "rep-a", "rep-b", Alternative::greater};
    auto report = analyze({{config_a, ra.records}, {config_b, rb.records}}, {pair});
    auto iv = run_intervention_for_run(config_a, ra.records, 5);
    report.intervention = iv.analysis;

    auto dir1 = temp_dir("posaudit_report1");
    auto dir2 = temp_dir("posaudit_report2");
    write_report(report, dir1.string());
    write_report(report, dir2.string());
    std::vector<std::string> files = {"summary.csv",      "quartiles.csv", "robustness.csv",
                                      "partial_corr.csv", "wilcoxon.csv",  "scatter.csv",
                                      "intervention.csv", "report.json"};
    for (const auto& f : files) {
        INFO(f);
        auto one = read_file(dir1 / f);
        CHECK(one == read_file(dir2 / f));
        CHECK_FALSE(one.empty());
    }

    // headers carry the documented column sets
    auto summary = read_file(dir1 / "summary.csv");
    CHECK(summary.rfind(std::string(kSummaryCsvHeader) + "\n", 0) == 0);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);  // header + 2 runs
    auto wilcoxon = read_file(dir1 / "wilcoxon.csv");
    CHECK(wilcoxon.rfind(std::string(kWilcoxonCsvHeader) + "\n", 0) == 0);
}

TEST_CASE("simulate_null_calibration reports against the enumerated null") {
    auto summary = simulate_null_calibration(4, 60, 5);
    CHECK(summary.replicates == 4);
    CHECK(summary.n_pooled == 4 * 60);
    CHECK(summary.expected_null_mean == Catch::Approx(null_pbs_moments().mean).margin(1e-12));
    CHECK(summary.type1_rate >= 0.0);
    CHECK(summary.type1_rate <= 1.0);
    // 240 pooled questions: the pooled mean should sit within 5 SE of the null
    CHECK(std::abs(summary.pooled_mean_pbs - summary.expected_null_mean) <
          5.0 * summary.pooled_se);
}

TEST_CASE("make_backend rejects unknown kinds") {
    RunConfig config;
    config.backend_kind = "carrier-pigeon";
    CHECK_THROWS_AS(make_backend(config), std::invalid_argument);
}
