#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "posaudit/audit.hpp"

namespace posaudit {

namespace report_detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

}  // namespace report_detail

inline constexpr const char* kSummaryCsvHeader =
    "model,mode,benchmark,n_records,acc,pbs,ccp,effsw,len_chars,extraction_rate";
inline constexpr const char* kWilcoxonCsvHeader = "family,bench,comparison,n,mean_diff,p";

inline std::string summary_csv(const std::vector<RunAnalysis>& runs) {
    using report_detail::csv_escape;
    using report_detail::fmt;
    std::string out = std::string(kSummaryCsvHeader) + "\n";
    for (const auto& a : runs) {
        const ConfigSummary& s = a.summary;
        out += csv_escape(s.model) + "," + csv_escape(s.mode) + "," + csv_escape(s.benchmark) +
               "," + std::to_string(s.n_records) + "," + fmt(s.accuracy) + "," + fmt(s.mean_pbs) +
               "," + (s.mean_ccp ? fmt(*s.mean_ccp) : "") + "," +
               (s.mean_effsw ? fmt(*s.mean_effsw) : "") + "," + fmt(s.mean_len_chars) + "," +
               fmt(s.extraction_rate) + "\n";
    }
    return out;
}

inline std::string quartiles_csv(const std::vector<RunAnalysis>& runs) {
    using report_detail::fmt;
    std::string out = "run_id,k,bin,count,mean_len_chars,mean_pbs\n";
    for (const auto& a : runs) {
        auto emit = [&](const BinTable& t) {
            for (int b = 0; b < t.k; ++b)
                out += a.run_id + "," + std::to_string(t.k) + "," + std::to_string(b + 1) + "," +
                       std::to_string(t.bin_counts[b]) + "," + fmt(t.bin_mean_lengths[b]) + "," +
                       fmt(t.bin_means[b]) + "\n";
        };
        if (a.quartiles.k == 4) emit(a.quartiles);
        for (const auto& t : a.robustness) emit(t);
    }
    return out;
}

inline std::string robustness_csv(const std::vector<RunAnalysis>& runs) {
    using report_detail::fmt;
    std::string out = "run_id,k,strictly_monotone,first_violation,endpoint_gradient\n";
    for (const auto& a : runs) {
        auto emit = [&](const BinTable& t) {
            out += a.run_id + "," + std::to_string(t.k) + "," +
                   (t.strictly_monotone ? "true" : "false") + "," +
                   (t.first_violation ? std::to_string(*t.first_violation) : "") + "," +
                   fmt(t.endpoint_gradient) + "\n";
        };
        if (a.quartiles.k == 4) emit(a.quartiles);
        for (const auto& t : a.robustness) emit(t);
    }
    return out;
}

inline std::string partial_corr_csv(const std::vector<RunAnalysis>& runs) {
    using report_detail::fmt;
    std::string out = "run_id,n,rho,p_two_sided,p_one_sided_positive,method,error\n";
    for (const auto& a : runs) {
        if (a.partial) {
            out += a.run_id + "," + std::to_string(a.partial->n) + "," + fmt(a.partial->rho) +
                   "," + fmt(a.partial->p_two_sided) + "," + fmt(a.partial->p_one_sided_positive) +
                   "," + a.partial->method + ",\n";
        } else {
            out += a.run_id + ",,,,,," + report_detail::csv_escape(a.partial_error) + "\n";
        }
    }
    return out;
}

inline std::string wilcoxon_csv(const std::vector<WilcoxonRow>& rows) {
    using report_detail::csv_escape;
    using report_detail::fmt;
    std::string out = std::string(kWilcoxonCsvHeader) + "\n";
    for (const auto& r : rows) {
        if (!r.skipped_reason.empty()) {
            out += csv_escape(r.family) + "," + csv_escape(r.bench) + "," +
                   csv_escape(r.comparison) + ",,,skipped: " + csv_escape(r.skipped_reason) + "\n";
            continue;
        }
        out += csv_escape(r.family) + "," + csv_escape(r.bench) + "," + csv_escape(r.comparison) +
               "," + std::to_string(r.n) + "," + fmt(r.mean_diff) + "," + fmt(r.p_one_sided) +
               "\n";
    }
    return out;
}

inline std::string scatter_csv(const std::vector<ScatterPoint>& points) {
    using report_detail::csv_escape;
    using report_detail::fmt;
    std::string out = "model,mode,benchmark,mean_len_chars,mean_pbs\n";
    for (const auto& p : points)
        out += csv_escape(p.model) + "," + csv_escape(p.mode) + "," + csv_escape(p.benchmark) +
               "," + fmt(p.mean_len_chars) + "," + fmt(p.mean_pbs) + "\n";
    return out;
}

inline std::string intervention_csv(const InterventionAnalysis& analysis) {
    using report_detail::fmt;
    std::string out =
        "bucket_low,bucket_high,n_trials,n_changed,change_rate,directional_shift_rate,"
        "underpowered\n";
    for (const auto& b : analysis.buckets)
        out += fmt(b.bucket_low) + "," + fmt(b.bucket_high) + "," + std::to_string(b.n_trials) +
               "," + std::to_string(b.n_changed) + "," + fmt(b.change_rate) + "," +
               (b.directional_shift_rate ? fmt(*b.directional_shift_rate) : "") + "," +
               (b.underpowered ? "true" : "false") + "\n";
    return out;
}

inline nlohmann::json report_to_json(const AuditReport& report) {
    nlohmann::json j;
    j["schema_version"] = kRecordSchemaVersion;
    j["metadata"] = report.metadata;
    j["runs"] = nlohmann::json::array();
    for (const auto& a : report.runs) {
        nlohmann::json r{
            {"run_id", a.run_id},
            {"summary",
             {{"model", a.summary.model},
              {"mode", a.summary.mode},
              {"benchmark", a.summary.benchmark},
              {"n_records", a.summary.n_records},
              {"acc", a.summary.accuracy},
              {"pbs", a.summary.mean_pbs},
              {"len_chars", a.summary.mean_len_chars},
              {"extraction_rate", a.summary.extraction_rate}}},
            {"preferred_position", a.preferred.position},
            {"preferred_position_tie", a.preferred.tie},
            {"n_zero_extraction_questions", a.n_zero_extraction_questions},
            {"n_partial_extraction_questions", a.n_partial_extraction_questions},
        };
        if (a.summary.mean_ccp) r["summary"]["ccp"] = *a.summary.mean_ccp;
        if (a.summary.mean_effsw) r["summary"]["effsw"] = *a.summary.mean_effsw;
        auto bin_json = [](const BinTable& t) {
            nlohmann::json b{{"k", t.k},
                             {"bin_means", t.bin_means},
                             {"bin_mean_lengths", t.bin_mean_lengths},
                             {"bin_counts", t.bin_counts},
                             {"strictly_monotone", t.strictly_monotone},
                             {"endpoint_gradient", t.endpoint_gradient}};
            if (t.first_violation) b["first_violation"] = *t.first_violation;
            return b;
        };
        if (a.quartiles.k == 4) r["quartiles"] = bin_json(a.quartiles);
        r["robustness"] = nlohmann::json::array();
        for (const auto& t : a.robustness) r["robustness"].push_back(bin_json(t));
        if (a.partial) {
            r["partial_corr"] = {{"rho", a.partial->rho},
                                 {"p_two_sided", a.partial->p_two_sided},
                                 {"p_one_sided_positive", a.partial->p_one_sided_positive},
                                 {"n", a.partial->n},
                                 {"method", a.partial->method}};
        } else {
            r["partial_corr_error"] = a.partial_error;
        }
        j["runs"].push_back(std::move(r));
    }
    j["wilcoxon"] = nlohmann::json::array();
    for (const auto& w : report.wilcoxon) {
        nlohmann::json row{{"family", w.family},   {"bench", w.bench},
                           {"comparison", w.comparison}, {"n", w.n},
                           {"mean_diff", w.mean_diff},   {"p", w.p_one_sided},
                           {"degenerate", w.degenerate}, {"n_dropped", w.n_dropped}};
        if (!w.skipped_reason.empty()) row["skipped_reason"] = w.skipped_reason;
        j["wilcoxon"].push_back(std::move(row));
    }
    j["scatter"] = nlohmann::json::array();
    for (const auto& p : report.scatter)
        j["scatter"].push_back({{"model", p.model},
                                {"mode", p.mode},
                                {"benchmark", p.benchmark},
                                {"mean_len_chars", p.mean_len_chars},
                                {"mean_pbs", p.mean_pbs}});
    if (report.intervention) {
        nlohmann::json iv;
        iv["buckets"] = nlohmann::json::array();
        for (const auto& b : report.intervention->buckets) {
            nlohmann::json bj{{"bucket_low", b.bucket_low},
                              {"bucket_high", b.bucket_high},
                              {"n_trials", b.n_trials},
                              {"n_changed", b.n_changed},
                              {"change_rate", b.change_rate},
                              {"underpowered", b.underpowered}};
            if (b.directional_shift_rate) bj["directional_shift_rate"] = *b.directional_shift_rate;
            iv["buckets"].push_back(std::move(bj));
        }
        iv["before_after_ccp"] = {{"statistic", report.intervention->before_after_ccp.statistic},
                                  {"p_value", report.intervention->before_after_ccp.p_value},
                                  {"df", report.intervention->before_after_ccp.df},
                                  {"table", report.intervention->before_after_ccp.table},
                                  {"small_sample_warning",
                                   report.intervention->before_after_ccp.small_sample_warning}};
        iv["n_unextracted"] = report.intervention->n_unextracted;
        j["intervention"] = std::move(iv);
    }
    return j;
}

// Emit every table as CSV plus the full report as JSON. Output is a pure
// function of the report, so regeneration is byte-identical.
inline void write_report(const AuditReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    using report_detail::write_file;
    fs::create_directories(out_dir);
    fs::path dir(out_dir);
    write_file(dir / "summary.csv", summary_csv(report.runs));
    write_file(dir / "quartiles.csv", quartiles_csv(report.runs));
    write_file(dir / "robustness.csv", robustness_csv(report.runs));
    write_file(dir / "partial_corr.csv", partial_corr_csv(report.runs));
    write_file(dir / "wilcoxon.csv", wilcoxon_csv(report.wilcoxon));
    write_file(dir / "scatter.csv", scatter_csv(report.scatter));
    if (report.intervention)
        write_file(dir / "intervention.csv", intervention_csv(*report.intervention));
    write_file(dir / "report.json", report_to_json(report).dump(2) + "\n");
}

}  // namespace posaudit
