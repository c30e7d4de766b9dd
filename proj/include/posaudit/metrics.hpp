#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "posaudit/mcq.hpp"
#include "posaudit/parse.hpp"

namespace posaudit {

// Position Bias Score: L2 distance between an answer-position distribution
// and uniform. Range [0, sqrt(3)/2]; 0 at uniform, sqrt(3)/2 at a point mass.
inline double pbs(const std::array<double, 4>& p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < -1e-12) throw std::invalid_argument("pbs: negative histogram entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("pbs: histogram must sum to 1");
    double d2 = 0.0;
    for (double v : p) d2 += (v - 0.25) * (v - 0.25);
    return std::sqrt(d2);
}

inline constexpr double kPbsMax = 0.8660254037844386;  // sqrt(3)/2

// Commitment Change Point: 0 when every mention already equals the final
// answer; otherwise the normalized position of the first mention after the
// last non-final-answer mention, or 1.0 when that mention does not exist.
inline std::optional<double> ccp(const std::vector<TrajectoryMention>& mentions, char final) {
    if (mentions.empty()) return std::nullopt;
    std::ptrdiff_t last_other = -1;
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(mentions.size()); ++i)
        if (mentions[i].letter != final) last_other = i;
    if (last_other < 0) return 0.0;
    if (last_other + 1 >= static_cast<std::ptrdiff_t>(mentions.size())) return 1.0;
    return mentions[last_other + 1].norm_pos;
}

// Effective switching: adjacent mention-letter changes per 1000 characters.
// Undefined with fewer than two mentions.
inline std::optional<double> eff_switching(const std::vector<TrajectoryMention>& mentions,
                                           std::size_t total_chars) {
    if (total_chars == 0) throw std::invalid_argument("eff_switching: total_chars must be > 0");
    if (mentions.size() < 2) return std::nullopt;
    int switches = 0;
    for (std::size_t i = 1; i < mentions.size(); ++i)
        if (mentions[i].letter != mentions[i - 1].letter) ++switches;
    return static_cast<double>(switches) / (static_cast<double>(total_chars) / 1000.0);
}

struct QuestionAggregate {
    std::string question_id;
    std::array<double, 4> position_histogram{0, 0, 0, 0};  // absolute positions
    double pbs_value = 0.0;
    double accuracy = 0.0;
    double mean_len_chars = 0.0;
    std::optional<double> mean_ccp;
    std::optional<double> mean_effsw;
    int n_extracted = 0;  // of the 4 permutation records
    std::string subject;
};

// One permutation's analysed generation, tagged with its shift.
struct PermutationRecord {
    int shift = 0;
    ParsedGeneration parsed;
    bool error = false;  // backend-level failure; excluded from metrics
};

// Roll up the (up to) four permutation records of one question.
// Returns nullopt when no record was extracted.
inline std::optional<QuestionAggregate> aggregate_question(
    const std::string& question_id, int correct_index,
    const std::vector<PermutationRecord>& records, const std::string& subject = "") {
    QuestionAggregate agg;
    agg.question_id = question_id;
    agg.subject = subject;
    double len_sum = 0.0, ccp_sum = 0.0, effsw_sum = 0.0, correct = 0.0;
    int n_ccp = 0, n_effsw = 0;
    for (const auto& rec : records) {
        if (rec.error || !rec.parsed.final_answer) continue;
        int pos = *rec.parsed.final_answer - 'A';
        agg.position_histogram[pos] += 1.0;
        if (map_to_original(pos, rec.shift) == correct_index) correct += 1.0;
        len_sum += static_cast<double>(rec.parsed.total_chars);
        if (auto c = ccp(rec.parsed.mentions, *rec.parsed.final_answer)) {
            ccp_sum += *c;
            ++n_ccp;
        }
        if (rec.parsed.total_chars > 0) {
            if (auto e = eff_switching(rec.parsed.mentions, rec.parsed.total_chars)) {
                effsw_sum += *e;
                ++n_effsw;
            }
        }
        ++agg.n_extracted;
    }
    if (agg.n_extracted == 0) return std::nullopt;
    for (auto& h : agg.position_histogram) h /= agg.n_extracted;
    agg.pbs_value = pbs(agg.position_histogram);
    agg.accuracy = correct / agg.n_extracted;
    agg.mean_len_chars = len_sum / agg.n_extracted;
    if (n_ccp > 0) agg.mean_ccp = ccp_sum / n_ccp;
    if (n_effsw > 0) agg.mean_effsw = effsw_sum / n_effsw;
    return agg;
}

// Per-configuration summary row (model / mode / benchmark table schema).
struct ConfigSummary {
    std::string model;
    std::string mode;
    std::string benchmark;
    int n_records = 0;  // extracted records contributing to metrics
    double accuracy = 0.0;
    double mean_pbs = 0.0;
    std::optional<double> mean_ccp;
    std::optional<double> mean_effsw;
    double mean_len_chars = 0.0;
    double extraction_rate = 0.0;
};

// Unweighted means over questions. extraction_rate uses non-error records as
// the denominator; error counts are reported separately by the caller.
inline ConfigSummary summarize_config(const std::vector<QuestionAggregate>& aggregates,
                                      const std::string& model, const std::string& mode,
                                      const std::string& benchmark, int n_nonerror_records) {
    if (aggregates.empty()) throw std::invalid_argument("summarize_config: no aggregates");
    ConfigSummary s;
    s.model = model;
    s.mode = mode;
    s.benchmark = benchmark;
    double acc = 0.0, pbs_sum = 0.0, len = 0.0, ccp_sum = 0.0, effsw_sum = 0.0;
    int n_ccp = 0, n_effsw = 0;
    for (const auto& a : aggregates) {
        s.n_records += a.n_extracted;
        acc += a.accuracy;
        pbs_sum += a.pbs_value;
        len += a.mean_len_chars;
        if (a.mean_ccp) {
            ccp_sum += *a.mean_ccp;
            ++n_ccp;
        }
        if (a.mean_effsw) {
            effsw_sum += *a.mean_effsw;
            ++n_effsw;
        }
    }
    double n = static_cast<double>(aggregates.size());
    s.accuracy = acc / n;
    s.mean_pbs = pbs_sum / n;
    s.mean_len_chars = len / n;
    if (n_ccp > 0) s.mean_ccp = ccp_sum / n_ccp;
    if (n_effsw > 0) s.mean_effsw = effsw_sum / n_effsw;
    s.extraction_rate =
        n_nonerror_records > 0 ? static_cast<double>(s.n_records) / n_nonerror_records : 0.0;
    return s;
}

}  // namespace posaudit
