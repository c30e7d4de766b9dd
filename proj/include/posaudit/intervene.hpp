#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "posaudit/backend_types.hpp"
#include "posaudit/metrics.hpp"
#include "posaudit/parse.hpp"
#include "posaudit/stats.hpp"
#include "posaudit/util.hpp"

namespace posaudit {

inline constexpr std::array<double, 4> kTruncationOffsets = {-0.15, -0.05, 0.05, 0.15};
inline constexpr double kClampLow = 0.02;
inline constexpr double kClampHigh = 0.98;

struct PlannedCut {
    double offset = 0.0;
    double abs_pos = 0.0;      // clamped normalized truncation position
    std::size_t cut_char = 0;  // character index into the raw generated text
};

struct TruncationTrial {
    std::string question_id;
    int shift = 0;
    double offset = 0.0;
    double abs_pos = 0.0;
    int replicate = 0;
    std::optional<char> new_answer;
    bool changed = false;
    bool toward_preferred = false;
};

struct BucketStats {
    double bucket_low = 0.0;
    double bucket_high = 0.0;
    int n_trials = 0;  // trials with an extractable continuation answer
    int n_changed = 0;
    double change_rate = 0.0;
    std::optional<double> directional_shift_rate;  // among changed trials
    bool underpowered = false;                     // n_trials < 40
};

struct InterventionAnalysis {
    std::vector<BucketStats> buckets;
    ChiSquareResult before_after_ccp;
    int n_unextracted = 0;
};

// Cut points for one trajectory. Cuts are clamped into [0.02, 0.98] of the
// raw text and never split a think-tag byte sequence (shifted left to the
// tag start when they would).
inline std::vector<PlannedCut> plan_truncations(const std::string& raw_text, double ccp_value) {
    std::size_t total = utf8::length(raw_text);
    if (total == 0) throw std::invalid_argument("plan_truncations: empty text");
    // tag interiors as [start, end) character ranges (tags are ASCII)
    std::vector<std::pair<std::size_t, std::size_t>> tag_ranges;
    for (const char* tag : {"<think>", "</think>"}) {
        std::size_t tag_len = std::string_view(tag).size();
        std::size_t pos = 0;
        while ((pos = raw_text.find(tag, pos)) != std::string::npos) {
            tag_ranges.emplace_back(utf8::byte_to_char(raw_text, pos),
                                    utf8::byte_to_char(raw_text, pos) + tag_len);
            pos += tag_len;
        }
    }
    std::vector<PlannedCut> cuts;
    for (double off : kTruncationOffsets) {
        PlannedCut cut;
        cut.offset = off;
        cut.abs_pos = std::clamp(ccp_value + off, kClampLow, kClampHigh);
        std::size_t idx = static_cast<std::size_t>(std::llround(cut.abs_pos * total));
        for (const auto& [start, end] : tag_ranges)
            if (idx > start && idx < end) idx = start;
        idx = std::clamp<std::size_t>(idx, 1, total - 1);
        cut.cut_char = idx;
        cuts.push_back(cut);
    }
    return cuts;
}

// Configuration-level preferred position: argmax of the mean position
// histogram over questions; ties break toward the lower index.
struct PreferredPosition {
    int position = 0;
    bool tie = false;
};

inline PreferredPosition preferred_position(const std::vector<QuestionAggregate>& aggregates) {
    if (aggregates.empty()) throw std::invalid_argument("preferred_position: no aggregates");
    std::array<double, 4> mean{0, 0, 0, 0};
    for (const auto& a : aggregates)
        for (int j = 0; j < 4; ++j) mean[j] += a.position_histogram[j];
    PreferredPosition res;
    for (int j = 1; j < 4; ++j)
        if (mean[j] > mean[res.position]) res.position = j;
    for (int j = 0; j < 4; ++j)
        if (j != res.position && mean[j] == mean[res.position]) res.tie = true;
    return res;
}

// One question's inputs to the intervention, built from a main-run record.
struct InterventionInput {
    std::string question_id;
    int shift = 0;
    PromptBundle prompt;
    std::string raw_text;  // original generated text, tags included
    double ccp_value = 0.0;
    char original_answer = 'A';
};

struct InterventionOptions {
    int replicates = 3;
    int preferred_position = 0;
    std::uint64_t base_seed = 0;
    DecodeConfig decode{DecodeStrategy::nucleus, 0.95, 0.7, 8192, 0};
    ParseOptions parse_options;
    bool retain_continuation_text = false;
};

// Runs all planned cuts for the given questions. Trials with unextractable
// continuations keep new_answer absent; they stay in the log but drop out of
// the rate denominators.
inline std::vector<TruncationTrial> run_intervention(Backend& backend,
                                                     const std::vector<InterventionInput>& inputs,
                                                     const InterventionOptions& opts) {
    std::vector<TruncationTrial> trials;
    char preferred_letter = static_cast<char>('A' + opts.preferred_position);
    for (const auto& input : inputs) {
        auto cuts = plan_truncations(input.raw_text, input.ccp_value);
        for (std::size_t c = 0; c < cuts.size(); ++c) {
            std::size_t cut_byte = utf8::char_to_byte(input.raw_text, cuts[c].cut_char);
            std::string prefix = input.raw_text.substr(0, cut_byte);
            DecodeConfig decode = opts.decode;
            decode.seed = hash_combine(
                hash_combine(opts.base_seed, hash_str(input.question_id)),
                hash_combine(static_cast<std::uint64_t>(input.shift), static_cast<std::uint64_t>(c)));
            auto outs = backend.continue_from(input.prompt, prefix, decode, opts.replicates);
            for (int r = 0; r < static_cast<int>(outs.size()); ++r) {
                TruncationTrial trial;
                trial.question_id = input.question_id;
                trial.shift = input.shift;
                trial.offset = cuts[c].offset;
                trial.abs_pos = cuts[c].abs_pos;
                trial.replicate = r;
                if (outs[r].ok()) {
                    std::string full = prefix + outs[r].full_trajectory();
                    ThinkSplit split = split_think(full);
                    trial.new_answer =
                        extract_final(split.thinking + split.response, opts.parse_options);
                }
                if (trial.new_answer) {
                    trial.changed = *trial.new_answer != input.original_answer;
                    trial.toward_preferred = trial.changed && *trial.new_answer == preferred_letter;
                }
                trials.push_back(std::move(trial));
            }
        }
    }
    return trials;
}

// Absolute-position buckets [0,0.3) [0.3,0.6) [0.6,0.9) [0.9,1.0], plus the
// before-vs-after-CCP change-rate chi-square (trials classified by offset sign).
inline InterventionAnalysis bucket_analysis(const std::vector<TruncationTrial>& trials) {
    if (trials.empty()) throw std::invalid_argument("bucket_analysis: no trials");
    static constexpr std::array<std::pair<double, double>, 4> edges = {
        std::pair{0.0, 0.3}, {0.3, 0.6}, {0.6, 0.9}, {0.9, 1.0}};
    InterventionAnalysis out;
    std::array<int, 4> n{0, 0, 0, 0}, changed{0, 0, 0, 0}, toward{0, 0, 0, 0};
    int before_n = 0, before_changed = 0, after_n = 0, after_changed = 0;
    for (const auto& t : trials) {
        if (!t.new_answer) {
            ++out.n_unextracted;
            continue;
        }
        int b = 3;
        for (int i = 0; i < 3; ++i)
            if (t.abs_pos < edges[i].second) {
                b = i;
                break;
            }
        ++n[b];
        if (t.changed) {
            ++changed[b];
            if (t.toward_preferred) ++toward[b];
        }
        if (t.offset < 0) {
            ++before_n;
            if (t.changed) ++before_changed;
        } else {
            ++after_n;
            if (t.changed) ++after_changed;
        }
    }
    for (int b = 0; b < 4; ++b) {
        BucketStats s;
        s.bucket_low = edges[b].first;
        s.bucket_high = edges[b].second;
        s.n_trials = n[b];
        s.n_changed = changed[b];
        s.change_rate = n[b] > 0 ? static_cast<double>(changed[b]) / n[b] : 0.0;
        if (changed[b] > 0)
            s.directional_shift_rate = static_cast<double>(toward[b]) / changed[b];
        s.underpowered = n[b] < 40;
        out.buckets.push_back(s);
    }
    if (before_n > 0 && after_n > 0)
        out.before_after_ccp = chi_square_2x2(before_changed, before_n, after_changed, after_n);
    return out;
}

}  // namespace posaudit
