#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "posaudit/backend_types.hpp"
#include "posaudit/mcq.hpp"
#include "posaudit/util.hpp"

namespace posaudit {

// Synthetic reasoning-model parameters. The final-answer position is sampled
// from p(j) proportional to pi_j * exp(alpha * [j == correct] +
// lambda * ln(L) * [j == preferred]), with L the trajectory length in chars.
struct MockParams {
    std::array<double, 4> baseline_pref{0.25, 0.25, 0.25, 0.25};
    double accuracy_strength = 0.0;   // alpha
    double drift_strength = 0.0;      // lambda
    double length_log_mean = 7.6;     // mu, ln(chars)
    double length_log_sd = 0.6;       // sigma
    double mention_rate = 3.0;        // expected option mentions per 1000 chars
    int preferred_position = 0;

    void validate() const {
        double sum = 0.0;
        for (double p : baseline_pref) {
            if (p < 0.0) throw std::invalid_argument("MockParams: negative baseline_pref entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("MockParams: baseline_pref must sum to 1");
        if (accuracy_strength < 0.0 || drift_strength < 0.0)
            throw std::invalid_argument("MockParams: strengths must be non-negative");
        if (length_log_sd <= 0.0) throw std::invalid_argument("MockParams: length_log_sd must be > 0");
        if (mention_rate < 0.0) throw std::invalid_argument("MockParams: negative mention_rate");
        if (preferred_position < 0 || preferred_position > 3)
            throw std::invalid_argument("MockParams: preferred_position out of range");
    }
};

namespace mock_detail {

// Option texts generated by make_synthetic_dataset carry this marker on the
// correct option, letting the mock recover the correct position from the
// rendered prompt alone.
inline constexpr const char* kCorrectMarker = "#correct";

// Terminal sentences are ~19 chars; lengths are floored so that the clamped
// truncation window [0.02, 0.98] never reaches into the terminal sentence.
inline constexpr std::size_t kMinLength = 1200;
inline constexpr std::size_t kMaxLength = 200000;

struct PromptInfo {
    Mode mode = Mode::reason;
    std::string question_id;            // empty when no qid= token present
    std::optional<int> correct_position;
};

inline PromptInfo parse_prompt(const PromptBundle& prompt) {
    PromptInfo info;
    if (prompt.system_text.find("Do NOT explain") != std::string::npos)
        info.mode = Mode::direct;
    else if (prompt.system_text.find("Keep your reasoning concise") != std::string::npos)
        info.mode = Mode::cot;
    else
        info.mode = Mode::reason;

    std::size_t qid = prompt.user_text.find("qid=");
    if (qid != std::string::npos) {
        std::size_t end = qid + 4;
        while (end < prompt.user_text.size() &&
               (std::isalnum(static_cast<unsigned char>(prompt.user_text[end])) ||
                prompt.user_text[end] == '-' || prompt.user_text[end] == '_'))
            ++end;
        info.question_id = prompt.user_text.substr(qid + 4, end - qid - 4);
    }
    // option lines rendered as "A. ..." .. "D. ..."
    for (int j = 0; j < 4; ++j) {
        std::string tag = std::string(1, static_cast<char>('A' + j)) + ". ";
        std::size_t pos = prompt.user_text.find("\n" + tag);
        if (pos == std::string::npos && prompt.user_text.rfind(tag, 0) == 0) pos = 0;
        if (pos == std::string::npos) continue;
        std::size_t line_end = prompt.user_text.find('\n', pos + 1);
        std::string line = prompt.user_text.substr(pos, line_end == std::string::npos
                                                            ? std::string::npos
                                                            : line_end - pos);
        if (line.find(kCorrectMarker) != std::string::npos) info.correct_position = j;
    }
    return info;
}

inline int sample_position(std::mt19937_64& rng, const MockParams& params,
                           std::optional<int> correct, double log_length_term) {
    std::array<double, 4> w;
    for (int j = 0; j < 4; ++j) {
        double pi = std::max(params.baseline_pref[j], 1e-12);
        double logit = 0.0;
        if (correct && j == *correct) logit += params.accuracy_strength;
        if (j == params.preferred_position) logit += params.drift_strength * log_length_term;
        w[j] = pi * std::exp(logit);
    }
    std::discrete_distribution<int> dist(w.begin(), w.end());
    return dist(rng);
}

// Filler prose avoiding anything the extraction patterns could match:
// no standalone a-d words, no "I think"/"believe", no parenthesized letters.
inline constexpr const char* kFillers[] = {
    "Let me reconsider the problem once more and weigh the evidence with care. ",
    "The wording of the question matters here, so it pays to re-read it slowly. ",
    "None of the listed statements can be ruled out without checking the details. ",
    "Working through the implications step by step keeps the reasoning honest. ",
    "There is some tension between these statements that needs to be resolved. ",
};

inline std::string mention_phrase(std::mt19937_64& rng, char letter) {
    switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
        case 0: return std::string("Option ") + letter + " has merit here. ";
        case 1: return std::string("Maybe choice: ") + letter + " then. ";
        case 2: return std::string("I could pick ") + letter + " instead. ";
        case 3: return std::string(1, letter) + " seems right at first glance. ";
        default: return std::string("So it's ") + letter + " perhaps. ";
    }
}

inline std::string terminal_sentence(char letter) {
    return std::string("The answer is (") + letter + ").";
}

// Body of roughly target_chars characters whose option mentions are exactly
// the given letter sequence, in order, ending with the final answer mention
// carried by the terminal sentence (appended by the caller).
inline std::string build_body(std::mt19937_64& rng, const std::string& question_id,
                              const std::vector<char>& mention_letters,
                              std::size_t target_chars) {
    std::string body = "Okay, let me work through item qid=" +
                       (question_id.empty() ? std::string("unknown") : question_id) +
                       " with some care. ";
    std::size_t n_segments = mention_letters.size() + 1;
    std::size_t per_segment =
        target_chars > body.size() ? (target_chars - body.size()) / n_segments : 0;
    std::uniform_int_distribution<int> pick(0, 4);
    for (std::size_t i = 0; i < n_segments; ++i) {
        std::size_t segment_end = body.size() + per_segment;
        while (body.size() < segment_end) body += kFillers[pick(rng)];
        if (i < mention_letters.size()) body += mention_phrase(rng, mention_letters[i]);
    }
    return body;
}

}  // namespace mock_detail

// Deterministic synthetic generation: (prompt, params, seed) fully determines
// the output bytes.
inline BackendOutput mock_generate(const PromptBundle& prompt, const MockParams& params,
                                   std::uint64_t seed) {
    params.validate();
    auto info = mock_detail::parse_prompt(prompt);
    std::mt19937_64 rng(hash_combine(hash_combine(seed, hash_str(prompt.system_text)),
                                     hash_str(prompt.user_text)));

    BackendOutput out;
    if (info.mode == Mode::direct) {
        int j = mock_detail::sample_position(rng, params, info.correct_position, 0.0);
        out.text = mock_detail::terminal_sentence(static_cast<char>('A' + j));
        return out;
    }

    std::lognormal_distribution<double> len_dist(params.length_log_mean, params.length_log_sd);
    std::size_t length = static_cast<std::size_t>(
        std::clamp(len_dist(rng), static_cast<double>(mock_detail::kMinLength),
                   static_cast<double>(mock_detail::kMaxLength)));

    int final_pos = mock_detail::sample_position(rng, params, info.correct_position,
                                                 std::log(static_cast<double>(length)));

    std::poisson_distribution<int> n_mentions_dist(params.mention_rate *
                                                   static_cast<double>(length) / 1000.0);
    int n_earlier = std::max(0, n_mentions_dist(rng) - 1);
    std::discrete_distribution<int> pi_dist(params.baseline_pref.begin(),
                                            params.baseline_pref.end());
    char final_letter = static_cast<char>('A' + final_pos);
    // The trajectory commits to its final answer at a sampled changeover
    // fraction: mentions before it are exploratory (drawn from pi), mentions
    // after it repeat the final answer.
    double commit_frac = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    int commit_idx = static_cast<int>(std::llround(commit_frac * n_earlier));
    std::vector<char> letters;
    letters.reserve(n_earlier);
    for (int i = 0; i < n_earlier; ++i)
        letters.push_back(i < commit_idx ? static_cast<char>('A' + pi_dist(rng)) : final_letter);
    std::string terminal = mock_detail::terminal_sentence(final_letter);
    std::string body =
        mock_detail::build_body(rng, info.question_id, letters, length - terminal.size());

    if (info.mode == Mode::reason)
        out.text = "<think>" + body + "</think>\n" + terminal;
    else
        out.text = body + terminal;
    return out;
}

// Re-sample the final answer with the length term computed from the exposed
// prefix, then emit a well-formed continuation ending in a terminal sentence.
inline BackendOutput mock_continue(const PromptBundle& prompt, const std::string& prefix_text,
                                   const MockParams& params, std::uint64_t seed) {
    params.validate();
    BackendOutput out;
    auto info = mock_detail::parse_prompt(prompt);
    // A prefix is recognized as our own when it carries the qid token, or when
    // it is so short that it is still a prefix of the deterministic opening.
    bool own_prefix = prefix_text.find("qid=") != std::string::npos;
    if (!own_prefix && !prefix_text.empty()) {
        std::string opening = "Okay, let me work through item qid=" +
                              (info.question_id.empty() ? std::string("unknown")
                                                        : info.question_id);
        for (const std::string& cand : {opening, "<think>" + opening})
            if (cand.rfind(prefix_text, 0) == 0) own_prefix = true;
    }
    if (!own_prefix) {
        out.finish_reason = FinishReason::error;
        out.error_message = "mock_continue: prefix not produced by mock_generate";
        return out;
    }
    std::mt19937_64 rng(hash_combine(hash_combine(seed, hash_str(prefix_text)),
                                     hash_str(prompt.user_text)));
    double exposed = static_cast<double>(utf8::length(prefix_text));
    int pos = mock_detail::sample_position(rng, params, info.correct_position,
                                           std::log(std::max(exposed, 2.0)));
    std::string text = " Taking stock of the evidence so far, it is time to settle this. ";
    bool think_open = prefix_text.rfind("<think>") != std::string::npos &&
                      prefix_text.find("</think>", prefix_text.rfind("<think>")) ==
                          std::string::npos;
    if (think_open) text += "</think>\n";
    text += mock_detail::terminal_sentence(static_cast<char>('A' + pos));
    out.text = text;
    return out;
}

class MockBackend : public Backend {
  public:
    explicit MockBackend(MockParams params) : params_(params) { params_.validate(); }

    std::string id() const override { return "mock"; }
    bool supports_continuation() const override { return true; }

    BackendOutput generate(const PromptBundle& prompt, const DecodeConfig& decode) override {
        return mock_generate(prompt, params_, decode.seed);
    }

    std::vector<BackendOutput> continue_from(const PromptBundle& prompt,
                                             const std::string& prefix_text,
                                             const DecodeConfig& decode, int n) override {
        std::vector<BackendOutput> outs;
        outs.reserve(n);
        for (int i = 0; i < n; ++i)
            outs.push_back(mock_continue(prompt, prefix_text, params_,
                                         hash_combine(decode.seed, static_cast<std::uint64_t>(i))));
        return outs;
    }

    const MockParams& params() const { return params_; }

  private:
    MockParams params_;
};

// Synthetic 4-option items for mock runs. The correct option carries a marker
// the mock recognizes; ids embed a stable zero-padded index.
inline std::vector<McqItem> make_synthetic_dataset(int n, std::uint64_t seed) {
    std::mt19937_64 rng(mix64(seed));
    std::uniform_int_distribution<int> pos_dist(0, 3);
    std::vector<McqItem> items;
    items.reserve(n);
    for (int i = 0; i < n; ++i) {
        McqItem item;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "q%05d", i);
        item.id = idbuf;
        item.question = std::string("Synthetic audit item qid=") + idbuf +
                        ". Which of the listed statements holds?";
        item.correct_index = pos_dist(rng);
        for (int j = 0; j < 4; ++j) {
            item.options[j] = "statement " + std::string(idbuf) + "-" + std::to_string(j);
            if (j == item.correct_index) item.options[j] += " " + std::string(mock_detail::kCorrectMarker);
        }
        item.subject = "synthetic";
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace posaudit
