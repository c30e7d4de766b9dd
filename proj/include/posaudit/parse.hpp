#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/regex.hpp>

#include "posaudit/backend_types.hpp"
#include "posaudit/util.hpp"

namespace posaudit {

// One option-letter reference inside a trajectory. Offsets are Unicode scalar values.
struct TrajectoryMention {
    char letter = 'A';  // 'A'..'D'
    std::size_t char_pos = 0;
    double norm_pos = 0.0;
};

struct ParsedGeneration {
    std::string thinking_text;
    std::string response_text;
    std::optional<char> final_answer;  // absent => record is unextracted
    std::vector<TrajectoryMention> mentions;
    std::size_t total_chars = 0;  // scalar length of thinking + response
    bool unclosed_think = false;
    bool used_fallback = false;
};

struct ParseOptions {
    // Most-frequent-standalone-letter fallback over the final 200 characters.
    // Off by default; enable to match the looser extraction convention.
    bool letter_frequency_fallback = false;
};

namespace parse_detail {

// U+FF1A, full-width colon, as a UTF-8 literal.
inline constexpr const char* kFwColon = "\xEF\xBC\x9A";

inline const std::array<boost::regex, 4>& final_patterns() {
    static const std::array<boost::regex, 4> pats = {
        boost::regex(std::string("[Tt]he\\s+answer\\s+is\\s*(?:[(:]|") + kFwColon +
                     ")?\\s*([A-D])\\b"),
        // optional markdown bold around "Answer" and after the colon ("**Answer:** X")
        boost::regex(std::string("\\*?\\*?[Aa]nswer\\*?\\*?\\s*(?::|") + kFwColon +
                     ")\\*?\\*?\\s*[(]?\\s*([A-D])\\b"),
        boost::regex("\\\\boxed\\{([A-D])\\}"),
        boost::regex("\\b([A-D])\\s*\\.?\\s*(?=\\n|$)"),
    };
    return pats;
}

inline const std::array<boost::regex, 9>& trajectory_patterns() {
    static const std::array<boost::regex, 9> pats = {
        boost::regex("option\\s+([A-D])\\b", boost::regex::icase),
        boost::regex(std::string("(?:answer|choice|select)\\s*(?:is|:|") + kFwColon +
                         ")?\\s*[(]?([A-D])\\b",
                     boost::regex::icase),
        boost::regex("\\(([A-D])\\)", boost::regex::icase),
        boost::regex("\\b([A-D])\\.\\s", boost::regex::icase),
        boost::regex("\\b([A-D])\\s+(?:is|seems?|looks?|appears?)\\s+(?:correct|right|better|more)",
                     boost::regex::icase),
        boost::regex("(?:choose|pick|go\\s+with|lean\\w*\\s+(?:towards?|to))\\s+[(]?([A-D])\\b",
                     boost::regex::icase),
        boost::regex("so\\s+(?:it'?s|the\\s+answer\\s+is)?\\s*[(]?([A-D])\\b", boost::regex::icase),
        boost::regex("(?:I\\s+(?:think|believe))\\s+.*\\b([A-D])\\b", boost::regex::icase),
        boost::regex("\\\\boxed\\{([A-D])\\}", boost::regex::icase),
    };
    return pats;
}

inline char upper_letter(char c) { return (c >= 'a' && c <= 'd') ? static_cast<char>(c - 32) : c; }

}  // namespace parse_detail

// Separate a <think>...</think> block from the response prose.
// No tags: thinking empty, everything is response. Unclosed tag: everything
// after it is thinking, response empty, flagged.
struct ThinkSplit {
    std::string thinking;
    std::string response;
    bool unclosed = false;
};

inline ThinkSplit split_think(std::string_view text) {
    ThinkSplit out;
    static constexpr std::string_view open_tag = "<think>";
    static constexpr std::string_view close_tag = "</think>";
    std::size_t open_pos = text.find(open_tag);
    if (open_pos == std::string_view::npos) {
        out.response = std::string(text);
        return out;
    }
    std::size_t body = open_pos + open_tag.size();
    std::size_t close_pos = text.find(close_tag, body);
    if (close_pos == std::string_view::npos) {
        out.thinking = std::string(text.substr(body));
        out.unclosed = true;
        return out;
    }
    out.thinking = std::string(text.substr(body, close_pos - body));
    out.response = std::string(text.substr(close_pos + close_tag.size()));
    return out;
}

// Final-answer cascade: patterns tried in priority order; the first pattern
// with a match anywhere in the text supplies the letter.
inline std::optional<char> extract_final(std::string_view text,
                                         const ParseOptions& opts = ParseOptions{}) {
    boost::cmatch m;
    for (const auto& pat : parse_detail::final_patterns()) {
        if (boost::regex_search(text.begin(), text.end(), m, pat))
            return parse_detail::upper_letter(*m[1].first);
    }
    if (opts.letter_frequency_fallback) {
        // Most frequent standalone letter in the trailing 200 characters.
        std::size_t chars = utf8::length(text);
        std::size_t start_byte =
            chars > 200 ? utf8::char_to_byte(text, chars - 200) : 0;
        std::string_view tail = text.substr(start_byte);
        static const boost::regex standalone("\\b([A-D])\\b");
        std::array<int, 4> counts{0, 0, 0, 0};
        for (boost::cregex_iterator it(tail.begin(), tail.end(), standalone), e; it != e; ++it)
            ++counts[*(*it)[1].first - 'A'];
        int best = -1;
        for (int i = 0; i < 4; ++i)
            if (counts[i] > 0 && (best < 0 || counts[i] > counts[best])) best = i;
        if (best >= 0) return static_cast<char>('A' + best);
    }
    return std::nullopt;
}

// All option-letter mentions, sorted by position. Offsets refer to the
// captured letter; duplicates at one position collapse to the
// lowest-numbered pattern.
inline std::vector<TrajectoryMention> extract_trajectory(std::string_view text) {
    if (text.empty()) return {};
    // byte position -> (pattern priority, letter)
    std::map<std::size_t, std::pair<int, char>> hits;
    int prio = 0;
    for (const auto& pat : parse_detail::trajectory_patterns()) {
        for (boost::cregex_iterator it(text.begin(), text.end(), pat), e; it != e; ++it) {
            const auto& m = *it;
            std::size_t pos = static_cast<std::size_t>(m[1].first - text.begin());
            char letter = parse_detail::upper_letter(*m[1].first);
            auto [slot, inserted] = hits.emplace(pos, std::make_pair(prio, letter));
            if (!inserted && prio < slot->second.first) slot->second = {prio, letter};
        }
        ++prio;
    }
    utf8::IndexMap idx(text);
    double total = static_cast<double>(idx.char_count());
    std::vector<TrajectoryMention> out;
    out.reserve(hits.size());
    for (const auto& [byte_pos, pl] : hits) {
        TrajectoryMention tm;
        tm.letter = pl.second;
        tm.char_pos = idx.byte_to_char(byte_pos);
        tm.norm_pos = total > 0 ? static_cast<double>(tm.char_pos) / total : 0.0;
        out.push_back(tm);
    }
    return out;
}

// Full analysis of one generation: think split, final answer, mentions.
// All trajectory work operates on thinking + response concatenated.
inline ParsedGeneration parse_generation(const BackendOutput& output,
                                         const ParseOptions& opts = ParseOptions{}) {
    ParsedGeneration pg;
    if (output.reasoning_text && !output.reasoning_text->empty()) {
        pg.thinking_text = *output.reasoning_text;
        pg.response_text = output.text;
    } else {
        ThinkSplit split = split_think(output.text);
        pg.thinking_text = std::move(split.thinking);
        pg.response_text = std::move(split.response);
        pg.unclosed_think = split.unclosed;
    }
    std::string trajectory = pg.thinking_text + pg.response_text;
    pg.total_chars = utf8::length(trajectory);
    pg.final_answer = extract_final(trajectory, opts);
    if (pg.final_answer) {
        ParseOptions no_fallback = opts;
        no_fallback.letter_frequency_fallback = false;
        pg.used_fallback = !extract_final(trajectory, no_fallback).has_value();
    }
    pg.mentions = extract_trajectory(trajectory);
    return pg;
}

}  // namespace posaudit
