#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace posaudit {

enum class Mode { direct, cot, reason };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::direct: return "direct";
        case Mode::cot: return "cot";
        case Mode::reason: return "reason";
    }
    throw std::logic_error("bad Mode");
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "direct") return Mode::direct;
    if (s == "cot") return Mode::cot;
    if (s == "reason") return Mode::reason;
    throw std::invalid_argument("unknown mode: " + s);
}

// One 4-option question; correct_index is in original option order.
struct McqItem {
    std::string id;
    std::string question;
    std::array<std::string, 4> options;
    int correct_index = 0;
    std::string subject;
};

// Cyclic rotation of an item: presented position j holds original option (j - shift) mod 4.
struct PermutedVariant {
    std::string item_id;
    int shift = 0;
    std::array<std::string, 4> presented_options;
    int correct_position = 0;
};

struct PromptBundle {
    Mode mode = Mode::direct;
    std::string system_text;
    std::string user_text;
};

inline std::array<PermutedVariant, 4> permute(const McqItem& item) {
    std::array<PermutedVariant, 4> variants;
    for (int s = 0; s < 4; ++s) {
        PermutedVariant v;
        v.item_id = item.id;
        v.shift = s;
        for (int j = 0; j < 4; ++j) v.presented_options[j] = item.options[((j - s) % 4 + 4) % 4];
        v.correct_position = (item.correct_index + s) % 4;
        variants[s] = v;
    }
    return variants;
}

// Inverse of permute on option indices.
inline int map_to_original(int selected_position, int shift) {
    if (selected_position < 0 || selected_position > 3) throw std::out_of_range("selected_position");
    return ((selected_position - shift) % 4 + 4) % 4;
}

inline std::string format_options(const std::array<std::string, 4>& opts) {
    static constexpr char letters[4] = {'A', 'B', 'C', 'D'};
    std::string out;
    for (int i = 0; i < 4; ++i) {
        out += letters[i];
        out += ". ";
        out += opts[i];
        if (i != 3) out += '\n';
    }
    return out;
}

namespace prompts {

inline constexpr const char* kDirectSystem =
    "You are a helpful assistant. Answer the multiple-choice question with ONLY the letter "
    "of the correct answer in this exact format:\n"
    "The answer is (X).\n"
    "Do NOT explain your reasoning. Do NOT show any work.";

inline constexpr const char* kCotSystem =
    "You are a helpful assistant that solves multiple-choice questions. "
    "Think step by step before giving your final answer. "
    "Keep your reasoning concise. "
    "After your reasoning, clearly state your final answer as:\n"
    "The answer is (X).";

inline constexpr const char* kReasonSystem =
    "You are a helpful assistant that solves multiple-choice questions. "
    "Think step by step before giving your final answer. "
    "After your reasoning, clearly state your final answer as:\n"
    "The answer is (X).";

inline constexpr const char* kStepSuffix = "Think step by step, then give your final answer.";

}  // namespace prompts

inline PromptBundle render_prompt(const PermutedVariant& variant, const std::string& question,
                                  Mode mode) {
    PromptBundle p;
    p.mode = mode;
    std::string opts = format_options(variant.presented_options);
    switch (mode) {
        case Mode::direct:
            p.system_text = prompts::kDirectSystem;
            p.user_text = question + "\n\n" + opts;
            break;
        case Mode::cot:
            p.system_text = prompts::kCotSystem;
            p.user_text = question + "\n\n" + opts + "\n\n" + prompts::kStepSuffix;
            break;
        case Mode::reason:
            p.system_text = prompts::kReasonSystem;
            p.user_text = question + "\n\n" + opts + "\n\n" + prompts::kStepSuffix;
            break;
    }
    return p;
}

inline PromptBundle render_prompt(const McqItem& item, const PermutedVariant& variant, Mode mode) {
    return render_prompt(variant, item.question, mode);
}

struct DatasetLoadResult {
    std::vector<McqItem> items;
    int filtered_count = 0;  // rows dropped for having != 4 options
    std::vector<std::string> row_errors;
};

namespace detail {

inline std::optional<int> answer_to_index(const nlohmann::json& v, std::size_t n_options) {
    if (v.is_number_integer()) {
        int k = v.get<int>();
        return (k >= 0 && k < static_cast<int>(n_options)) ? std::optional<int>(k) : std::nullopt;
    }
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s.size() == 1) {
            char c = s[0];
            if (c >= 'A' && c <= 'Z') return c - 'A';
            if (c >= 'a' && c <= 'z') return c - 'a';
            if (c >= '0' && c <= '9') return c - '0';
        }
        try {
            return std::stoi(s);
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

// One CSV record, RFC-4180 quoting. Returns false at end of stream.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(field);
            field.clear();
        } else if (ch == '\n') {
            break;
        } else if (ch == '\r') {
            // swallow; \r\n handled when \n arrives
        } else {
            field += ch;
        }
    }
    if (!any) return false;
    fields.push_back(field);
    return true;
}

}  // namespace detail

// ids must be unique within a dataset; later duplicates become row errors.
inline void drop_duplicate_ids(DatasetLoadResult& res) {
    std::vector<McqItem> kept;
    std::set<std::string> seen;
    for (auto& item : res.items) {
        if (!seen.insert(item.id).second) {
            res.row_errors.push_back("duplicate id dropped: " + item.id);
            continue;
        }
        kept.push_back(std::move(item));
    }
    res.items = std::move(kept);
}

// JSON schema: array of {id, question, options: [...], answer, subject?}.
inline DatasetLoadResult load_dataset_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw std::runtime_error("dataset parse error in " + path + ": " + e.what());
    }
    if (!doc.is_array()) throw std::runtime_error("dataset root must be a JSON array: " + path);

    DatasetLoadResult res;
    int row = -1;
    for (const auto& obj : doc) {
        ++row;
        auto fail = [&](const std::string& msg) {
            res.row_errors.push_back("row " + std::to_string(row) + ": " + msg);
        };
        if (!obj.is_object()) {
            fail("not an object");
            continue;
        }
        if (!obj.contains("question") || !obj.contains("options") || !obj.contains("answer")) {
            fail("missing question/options/answer");
            continue;
        }
        const auto& opts = obj["options"];
        if (!opts.is_array() || opts.size() < 2) {
            fail("options must be an array of >= 2 strings");
            continue;
        }
        std::vector<std::string> texts;
        bool bad = false;
        for (const auto& o : opts) {
            if (!o.is_string() || o.get<std::string>().empty()) {
                bad = true;
                break;
            }
            texts.push_back(o.get<std::string>());
        }
        if (bad) {
            fail("option entries must be non-empty strings");
            continue;
        }
        auto idx = detail::answer_to_index(obj["answer"], texts.size());
        if (!idx) {
            fail("unparsable answer key");
            continue;
        }
        if (texts.size() != 4) {
            ++res.filtered_count;
            continue;
        }
        McqItem item;
        item.id = obj.contains("id") ? (obj["id"].is_string() ? obj["id"].get<std::string>()
                                                              : obj["id"].dump())
                                     : std::to_string(row);
        item.question = obj["question"].get<std::string>();
        for (int i = 0; i < 4; ++i) item.options[i] = texts[i];
        item.correct_index = *idx;
        if (obj.contains("subject") && obj["subject"].is_string())
            item.subject = obj["subject"].get<std::string>();
        res.items.push_back(std::move(item));
    }
    drop_duplicate_ids(res);
    return res;
}

// CSV schema: header with id, question, answer, optional subject, and option columns
// (any header starting with "option", taken left to right; empty cells skipped).
inline DatasetLoadResult load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);

    DatasetLoadResult res;
    std::vector<std::string> header;
    if (!detail::read_csv_record(in, header)) return res;

    int id_col = -1, q_col = -1, ans_col = -1, subj_col = -1;
    std::vector<int> opt_cols;
    for (int i = 0; i < static_cast<int>(header.size()); ++i) {
        const std::string& h = header[i];
        if (h == "id") id_col = i;
        else if (h == "question") q_col = i;
        else if (h == "answer") ans_col = i;
        else if (h == "subject") subj_col = i;
        else if (h.rfind("option", 0) == 0) opt_cols.push_back(i);
    }
    if (q_col < 0 || ans_col < 0 || opt_cols.empty())
        throw std::runtime_error("CSV header must name question, answer, and option columns: " + path);

    std::vector<std::string> fields;
    int row = 0;
    while (detail::read_csv_record(in, fields)) {
        ++row;
        if (fields.size() == 1 && fields[0].empty()) continue;
        auto fail = [&](const std::string& msg) {
            res.row_errors.push_back("row " + std::to_string(row) + ": " + msg);
        };
        auto cell = [&](int c) -> std::string {
            return (c >= 0 && c < static_cast<int>(fields.size())) ? fields[c] : std::string();
        };
        std::vector<std::string> texts;
        for (int c : opt_cols)
            if (!cell(c).empty()) texts.push_back(cell(c));
        if (cell(q_col).empty() || texts.size() < 2) {
            fail("missing question or < 2 options");
            continue;
        }
        auto idx = detail::answer_to_index(nlohmann::json(cell(ans_col)), texts.size());
        if (!idx) {
            fail("unparsable answer key");
            continue;
        }
        if (texts.size() != 4) {
            ++res.filtered_count;
            continue;
        }
        McqItem item;
        item.id = cell(id_col).empty() ? std::to_string(row) : cell(id_col);
        item.question = cell(q_col);
        for (int i = 0; i < 4; ++i) item.options[i] = texts[i];
        item.correct_index = *idx;
        item.subject = cell(subj_col);
        res.items.push_back(std::move(item));
    }
    drop_duplicate_ids(res);
    return res;
}

inline DatasetLoadResult load_dataset(const std::string& path, const std::string& format) {
    if (format == "json") return load_dataset_json(path);
    if (format == "csv") return load_dataset_csv(path);
    throw std::invalid_argument("unknown dataset format: " + format);
}

}  // namespace posaudit
