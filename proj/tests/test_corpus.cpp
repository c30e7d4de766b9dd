#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "posaudit/mcq.hpp"

using namespace posaudit;

namespace {

McqItem sample_item() {
    McqItem item;
    item.id = "q1";
    item.question = "Which statement holds?";
    item.options = {"w", "x", "y", "z"};
    item.correct_index = 2;
    item.subject = "logic";
    return item;
}

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("permute produces cyclic rotations") {
    auto item = sample_item();
    auto variants = permute(item);

    // shift 0 is the identity
    CHECK(variants[0].presented_options == item.options);
    CHECK(variants[0].correct_position == 2);
    CHECK(variants[0].shift == 0);

    // shift 1: presented position j holds original (j - 1) mod 4
    CHECK(variants[1].presented_options == std::array<std::string, 4>{"z", "w", "x", "y"});
    CHECK(variants[1].correct_position == 3);

    CHECK(variants[2].correct_position == 0);
    CHECK(variants[3].correct_position == 1);

    // every variant is a permutation of the original option multiset
    std::multiset<std::string> original(item.options.begin(), item.options.end());
    for (const auto& v : variants) {
        std::multiset<std::string> presented(v.presented_options.begin(),
                                             v.presented_options.end());
        CHECK(presented == original);
        CHECK(v.item_id == "q1");
        // the correct option text sits at correct_position
        CHECK(v.presented_options[v.correct_position] == item.options[item.correct_index]);
    }
}

TEST_CASE("map_to_original inverts the rotation") {
    CHECK(map_to_original(0, 0) == 0);
    CHECK(map_to_original(3, 1) == 2);
    // exhaustive round trip: presenting original k under shift s puts it at (k+s)%4
    for (int s = 0; s < 4; ++s)
        for (int k = 0; k < 4; ++k) CHECK(map_to_original((k + s) % 4, s) == k);
    CHECK_THROWS_AS(map_to_original(4, 0), std::out_of_range);
    CHECK_THROWS_AS(map_to_original(-1, 0), std::out_of_range);
}

TEST_CASE("format_options renders lettered lines") {
    CHECK(format_options({"w", "x", "y", "z"}) == "A. w\nB. x\nC. y\nD. z");
}

TEST_CASE("render_prompt per mode") {
    auto item = sample_item();
    auto variants = permute(item);

    auto direct = render_prompt(item, variants[0], Mode::direct);
    CHECK(direct.system_text.find("Do NOT explain your reasoning.") != std::string::npos);
    CHECK(direct.system_text.find("Do NOT show any work.") != std::string::npos);
    CHECK(direct.user_text.find("A. w") != std::string::npos);
    CHECK(direct.user_text.find(prompts::kStepSuffix) == std::string::npos);

    auto cot = render_prompt(item, variants[0], Mode::cot);
    CHECK(cot.system_text.find("Keep your reasoning concise.") != std::string::npos);
    CHECK(cot.user_text.find(prompts::kStepSuffix) != std::string::npos);

    auto reason = render_prompt(item, variants[0], Mode::reason);
    CHECK(reason.system_text.find("Keep your reasoning concise") == std::string::npos);
    CHECK(reason.system_text.find("Think step by step") != std::string::npos);
    CHECK(reason.user_text.find(prompts::kStepSuffix) != std::string::npos);

    // determinism: identical inputs give identical bytes
    auto again = render_prompt(item, variants[0], Mode::reason);
    CHECK(again.system_text == reason.system_text);
    CHECK(again.user_text == reason.user_text);

    // permuted option order shows up in the user text
    auto shifted = render_prompt(item, variants[1], Mode::direct);
    CHECK(shifted.user_text.find("A. z\nB. w\nC. x\nD. y") != std::string::npos);
}

TEST_CASE("mode string round trip") {
    for (Mode m : {Mode::direct, Mode::cot, Mode::reason}) CHECK(mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(mode_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("load_dataset_json happy path and filtering") {
    auto path = write_temp("posaudit_ds.json", R"([
      {"id": "a", "question": "Q1?", "options": ["1", "2", "3", "4"], "answer": "B", "subject": "s"},
      {"id": "b", "question": "Q2?", "options": ["1", "2", "3", "4", "5"], "answer": 0},
      {"id": "c", "question": "Q3?", "options": ["1", "2", "3", "4"], "answer": 3}
    ])");
    auto res = load_dataset_json(path.string());
    REQUIRE(res.items.size() == 2);
    CHECK(res.filtered_count == 1);
    CHECK(res.row_errors.empty());
    CHECK(res.items[0].id == "a");
    CHECK(res.items[0].correct_index == 1);  // letter key normalized to index
    CHECK(res.items[0].subject == "s");
    CHECK(res.items[1].correct_index == 3);  // integer key passes through
}

TEST_CASE("load_dataset_json malformed rows become row errors") {
    auto path = write_temp("posaudit_ds_bad.json", R"([
      {"id": "ok", "question": "Q?", "options": ["1", "2", "3", "4"], "answer": "a"},
      {"question": "missing answer", "options": ["1", "2", "3", "4"]},
      {"id": "badkey", "question": "Q?", "options": ["1", "2", "3", "4"], "answer": "Z9"},
      "not an object"
    ])");
    auto res = load_dataset_json(path.string());
    CHECK(res.items.size() == 1);
    CHECK(res.items[0].correct_index == 0);  // lowercase letter accepted
    CHECK(res.row_errors.size() == 3);
}

TEST_CASE("load_dataset_json duplicate ids are dropped with an error") {
    auto path = write_temp("posaudit_ds_dup.json", R"([
      {"id": "a", "question": "Q1?", "options": ["1", "2", "3", "4"], "answer": 0},
      {"id": "a", "question": "Q2?", "options": ["5", "6", "7", "8"], "answer": 1}
    ])");
    auto res = load_dataset_json(path.string());
    REQUIRE(res.items.size() == 1);
    CHECK(res.items[0].question == "Q1?");
    REQUIRE(res.row_errors.size() == 1);
    CHECK(res.row_errors[0].find("duplicate id") != std::string::npos);
}

TEST_CASE("load_dataset_json errors") {
    CHECK_THROWS_AS(load_dataset_json("/nonexistent/path.json"), std::runtime_error);
    auto not_array = write_temp("posaudit_ds_obj.json", R"({"id": "a"})");
    CHECK_THROWS_AS(load_dataset_json(not_array.string()), std::runtime_error);
    auto empty = write_temp("posaudit_ds_empty.json", "[]");
    auto res = load_dataset_json(empty.string());
    CHECK(res.items.empty());
    CHECK(res.filtered_count == 0);
}

TEST_CASE("load_dataset_csv equivalent content") {
    auto path = write_temp("posaudit_ds.csv",
                           "id,question,option_a,option_b,option_c,option_d,answer,subject\n"
                           "a,\"Q1, with a comma?\",1,2,3,4,B,s\n"
                           "b,Q2?,1,2,3,,0,\n"
                           "c,\"Q3 with \"\"quotes\"\"\",1,2,3,4,3,t\n");
    auto res = load_dataset_csv(path.string());
    REQUIRE(res.items.size() == 2);
    CHECK(res.filtered_count == 1);  // row b has only 3 non-empty options
    CHECK(res.items[0].question == "Q1, with a comma?");
    CHECK(res.items[0].correct_index == 1);
    CHECK(res.items[1].question == "Q3 with \"quotes\"");
    CHECK(res.items[1].correct_index == 3);
    CHECK(res.items[1].subject == "t");
}

TEST_CASE("load_dataset_csv header validation") {
    auto path = write_temp("posaudit_ds_nohdr.csv", "foo,bar\n1,2\n");
    CHECK_THROWS_AS(load_dataset_csv(path.string()), std::runtime_error);
}

TEST_CASE("load_dataset dispatches on format") {
    auto path = write_temp("posaudit_ds2.json",
                           R"([{"id": "a", "question": "Q?", "options": ["1","2","3","4"], "answer": 0}])");
    CHECK(load_dataset(path.string(), "json").items.size() == 1);
    CHECK_THROWS_AS(load_dataset(path.string(), "xml"), std::invalid_argument);
}
