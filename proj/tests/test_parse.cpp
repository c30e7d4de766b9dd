#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "posaudit/parse.hpp"

using namespace posaudit;

namespace {

nlohmann::json load_fixtures() {
    std::ifstream in(std::string(POSAUDIT_FIXTURE_DIR) + "/extraction_fixtures.json");
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    REQUIRE(j.at("schema_version").get<int>() == 1);
    return j;
}

}  // namespace

TEST_CASE("final-answer fixtures match gold labels") {
    auto fixtures = load_fixtures();
    const auto& cases = fixtures.at("final_cases");
    REQUIRE(cases.size() >= 15);
    for (const auto& c : cases) {
        INFO(c.at("name").get<std::string>());
        auto got = extract_final(c.at("text").get<std::string>());
        if (c.at("gold").is_null()) {
            CHECK_FALSE(got.has_value());
        } else {
            REQUIRE(got.has_value());
            CHECK(*got == c.at("gold").get<std::string>().at(0));
        }
    }
}

TEST_CASE("trajectory fixtures match gold letter sequences") {
    auto fixtures = load_fixtures();
    const auto& cases = fixtures.at("trajectory_cases");
    REQUIRE(cases.size() >= 12);
    for (const auto& c : cases) {
        INFO(c.at("name").get<std::string>());
        auto mentions = extract_trajectory(c.at("text").get<std::string>());
        std::vector<std::string> letters;
        for (const auto& m : mentions) letters.emplace_back(1, m.letter);
        CHECK(letters == c.at("letters").get<std::vector<std::string>>());
        if (c.contains("char_positions")) {
            auto want = c.at("char_positions").get<std::vector<std::size_t>>();
            REQUIRE(mentions.size() == want.size());
            for (std::size_t i = 0; i < want.size(); ++i) CHECK(mentions[i].char_pos == want[i]);
        }
        if (c.contains("total_chars")) {
            double total = c.at("total_chars").get<double>();
            for (const auto& m : mentions)
                CHECK(m.norm_pos == Catch::Approx(m.char_pos / total).margin(1e-12));
        }
    }
}

TEST_CASE("think-split fixtures") {
    auto fixtures = load_fixtures();
    for (const auto& c : fixtures.at("think_cases")) {
        INFO(c.at("name").get<std::string>());
        auto split = split_think(c.at("text").get<std::string>());
        CHECK(split.thinking == c.at("thinking").get<std::string>());
        CHECK(split.response == c.at("response").get<std::string>());
        CHECK(split.unclosed == c.at("unclosed").get<bool>());
    }
}

TEST_CASE("mention list is strictly increasing with norm_pos in [0,1]") {
    auto fixtures = load_fixtures();
    for (const auto& c : fixtures.at("trajectory_cases")) {
        auto mentions = extract_trajectory(c.at("text").get<std::string>());
        for (std::size_t i = 0; i < mentions.size(); ++i) {
            CHECK(mentions[i].norm_pos >= 0.0);
            CHECK(mentions[i].norm_pos <= 1.0);
            if (i > 0) CHECK(mentions[i].char_pos > mentions[i - 1].char_pos);
        }
    }
}

TEST_CASE("extract_trajectory on empty text") { CHECK(extract_trajectory("").empty()); }

TEST_CASE("letter-frequency fallback is opt-in") {
    // no final pattern fires here, but standalone letters appear in the tail
    std::string text = "Between B and C, leaning B overall, hard to say.";
    CHECK_FALSE(extract_final(text).has_value());
    ParseOptions with_fallback;
    with_fallback.letter_frequency_fallback = true;
    auto got = extract_final(text, with_fallback);
    REQUIRE(got.has_value());
    CHECK(*got == 'B');  // B appears twice, C once
}

TEST_CASE("fallback window is the trailing 200 characters") {
    // the only letters sit before the final 200 characters, so even the
    // fallback finds nothing
    std::string text = "B B B ";
    text += std::string(300, 'x');
    text += " nothing decisive here";
    ParseOptions with_fallback;
    with_fallback.letter_frequency_fallback = true;
    CHECK_FALSE(extract_final(text, with_fallback).has_value());
}

TEST_CASE("parse_generation composes split, final, and mentions") {
    BackendOutput out;
    out.text = "<think>Option B looks wrong. I'd choose C.</think>\nThe answer is (C).";
    auto pg = parse_generation(out);
    REQUIRE(pg.final_answer.has_value());
    CHECK(*pg.final_answer == 'C');
    CHECK(pg.thinking_text == "Option B looks wrong. I'd choose C.");
    REQUIRE(pg.mentions.size() == 3);
    CHECK(pg.mentions[0].letter == 'B');
    CHECK(pg.mentions[1].letter == 'C');
    CHECK(pg.mentions[2].letter == 'C');
    CHECK(pg.total_chars == utf8::length(pg.thinking_text + pg.response_text));
    CHECK_FALSE(pg.unclosed_think);
    CHECK_FALSE(pg.used_fallback);
}

TEST_CASE("parse_generation with a separate reasoning field skips the tag regex") {
    BackendOutput out;
    out.reasoning_text = "Option B looks wrong. <think>not a tag split</think> ";
    out.text = "The answer is (B).";
    auto pg = parse_generation(out);
    // the reasoning field is the thinking verbatim; no tag stripping applies
    CHECK(pg.thinking_text == *out.reasoning_text);
    CHECK(pg.response_text == out.text);
    REQUIRE(pg.final_answer.has_value());
    CHECK(*pg.final_answer == 'B');
    // mention offsets are computed over reasoning + content concatenated
    CHECK(pg.total_chars == utf8::length(*out.reasoning_text + out.text));
    REQUIRE_FALSE(pg.mentions.empty());
    CHECK(pg.mentions.front().char_pos < utf8::length(*out.reasoning_text));
}

TEST_CASE("parse_generation flags unextracted and fallback-extracted records") {
    BackendOutput empty;
    empty.text = "";
    CHECK_FALSE(parse_generation(empty).final_answer.has_value());

    BackendOutput vague;
    vague.text = "Between B and C, leaning B overall, hard to say.";
    ParseOptions with_fallback;
    with_fallback.letter_frequency_fallback = true;
    auto pg = parse_generation(vague, with_fallback);
    REQUIRE(pg.final_answer.has_value());
    CHECK(pg.used_fallback);

    BackendOutput crisp;
    crisp.text = "The answer is (A).";
    CHECK_FALSE(parse_generation(crisp, with_fallback).used_fallback);
}

TEST_CASE("extraction is deterministic") {
    std::string text = "Option B looks wrong. I'd choose C. The answer is (C)";
    auto a = extract_trajectory(text);
    auto b = extract_trajectory(text);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].letter == b[i].letter);
        CHECK(a[i].char_pos == b[i].char_pos);
        CHECK(a[i].norm_pos == b[i].norm_pos);
    }
}
