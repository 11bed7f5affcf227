#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "credlab/builtin_worlds.hpp"
#include "credlab/world_io.hpp"

using namespace credlab;

namespace {

std::string temp_path(const std::string& stem) {
    return std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp") + "/" + stem;
}

}  // namespace

TEST_CASE("world save and load round-trips every field exactly") {
    for (const std::string name : {"w-ind", "w-last", "w-verify", "w-shortcut", "w-rand-3"}) {
        const auto w = make_builtin(name);
        const auto path = temp_path("roundtrip-" + name + ".json");
        save_world(w, path);
        const auto r = load_world(path);
        REQUIRE(r.name == w.name);
        REQUIRE(r.num_inputs == w.num_inputs);
        REQUIRE(r.vocab_size == w.vocab_size);
        REQUIRE(r.horizon == w.horizon);
        REQUIRE(r.num_feedback == w.num_feedback);
        REQUIRE(r.input_prior == w.input_prior);
        REQUIRE(r.policy_table == w.policy_table);
        REQUIRE(r.feedback_channel == w.feedback_channel);
        REQUIRE(r.outcome_map == w.outcome_map);
        REQUIRE(r.binary_verifier == w.binary_verifier);
        REQUIRE(r.success_feedback == w.success_feedback);
        REQUIRE(world_hash(r) == world_hash(w));
        std::remove(path.c_str());
    }
}

TEST_CASE("serialized form is canonical and newline-terminated") {
    const auto w = make_w_verify();
    const auto s1 = world_to_string(w);
    const auto s2 = world_to_string(make_w_verify());
    REQUIRE(s1 == s2);
    REQUIRE_FALSE(s1.empty());
    REQUIRE(s1.back() == '\n');
    // Keys are emitted sorted, so the format tag appears before the name.
    REQUIRE(s1.find("\"format\"") < s1.find("\"name\""));
}

TEST_CASE("world hash separates different worlds") {
    REQUIRE(world_hash(make_w_ind()) != world_hash(make_w_verify()));
    REQUIRE(world_hash(make_w_rand(1)) != world_hash(make_w_rand(2)));
}

TEST_CASE("unknown keys are rejected") {
    auto j = world_to_json(make_w_ind());
    j["extra"] = 1;
    REQUIRE_THROWS_AS(world_from_json(j), ParseError);
}

TEST_CASE("missing required keys are rejected") {
    for (const std::string key :
         {"format", "name", "num_inputs", "input_prior", "policy_table", "feedback_channel"}) {
        auto j = world_to_json(make_w_ind());
        j.erase(key);
        CAPTURE(key);
        REQUIRE_THROWS_AS(world_from_json(j), ParseError);
    }
}

TEST_CASE("wrong format tag is rejected") {
    auto j = world_to_json(make_w_ind());
    j["format"] = "credlab-world-v999";
    REQUIRE_THROWS_AS(world_from_json(j), ParseError);
}

TEST_CASE("type mismatches are rejected") {
    auto j = world_to_json(make_w_ind());
    j["num_inputs"] = "two";
    REQUIRE_THROWS_AS(world_from_json(j), ParseError);
}

TEST_CASE("malformed JSON file is rejected with a parse error") {
    const auto path = temp_path("broken-world.json");
    {
        std::ofstream f(path, std::ios::binary);
        f << "{ not json";
    }
    REQUIRE_THROWS_AS(load_world(path), ParseError);
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(load_world(temp_path("no-such-file.json")), Error);
}

TEST_CASE("loading keeps invalid tables for the validator to report") {
    // load_world checks shape, not stochasticity: a corrupted row should load
    // and then fail validate_world, so a validator can list all violations.
    auto w = make_w_verify();
    w.policy_table[0] += 0.5;
    const auto path = temp_path("invalid-world.json");
    save_world(w, path);
    const auto r = load_world(path);
    REQUIRE_FALSE(validate_world(r).empty());
    std::remove(path.c_str());
}

TEST_CASE("outcome map is omitted when absent and preserved when present") {
    const auto ind = make_w_ind();
    REQUIRE_FALSE(world_to_json(ind).contains("outcome_map"));
    const auto ver = make_w_verify();
    const auto j = world_to_json(ver);
    REQUIRE(j.contains("outcome_map"));
    REQUIRE(world_from_json(j).outcome_map == ver.outcome_map);
}
