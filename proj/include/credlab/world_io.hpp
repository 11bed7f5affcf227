// World file format (JSON).
//
// Layout "credlab-world-v1": scalar dimensions plus flat row-major tables.
//   policy_table[(x * S + prefix_index) * V + v]     S = 1 + V + ... + V^(T-1)
//   feedback_channel[(x * V^T + y_code) * Z + z]     y_code = base-V digits of y
//   outcome_map[x * V^T + y_code]                    optional, 0/1
// prefix_index = offsets[len] + base-V code of the prefix, offsets as in
// PrefixIndexer. Doubles are written in shortest round-trip form, so
// save/load is value-exact.
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "credlab/common.hpp"
#include "credlab/world.hpp"

namespace credlab {

inline nlohmann::json world_to_json(const WorldSpec& w) {
    nlohmann::json j;
    j["format"] = "credlab-world-v1";
    j["name"] = w.name;
    j["num_inputs"] = w.num_inputs;
    j["vocab_size"] = w.vocab_size;
    j["horizon"] = w.horizon;
    j["num_feedback"] = w.num_feedback;
    j["input_prior"] = w.input_prior;
    j["policy_table"] = w.policy_table;
    j["feedback_channel"] = w.feedback_channel;
    if (!w.outcome_map.empty()) j["outcome_map"] = w.outcome_map;
    j["binary_verifier"] = w.binary_verifier;
    j["success_feedback"] = w.success_feedback;
    j["enum_cap"] = w.enum_cap;
    return j;
}

inline WorldSpec world_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("world file: top level must be an object");
    static const char* known[] = {"format",       "name",           "num_inputs",
                                  "vocab_size",   "horizon",        "num_feedback",
                                  "input_prior",  "policy_table",   "feedback_channel",
                                  "outcome_map",  "binary_verifier", "success_feedback",
                                  "enum_cap"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ParseError("world file: unknown key '" + it.key() + "'");
    }
    try {
        if (j.at("format").get<std::string>() != "credlab-world-v1")
            throw ParseError("world file: unsupported format tag");
        WorldSpec w;
        w.name = j.at("name").get<std::string>();
        w.num_inputs = j.at("num_inputs").get<int>();
        w.vocab_size = j.at("vocab_size").get<int>();
        w.horizon = j.at("horizon").get<int>();
        w.num_feedback = j.at("num_feedback").get<int>();
        w.input_prior = j.at("input_prior").get<std::vector<double>>();
        w.policy_table = j.at("policy_table").get<std::vector<double>>();
        w.feedback_channel = j.at("feedback_channel").get<std::vector<double>>();
        if (j.contains("outcome_map")) w.outcome_map = j.at("outcome_map").get<std::vector<int>>();
        if (j.contains("binary_verifier")) w.binary_verifier = j.at("binary_verifier").get<bool>();
        if (j.contains("success_feedback")) w.success_feedback = j.at("success_feedback").get<int>();
        if (j.contains("enum_cap")) w.enum_cap = j.at("enum_cap").get<std::uint64_t>();
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("world file: ") + e.what());
    }
}

inline std::string world_to_string(const WorldSpec& w) { return world_to_json(w).dump(2) + "\n"; }

inline void save_world(const WorldSpec& w, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << world_to_string(w);
}

// Parses and shape-checks; full invariant validation is the caller's choice
// (validate_world), so a validator can report every violation at once.
inline WorldSpec load_world(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("world file '" + path + "': " + e.what());
    }
    return world_from_json(j);
}

// Content hash over the canonical serialized form.
inline std::uint64_t world_hash(const WorldSpec& w) { return fnv1a64(world_to_string(w)); }

}  // namespace credlab
