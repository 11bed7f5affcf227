// Run manifest: what was run, on what input, with which effective settings.
// elapsed_seconds is wall-clock and therefore the one field excluded from the
// byte-reproducibility contract; every data file a run produces is covered.
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "credlab/common.hpp"

namespace credlab {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct Manifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();  // effective, post-override
    std::string world_name;
    std::string world_hash;  // hex fnv-1a over the canonical world file
    std::uint64_t seed = 0;
    double elapsed_seconds = 0.0;
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json j;
    j["command"] = m.command;
    j["config"] = m.config;
    j["world_name"] = m.world_name;
    j["world_hash"] = m.world_hash;
    j["seed"] = m.seed;
    j["elapsed_seconds"] = m.elapsed_seconds;
    j["version"] = kLibraryVersion;
    return j;
}

inline void write_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << manifest_to_json(m).dump(2) << '\n';
}

}  // namespace credlab
