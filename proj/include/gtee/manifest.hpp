#pragma once

// Provenance record written next to every artifact the command-line tool makes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace gtee {

struct RunManifest {
    std::string command;
    nlohmann::ordered_json config;
    std::uint64_t seed = 0;
    std::string version;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_seconds = 0.0;

    nlohmann::ordered_json to_json() const;
    static RunManifest from_json(const nlohmann::ordered_json& j);
};

// "<dir>/run_manifest.json" for a directory artifact, "<file>.manifest.json" otherwise.
std::filesystem::path manifest_path(const std::filesystem::path& artifact);
void write_manifest(const std::filesystem::path& artifact, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& artifact);

// git-describe output captured at configure time, or "unknown".
std::string version_string();

}  // namespace gtee
