#include "gtee/manifest.hpp"

#include "gtee/error.hpp"
#include "gtee/io.hpp"

#ifndef GTEE_VERSION
#define GTEE_VERSION "unknown"
#endif

namespace gtee {

using json = nlohmann::ordered_json;

json RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["version"] = version;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["wall_seconds"] = wall_seconds;
    return j;
}

RunManifest RunManifest::from_json(const json& j) {
    try {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.version = j.at("version").get<std::string>();
        m.inputs = j.at("inputs").get<std::vector<std::string>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        m.wall_seconds = j.at("wall_seconds").get<double>();
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("run manifest: ") + e.what());
    }
}

std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
    if (std::filesystem::is_directory(artifact)) return artifact / "run_manifest.json";
    return std::filesystem::path(artifact.string() + ".manifest.json");
}

void write_manifest(const std::filesystem::path& artifact, const RunManifest& manifest) {
    write_text_atomic(manifest_path(artifact), manifest.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& artifact) {
    const auto path = manifest_path(artifact);
    try {
        return RunManifest::from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string version_string() { return GTEE_VERSION; }

}  // namespace gtee
