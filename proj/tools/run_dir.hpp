#pragma once

#include "presets.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace appp::cli {

using json = nlohmann::json;

/// Output directory of one command. Every file written through it is hashed into manifest.json,
/// next to the resolved config and the fingerprints of the inputs.
class RunDir {
public:
    RunDir(const std::string& dir, const std::string& command, Scale scale, std::uint64_t seed);

    std::string path(const std::string& name) const;
    void write(const std::string& name, const std::string& content);
    /// Hashes a file some other writer already put in the directory.
    void record(const std::string& name);

    json& config() { return manifest_["config"]; }
    json& inputs() { return manifest_["inputs"]; }
    json& results() { return manifest_["results"]; }

    /// Writes manifest.json. Status is "ok" unless told otherwise.
    void finish(const std::string& status = "ok");

private:
    std::string dir_;
    json manifest_;
};

std::string read_file(const std::string& path);
std::string bytes_hash(const std::string& bytes);
/// Full round-trip precision.
std::string num(double v);

} // namespace appp::cli
