#include "run_dir.hpp"

#include "appp/errors.hpp"
#include "appp/hash.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace appp::cli {

RunDir::RunDir(const std::string& dir, const std::string& command, Scale scale, std::uint64_t seed) : dir_(dir) {
    std::error_code ec;
    if (!fs::exists(dir_, ec)) {
        fs::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir_ + "': " + ec.message());
        std::clog << "created " << dir_ << "\n";
    } else if (!fs::is_directory(dir_, ec)) {
        throw ConfigError("output path '" + dir_ + "' is not a directory");
    }
    manifest_["command"] = command;
    manifest_["scale"] = to_string(scale);
    manifest_["seed"] = seed;
    manifest_["config"] = json::object();
    manifest_["inputs"] = json::object();
    manifest_["outputs"] = json::object();
    manifest_["results"] = json::object();
}

std::string RunDir::path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

void RunDir::write(const std::string& name, const std::string& content) {
    const std::string p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + p + "'");
    out << content;
    out.close();
    if (!out) throw ConfigError("write to '" + p + "' failed");
    manifest_["outputs"][name] = bytes_hash(content);
}

void RunDir::record(const std::string& name) { manifest_["outputs"][name] = bytes_hash(read_file(path(name))); }

void RunDir::finish(const std::string& status) {
    manifest_["status"] = status;
    const std::string p = path("manifest.json");
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + p + "'");
    out << manifest_.dump(2) << "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string bytes_hash(const std::string& bytes) { return Hasher().bytes(bytes.data(), bytes.size()).hex(); }

std::string num(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

} // namespace appp::cli
