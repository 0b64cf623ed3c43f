#include "malimg/runlog.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>

#include "malimg/binary_ingest.hpp"
#include "malimg/errors.hpp"

namespace fs = std::filesystem;

namespace malimg {

std::string sha256_hex(std::span<const unsigned char> data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    std::string hex;
    hex.reserve(len * 2);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const fs::path& path) {
    const Bytes bytes = read_file_bytes(path);
    return sha256_hex(bytes);
}

std::map<std::string, std::string> hash_tree(const fs::path& dir, const std::vector<std::string>& exclude) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), dir).generic_string();
        if (std::find(exclude.begin(), exclude.end(), rel) != exclude.end()) continue;
        out[rel] = sha256_file(e.path());
    }
    return out;
}

nlohmann::ordered_json to_json(const RunLog& log) {
    nlohmann::ordered_json j;
    j["tool"] = "malimg";
    j["version"] = kVersion;
    j["command"] = log.command;
    j["argv"] = log.argv;
    j["config"] = log.config;
    j["inputs"] = log.inputs;
    j["artifacts"] = log.artifacts;
    j["exit_code"] = log.exit_code;
    j["warnings"] = log.warnings;
    return j;
}

RunLog run_log_from_json(const nlohmann::json& j) {
    try {
        RunLog log;
        log.command = j.at("command").get<std::string>();
        log.argv = j.at("argv").get<std::vector<std::string>>();
        log.config = j.value("config", nlohmann::ordered_json::object());
        log.inputs = j.value("inputs", std::map<std::string, std::string>{});
        log.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
        log.exit_code = j.value("exit_code", 0);
        log.warnings = j.value("warnings", std::vector<std::string>{});
        return log;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("run log: ") + e.what());
    }
}

void write_run_log(const fs::path& path, const RunLog& log) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(log).dump(2) << '\n';
}

RunLog read_run_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run log " + path.string());
    try {
        return run_log_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("run log: ") + e.what());
    }
}

}  // namespace malimg
