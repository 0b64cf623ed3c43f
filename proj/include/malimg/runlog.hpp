#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace malimg {

inline constexpr const char* kVersion = "0.1.0";

std::string sha256_hex(std::span<const unsigned char> data);
std::string sha256_file(const std::filesystem::path& path);

/// SHA-256 of every regular file under `dir`, keyed by generic relative
/// path. Files named in `exclude` (relative paths) are skipped.
std::map<std::string, std::string> hash_tree(const std::filesystem::path& dir,
                                             const std::vector<std::string>& exclude = {});

/// Run log written next to a command's outputs.
struct RunLog {
    std::string command;
    std::vector<std::string> argv;   // canonical arguments, replayable
    nlohmann::ordered_json config;   // resolved options, seeds included
    std::map<std::string, std::string> inputs;     // path -> sha256
    std::map<std::string, std::string> artifacts;  // path relative to out -> sha256
    int exit_code = 0;
    std::vector<std::string> warnings;
};

nlohmann::ordered_json to_json(const RunLog& log);
RunLog run_log_from_json(const nlohmann::json& j);
void write_run_log(const std::filesystem::path& path, const RunLog& log);
RunLog read_run_log(const std::filesystem::path& path);

}  // namespace malimg
