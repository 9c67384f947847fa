#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tfim::cli {

inline constexpr const char* kOutputDirEnv = "TFIM_OUTPUT_DIR";
inline constexpr const char* kCacheDirEnv = "TFIM_CACHE_DIR";

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Sectioned key = value configuration. Values are kept as written, so the
// config round-trips losslessly through INI and JSON; typed access and
// validation happen when a command reads it.
struct RunConfig {
    std::string command;
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section, const std::string& key) const;
    const std::string* find(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, std::string value);
};

// Parses an INI file ([section] then key = value lines, '#' or ';' comments).
// A path ending in .json is read as a run manifest and its config echo is
// replayed. Relative input paths are resolved against the file's directory.
// Throws ConfigError with the line number for syntax errors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_ini(const std::string& text, const std::filesystem::path& base_dir = {});

// "section.key=value".
void apply_override(RunConfig& config, std::string_view assignment);
// TFIM_OUTPUT_DIR / TFIM_CACHE_DIR replace run.output_dir / run.cache_dir.
void apply_environment(RunConfig& config);

std::string to_ini(const RunConfig& config);
nlohmann::json to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);

// Checks keys and values for the config's command; throws ConfigError naming
// the first bad field.
void validate(const RunConfig& config);

struct CommandOutcome {
    int exit_code = kExitOk;
    std::vector<std::filesystem::path> files;
    std::filesystem::path manifest;
    std::string message;
};

// Runs config.command (equilibrium, tf-curve, critical-line, phase-diagram,
// fss, dynamics) and writes its data files plus manifest.json into
// run.output_dir. ConfigError propagates; other failures are returned with
// exit code 1.
CommandOutcome run_command(const RunConfig& config, std::ostream& log);

// list | verify | purge on run.cache_dir. verify returns 1 when any entry fails.
int cache_command(const std::string& action, const RunConfig& config, std::ostream& out);

// Commands known to run_command.
const std::vector<std::string>& commands();

} // namespace tfim::cli
