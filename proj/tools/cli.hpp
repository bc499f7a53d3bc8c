#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace debye::cli {

// Exit codes.
enum Exit : int { kPass = 0, kFailure = 1, kResidual = 2, kConditioning = 3, kConfig = 4 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Effective configuration of one command: defaults, then the config file,
// then command-line flags. `file_text` is only used for line diagnostics.
nlohmann::json command_defaults(const std::string& command);
nlohmann::json merge_config(const std::string& command, const nlohmann::json& file_cfg, const nlohmann::json& flags,
                            const std::string& file_text = "");
// Parses a config file; throws ConfigError with the line of a syntax error.
nlohmann::json parse_config_text(const std::string& text, const std::string& origin);

// FNV-1a of the canonical (key-sorted) dump, 16 hex digits.
std::string config_hash(const nlohmann::json& cfg);

// Formats as %.15e.
std::string fmt(double v);

const std::vector<std::string>& command_names();

int run(int argc, const char* const* argv);

}  // namespace debye::cli
