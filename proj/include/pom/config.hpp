#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pom/train.hpp"

// Run configuration files: UTF-8 text, one `key = value` per line, `#` starts
// a comment. Unknown and repeated keys are errors.
namespace pom {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& message, const std::string& source = {});
    std::size_t line;  // 0 when not tied to a line
    std::string message;
};

struct AblationSettings {
    std::size_t budget = 12;  // degree · expand
    std::vector<std::size_t> degrees{1, 2, 3, 4, 6};
};

struct RunConfig {
    TrainConfig train;
    AblationSettings ablation;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Canonical text that parse_config reads back to the same values.
std::string to_config_text(const RunConfig& config);
std::string to_config_text(const TrainConfig& config);

}  // namespace pom
