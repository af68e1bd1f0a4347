#pragma once

#include <stdexcept>
#include <string>

namespace vdrv {

// Error hierarchy. Usage/config problems exit 1 from the CLI, data/format
// problems exit 2; everything carries a message suitable for stderr.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

struct VocabError : std::runtime_error {
    explicit VocabError(const std::string& msg) : std::runtime_error("vocabulary error: " + msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error("input error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("configuration error: " + msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract violation: " + msg) {}
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, long line)
        : std::runtime_error("parse error at line " + std::to_string(line) + ": " + msg), line(line) {}
    long line;
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& field)
        : std::runtime_error("schema error: missing field '" + field + "'"), field(field) {}
    std::string field;
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error("training error: " + msg) {}
};

struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error("internal error: " + msg) {}
};

}  // namespace vdrv
