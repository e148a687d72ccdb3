#pragma once

#include <stdexcept>
#include <string>

namespace vsr {

// All library failures derive from Error. category() is a stable,
// machine-parsable token used by the CLI ("error: <category>: <message>").
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const { return category_; }

private:
    std::string category_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error("data", message) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

class TapeError : public Error {
public:
    explicit TapeError(const std::string& message) : Error("tape", message) {}
};

}  // namespace vsr
