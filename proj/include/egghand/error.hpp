#pragma once

#include <stdexcept>
#include <string>

namespace egghand {

enum class ErrorKind {
    Validation,
    Config,
    MissingFile,
    Io,
    BadMagic,
    BadVersion,
    DimensionMismatch,
    Truncated,
    Integrity,
    Unavailable,
    Numerical,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(ErrorKind::Validation, message);
}

}  // namespace egghand
