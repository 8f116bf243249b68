#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gemlearn {

enum class ErrorKind {
    Syntax,
    Undeclared,
    Duplicate,
    Validation,
    UnknownMedium,
    SpaceExhausted,
    EmptyAlive,
    CorruptLog,
    ReplayDivergence,
    Io,
};

inline const char* to_string(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::Syntax: return "syntax";
        case ErrorKind::Undeclared: return "undeclared_identifier";
        case ErrorKind::Duplicate: return "duplicate_declaration";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::UnknownMedium: return "unknown_medium";
        case ErrorKind::SpaceExhausted: return "hypothesis_space_exhausted";
        case ErrorKind::EmptyAlive: return "empty_alive";
        case ErrorKind::CorruptLog: return "corrupt_log";
        case ErrorKind::ReplayDivergence: return "replay_divergence";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

/// Runtime errors (as opposed to bad input) map to CLI exit code 2.
inline bool is_runtime(ErrorKind k) noexcept {
    return k == ErrorKind::SpaceExhausted || k == ErrorKind::ReplayDivergence ||
           k == ErrorKind::EmptyAlive;
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message),
          kind_(kind),
          line_(line) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// 1-based source line, 0 when not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    ErrorKind kind_;
    std::size_t line_;
};

}  // namespace gemlearn
