#pragma once

#include <stdexcept>
#include <string>

namespace ecalab {

enum class ErrorKind {
    invalid_state,
    invalid_input,
    window_too_large,
    state_space_too_large,
    format_error,
    empty_corpus,
    contract_error,
    numeric_failure,
    config_error,
    missing_prerequisite,
    undefined_correlation,
};

const char* to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::invalid_state: return "invalid-state";
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::window_too_large: return "window-too-large";
    case ErrorKind::state_space_too_large: return "state-space-too-large";
    case ErrorKind::format_error: return "format-error";
    case ErrorKind::empty_corpus: return "empty-corpus";
    case ErrorKind::contract_error: return "contract-error";
    case ErrorKind::numeric_failure: return "numeric-failure";
    case ErrorKind::config_error: return "config-error";
    case ErrorKind::missing_prerequisite: return "missing-prerequisite";
    case ErrorKind::undefined_correlation: return "undefined-correlation";
    }
    return "unknown";
}

}  // namespace ecalab
