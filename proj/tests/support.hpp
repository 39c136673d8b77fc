#pragma once

#include "ecalab/error.hpp"

#include <optional>

// Kind of the ecalab::Error thrown by f, or nullopt if nothing was thrown.
template <typename F>
std::optional<ecalab::ErrorKind> thrown_kind(F&& f) {
    try {
        f();
    } catch (const ecalab::Error& e) {
        return e.kind();
    }
    return std::nullopt;
}
