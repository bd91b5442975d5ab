#pragma once

#include <string_view>

namespace eoslab {

enum class Verdict { converged, diverged, stalled };

[[nodiscard]] constexpr std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::converged: return "converged";
        case Verdict::diverged: return "diverged";
        case Verdict::stalled: return "stalled";
    }
    return "unknown";
}

}  // namespace eoslab
