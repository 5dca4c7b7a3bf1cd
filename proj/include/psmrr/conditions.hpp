#pragma once

// Experimental condition labels shared by the trial generator and the
// evaluation tables.

#include <stdexcept>
#include <string>
#include <string_view>

namespace psmrr {

enum class Position { supine, prone };
enum class Pattern { normal, grunting };
enum class Mattress { warmer, crib };
enum class Condition { position, pattern, mattress };

inline std::string_view to_string(Position p) { return p == Position::supine ? "supine" : "prone"; }
inline std::string_view to_string(Pattern p) { return p == Pattern::normal ? "normal" : "grunting"; }
inline std::string_view to_string(Mattress m) { return m == Mattress::warmer ? "warmer" : "crib"; }
inline std::string_view to_string(Condition c) {
    switch (c) {
        case Condition::position: return "position";
        case Condition::pattern: return "pattern";
        case Condition::mattress: return "mattress";
    }
    return "unknown";
}

inline Position parse_position(std::string_view s) {
    if (s == "supine") return Position::supine;
    if (s == "prone") return Position::prone;
    throw std::invalid_argument("unknown position: " + std::string(s));
}

inline Pattern parse_pattern(std::string_view s) {
    if (s == "normal") return Pattern::normal;
    if (s == "grunting") return Pattern::grunting;
    throw std::invalid_argument("unknown pattern: " + std::string(s));
}

inline Mattress parse_mattress(std::string_view s) {
    if (s == "warmer") return Mattress::warmer;
    if (s == "crib") return Mattress::crib;
    throw std::invalid_argument("unknown mattress: " + std::string(s));
}

}  // namespace psmrr
