#pragma once

#include <cstdint>
#include <string>

namespace psl {

// Source location: 1-based line/column plus the length of the lexeme.
struct Span {
    uint32_t line = 0;
    uint32_t col = 0;
    uint32_t length = 0;

    bool operator==(const Span&) const = default;
};

inline std::string to_string(const Span& s) {
    return std::to_string(s.line) + ":" + std::to_string(s.col);
}

}  // namespace psl
