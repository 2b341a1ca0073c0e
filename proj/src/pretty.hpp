#pragma once

#include <string>

#include "ast.hpp"

namespace psl {

// Deterministic canonical rendering; parse(pretty_print(t)) is
// structurally equal to t for every well-formed tree.
std::string pretty_print(const Node& node);

}  // namespace psl
