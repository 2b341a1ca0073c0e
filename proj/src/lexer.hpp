#pragma once

#include <string_view>
#include <vector>

#include "diag.hpp"
#include "token.hpp"

namespace psl {

// Tokenizes a whole source buffer. Comments ("//" to end of line) are
// dropped; line breaks are emitted as Newline tokens so the parser can
// treat them as statement separators.
std::vector<Token> tokenize(std::string_view source, DiagSink& diags,
                            const std::string& filename = {});

}  // namespace psl
