#pragma once

#include <vector>

#include "ast.hpp"
#include "diag.hpp"
#include "token.hpp"

namespace psl {

// Parses a token list (from tokenize) into a compilation unit.
// Recovery is one resync point per statement/declaration.
NodePtr parse_unit(const std::vector<Token>& tokens, DiagSink& diags,
                   const std::string& filename = {});

// Parses a single expression (used by the REPL and unit tests).
NodePtr parse_expression(const std::vector<Token>& tokens, DiagSink& diags,
                         const std::string& filename = {});

// Parses a single statement or declaration (REPL input lines).
NodePtr parse_statement(const std::vector<Token>& tokens, DiagSink& diags,
                        const std::string& filename = {});

}  // namespace psl
