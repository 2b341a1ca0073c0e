#pragma once

#include "ast.hpp"
#include "diag.hpp"

namespace psl {

// Rewrites sugar forms into plain call/loop form, in place of the input
// tree. The result contains no Index, Slice, Magnitude, ForEach or
// comparison Binary nodes; bracket aggregates survive only as the
// right operand of a membership test. Generated names start with `@`,
// which the lexer rejects in user code. Running the rewrite twice is a
// no-op the second time.
NodePtr desugar(NodePtr tree, DiagSink& diags);

// Counter behind generated names; reset only by tests that compare
// output text.
void reset_generated_names();

}  // namespace psl
