#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "span.hpp"

namespace psl {

// Parameter passing modes. Locked/queued modes are only legal on
// concurrent types; sema enforces that.
enum class ParamMode : uint8_t {
    ReadOnly,
    Var,
    Ref,
    RefVar,
    Locked,
    LockedVar,
    Queued,
    QueuedVar,
};

inline bool mode_is_updatable(ParamMode m) {
    return m == ParamMode::Var || m == ParamMode::RefVar || m == ParamMode::LockedVar ||
           m == ParamMode::QueuedVar;
}
inline bool mode_is_concurrent(ParamMode m) {
    return m == ParamMode::Locked || m == ParamMode::LockedVar || m == ParamMode::Queued ||
           m == ParamMode::QueuedVar;
}

enum class NodeKind : uint8_t {
    // structure
    Unit,
    InterfaceDecl,  // text=full path; c[0]=List formals, c[1]=List implements, rest decls
    ClassDecl,      // text=full path; c[0]=List internal decls, c[1]=List exported decls
    FormalType,     // text=name; c[0]=constraint TypeRef, c[1]=default TypeRef|null
    FormalValue,    // text=name; c[0]=TypeRef, c[1]=default expr|null
    TypeDecl,       // text=name; c[0]=TypeRef
    ComponentDecl,  // text=name; c[0]=TypeRef, c[1]=init|null; flag Var
    OpDecl,   // text=name; c[0]=List params, c[1]=ResultSpec|null, c[2]=precond|null,
              // c[3]=body Block|expr|null, c[4]=rename Name|null, c[5]=queue cond|null
    Param,          // text=name; mode; c[0]=TypeRef
    ResultSpec,     // text=result name or ""; c[0]=TypeRef, c[1]=postcond|null
    TypeRef,        // text=full name; children = actual args (TypeRef / expr / NamedArg)
    NamedArg,       // text=name; c[0]=value
    List,

    // statements
    Block,
    ParallelGroup,  // children: branch statements ("||" separated)
    ThenGroup,      // children: section Blocks ("then" separated)
    VarDecl,        // text=name; c[0]=TypeRef|null, c[1]=init|null, c[2]=for-anchor|null
    RefDecl,        // text=name; c[0]=path expr
    Assign,         // c[0]=lhs, c[1]=rhs
    Move,
    Swap,
    CallStmt,       // c[0]=call expr
    Return,         // c[0]=expr|null
    ExitLoop,
    ContinueWith,   // children: expr or NamedArg bindings
    If,             // c[0]=cond, c[1]=then Block, c[2]=else Block|If|null
    LoopUntil,      // c[0]=cond, c[1]=body
    ForThenWhile,   // text=var; c[0]=init, c[1]=next|null, c[2]=while|null, c[3]=body
    ForInRange,     // text=var; c[0]=range expr, c[1]=body
    ForEach,        // text=element; c[0]=container, c[1]=body

    // expressions
    Name,           // text=identifier or quoted op name
    Qualified,      // text=member; c[0]=qualifier TypeRef
    Selected,       // text=component; c[0]=base
    Attribute,      // text=First|Last; c[0]=base
    Index,          // c[0]=base, c[1]=index
    Slice,          // c[0]=base, c[1]=lo|null, c[2]=hi|null
    CallExpr,       // c[0]=callee, rest args (expr or NamedArg)
    Aggregate,      // text=qualifier module or ""; children = elements
    Comprehension,  // text=element var; c[0]=container, c[1]=filter|null, c[2]=value
    IntLit,         // ival
    RealLit,        // rval
    CharLit,        // ival=code point, text=utf8
    StrLit,         // text
    EnumLit,        // text includes '#'
    NullLit,
    Binary,         // text=op; c[0], c[1]
    Unary,          // text=op; c[0]
    Magnitude,      // c[0]
    IsNull,         // c[0]
    NotNull,        // c[0]
    InSet,          // c[0]=lhs, c[1]=set expr; flag Negated
    ExprBlock,      // statements followed by a result expression (last child)
};

// Bit flags; meaning depends on node kind.
enum NodeFlags : uint16_t {
    FlagVar = 1 << 0,         // var (vs const) component / object
    FlagOptional = 1 << 1,    // optional type use
    FlagAbstract = 1 << 2,    // abstract interface
    FlagConcurrent = 1 << 3,  // concurrent interface/class
    FlagIsOp = 1 << 4,        // OpDecl declared with `op`
    FlagRef = 1 << 5,         // ref result / ref binding form of for-loop var
    FlagReverse = 1 << 6,     // reverse for-in-range
    FlagNegated = 1 << 7,     // not in
    FlagQueuedWhile = 1 << 8, // `queued while` (vs `queued until`)
    FlagParenAgg = 1 << 9,    // (X => Y, ...) class aggregate
    FlagMoveInit = 1 << 10,   // := replaced by <== (decl init / aggregate element)
    FlagOpName = 1 << 11,     // Name spelled as a quoted operator string
    FlagAngles = 1 << 12,     // TypeRef written with <...>, possibly empty
    FlagLockFree = 1 << 13,   // lock_free modifier on an op (diagnosed, unsupported)
};

struct Node;
using NodePtr = std::unique_ptr<Node>;

struct Node {
    NodeKind kind;
    Span span;
    std::string text;
    int64_t ival = 0;
    double rval = 0;
    uint16_t flags = 0;
    ParamMode mode = ParamMode::ReadOnly;
    std::vector<NodePtr> children;
    // analysis annotations; ignored by clone and structural equality
    int32_t slot = -1;
    void* aux = nullptr;

    explicit Node(NodeKind k, Span s = {}) : kind(k), span(s) {}

    bool has(NodeFlags f) const { return (flags & f) != 0; }
    void set(NodeFlags f) { flags |= f; }

    Node* child(size_t i) const { return i < children.size() ? children[i].get() : nullptr; }

    // Last segment of a :: qualified name.
    std::string simple_name() const {
        auto p = text.rfind("::");
        return p == std::string::npos ? text : text.substr(p + 2);
    }
};

inline NodePtr make_node(NodeKind k, Span s = {}) { return std::make_unique<Node>(k, s); }

NodePtr clone(const Node& n);

// Structural equality ignoring spans (used by round-trip tests).
bool structurally_equal(const Node& a, const Node& b);

}  // namespace psl
