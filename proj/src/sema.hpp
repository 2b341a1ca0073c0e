#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ast.hpp"
#include "diag.hpp"
#include "value.hpp"

namespace psl {

struct ModuleSig;
struct TypeDesc;
struct OpImpl;
struct Program;
struct ExecCtx;
struct Place;

// Builtin categories; None means a user module instantiation.
enum class BK : uint8_t {
    None,
    UnivInt,
    UnivReal,
    UnivChar,
    UnivStr,
    UnivEnum,
    Boolean,
    Ordering,
    Integer,
    BasicArray,
    Range,   // Countable_Range
    SetType,
    NullType,   // type of the null literal
    FormalType  // opaque skeleton for generic checking
};

struct FormalParam {
    std::string name;
    bool is_type = true;
    const Node* constraint = nullptr;  // type formal: constraint TypeRef
    const Node* value_type = nullptr;  // value formal: its TypeRef
    const Node* dflt = nullptr;        // default actual / value
};

struct OpDef {
    std::string name;
    bool is_op = false;
    const Node* iface_decl = nullptr;
    const Node* body_decl = nullptr;  // class body, expression fn, or the
                                      // iface decl itself when it has one
    const Node* rename_target = nullptr;
    std::string file;  // stand-alone functions: source path
    // derived conveniences, set during analysis
    const Node* precond = nullptr;
    const Node* queue_cond = nullptr;
    const Node* body = nullptr;
    int result_slot = -1;  // named result frame slot
    // frame sizes, set once by the body pass
    int nvals = 0;
    int nrefs = 0;
};

// A call resolved against the skeleton; re-bound per instantiation by
// substituting formal types with the instantiation's actuals.
struct CallSite {
    int type_site = -1;  // index into ModuleSig::type_sites (the host type)
    std::string op;
    int arity = 0;
};

struct ModuleSig {
    std::string name;  // simple name
    std::string full;  // as written, possibly qualified
    std::string file;  // source path for diagnostics
    bool is_abstract = false;
    bool is_concurrent = false;
    const Node* iface = nullptr;
    const Node* klass = nullptr;
    ModuleSig* enclosing = nullptr;
    std::vector<FormalParam> formals;
    std::vector<const Node*> implements;
    std::vector<const Node*> components;     // interface + class vars/consts
    std::vector<const Node*> module_consts;  // class-level consts
    std::vector<OpDef> ops;
    std::unordered_map<std::string, ModuleSig*> locals;
    std::unordered_map<std::string, const Node*> type_decls;
    // filled by the body pass
    bool checked = false;
    TypeDesc* skeleton = nullptr;
    std::vector<TypeDesc*> type_sites;  // skeleton-level static types used by bodies
    std::vector<CallSite> call_sites;
    OpDef comp_inits;  // synthetic frame hosting component initializers
};

// What a formal is bound to in an instantiation.
struct Binding {
    TypeDesc* type = nullptr;
    bool optional = false;
    const Node* value = nullptr;  // value actual, an expression
};

struct CompSlot {
    std::string name;
    TypeDesc* type = nullptr;
    bool optional = false;
    bool is_var = false;
    const Node* init = nullptr;
};

// A fully-bound type. Identical instantiations are interned.
struct TypeDesc {
    BK builtin = BK::None;
    ModuleSig* module = nullptr;
    std::string key;   // intern key / display name
    bool concurrent = false;
    std::vector<std::pair<std::string, Binding>> actuals;
    std::vector<CompSlot> comps;
    std::unordered_map<std::string, int> comp_index;
    std::vector<std::unique_ptr<OpImpl>> ops;
    std::unordered_map<std::string, OpImpl*> op_by_name;
    // constraint for FormalType skeletons
    std::vector<ModuleSig*> formal_constraints;
    std::string formal_name;  // FormalType: the formal's name in its module
    // element binding shorthand for containers
    Binding elem;  // BasicArray/SetType/Range element
    // Integer range bounds
    int64_t range_lo = 0, range_hi = 0;
    // per-instantiation resolutions of the module's sites
    bool sites_ready = false;
    std::vector<TypeDesc*> site_types;
    std::vector<OpImpl*> site_ops;
    std::unordered_map<TypeDesc*, TypeDesc*> subst_cache;

    Binding* find_actual(const std::string& n) {
        for (auto& a : actuals)
            if (a.first == n) return &a.second;
        return nullptr;
    }
    OpImpl* find_op(const std::string& n) {
        auto it = op_by_name.find(n);
        return it == op_by_name.end() ? nullptr : it->second;
    }
    OpImpl* find_op_n(const std::string& n, int arity);
    bool is_intlike() const { return builtin == BK::UnivInt || builtin == BK::Integer; }
};

using NativeFn = Value (*)(ExecCtx& cx, OpImpl* self, Place* args, size_t nargs,
                           Region* result_region);
// Ref-returning natives produce a place into an argument's storage.
using NativePlaceFn = Place (*)(ExecCtx& cx, OpImpl* self, Place* args, size_t nargs);

struct ParamInfo {
    std::string name;
    ParamMode mode = ParamMode::ReadOnly;
    TypeDesc* type = nullptr;
    bool optional = false;
};

struct OpImpl {
    std::string name;
    bool is_op = false;
    TypeDesc* owner = nullptr;
    const Node* decl = nullptr;   // OpDecl carrying the body
    const OpDef* def = nullptr;   // sig entry (frame sizes)
    NativeFn native = nullptr;
    NativePlaceFn native_place = nullptr;
    std::vector<ParamInfo> params;
    int index = -1;          // position in owner->ops
    int arity = 0;
    bool has_precond = false;
    bool returns_ref = false;
    bool queued = false;
    bool queued_while = false;
    bool locked_shared = false;   // locked mode on controlling param
    bool locked_excl = false;
    int controlling_param = -1;   // param index carrying locked/queued mode
    // result handling
    bool has_named_result = false;
    int result_slot = -1;
    TypeDesc* result_type = nullptr;
    bool result_optional = false;
};

inline OpImpl* TypeDesc::find_op_n(const std::string& n, int arity) {
    for (auto& op : ops)
        if (op->name == n && op->arity == arity) return op.get();
    return nullptr;
}

// Side annotations the body pass attaches to expression nodes; the
// evaluator reads them through Node::aux.
enum class CallKind : uint8_t {
    Builtin,  // native handled by opcode switch
    Site,     // index into the current self type's resolved call sites
    Direct,   // fixed OpImpl (stand-alone function or concrete type)
    Dynamic,  // dispatch by name on the first argument's runtime type
};

struct CallInfo {
    CallKind kind = CallKind::Dynamic;
    int site = -1;             // Site: index into self->site_ops
    OpImpl* target = nullptr;  // Direct
    std::string name;          // Dynamic lookup key
    // static type knowledge for aggregates / paren constructors
    TypeDesc* expect = nullptr;
    int expect_site = -1;  // generic bodies: index into self->site_types
    uint8_t builtin_op = 0;  // Builtin: native scalar operator
    uint8_t spawn_mask = 0;  // binary ops: bit 0 set when the left operand
                             // is safe and worthwhile to evaluate in parallel
    bool callee_reads_only = false;  // callee has no updatable parameters
    bool callee_interp = false;      // callee has an interpreted body
};

// Where a resolved name lives at run time.
struct NameInfo {
    enum K {
        FrameVal,   // frame local value slot
        FrameRef,   // frame place slot (params, ref decls at frame level)
        IterVal,    // per-iteration value slot of loop `loop_id`
        IterRef,    // per-iteration place slot
        Global,     // unit-level object, index into session globals
        ConstExpr,  // named constant expression (value formals)
        EnumSelf,   // the current instantiation's type (type name used as value?)
    } k = FrameVal;
    int slot = -1;
    int loop_id = -1;
    TypeDesc* type = nullptr;
    bool optional = false;
    bool is_var = false;
    bool ref_rooted = false;  // transitively rooted at a ref/ref-var param
    ParamMode mode = ParamMode::ReadOnly;
    const Node* init = nullptr;  // ConstExpr
    int temp_slot = -1;  // ref decls: value slot backing a non-place initializer
};

// Loop execution shape, attached to ForThenWhile / ForInRange nodes.
struct LoopInfo {
    int id = -1;
    int nvals = 0;
    int nrefs = 0;
    bool parallel = false;  // iterations may overlap (parallel continues)
    NameInfo* var = nullptr;
    bool var_is_ref = false;
    std::string var_name;
};

struct Program {
    std::vector<NodePtr> units;
    std::vector<std::unique_ptr<ModuleSig>> modules;
    std::unordered_map<std::string, ModuleSig*> module_by_name;
    std::vector<std::unique_ptr<TypeDesc>> types;
    std::unordered_map<std::string, TypeDesc*> interned;
    std::vector<std::unique_ptr<CallInfo>> callinfos;
    std::vector<std::unique_ptr<NameInfo>> nameinfos;
    std::vector<std::unique_ptr<LoopInfo>> loopinfos;
    // stand-alone functions
    std::vector<std::unique_ptr<OpImpl>> funcs;
    std::unordered_map<std::string, OpImpl*> func_by_name;
    std::vector<std::unique_ptr<OpDef>> func_defs;
    // unit-level object declarations
    std::vector<const Node*> globals;
    std::vector<std::string> global_files;
    std::vector<std::pair<int, int>> global_frame_sizes;  // vals/refs of each init
    std::unordered_map<std::string, int> global_index;
    // builtin descriptors
    TypeDesc* t_univ_int = nullptr;
    TypeDesc* t_univ_real = nullptr;
    TypeDesc* t_univ_char = nullptr;
    TypeDesc* t_univ_str = nullptr;
    TypeDesc* t_univ_enum = nullptr;
    TypeDesc* t_bool = nullptr;
    TypeDesc* t_ordering = nullptr;
    TypeDesc* t_null = nullptr;

    TypeDesc* new_type() {
        types.push_back(std::make_unique<TypeDesc>());
        return types.back().get();
    }
    CallInfo* new_callinfo() {
        callinfos.push_back(std::make_unique<CallInfo>());
        return callinfos.back().get();
    }
    NameInfo* new_nameinfo() {
        nameinfos.push_back(std::make_unique<NameInfo>());
        return nameinfos.back().get();
    }
    LoopInfo* new_loopinfo() {
        loopinfos.push_back(std::make_unique<LoopInfo>());
        return loopinfos.back().get();
    }
};

// Full analysis: registry, instantiation checks, body resolution and
// the safety regime. Returns the program even when diagnostics were
// produced; callers gate execution on diags.has_errors().
std::unique_ptr<Program> analyze(std::vector<NodePtr> units, DiagSink& diags);

// Instantiate (and intern) a module with the given actual bindings.
TypeDesc* instantiate(Program& p, ModuleSig* m, std::vector<Binding> actuals,
                      DiagSink& diags, Span where, const std::string& file);

// Resolution context for type expressions.
struct TypeEnv {
    Program* p = nullptr;
    ModuleSig* self_module = nullptr;
    TypeDesc* self_type = nullptr;  // hosts formal bindings
    DiagSink* diags = nullptr;
    std::string file;
};

// Resolve a TypeRef; null on failure (diagnostic already issued).
TypeDesc* resolve_type(TypeEnv& env, const Node* tref, bool& optional);

// Resolve a type's per-instantiation site tables (idempotent).
void resolve_sites(Program& p, TypeDesc* t, DiagSink& diags);

// Map a skeleton-level type into the world of a concrete instantiation
// by substituting formals with `self`'s actuals.
TypeDesc* subst_type(Program& p, TypeDesc* t, TypeDesc* self, DiagSink& diags);

// Structural / explicit conformance of an actual against a constraint
// instantiation. cargs are the constraint's own resolved actuals.
bool conforms(Program& p, TypeDesc* actual, ModuleSig* constraint,
              const std::vector<Binding>& cargs, DiagSink& diags);

// Body resolution and safety checks, in lower.cpp.
void check_module_bodies(Program& p, ModuleSig* m, DiagSink& diags, const std::string& file);
void declare_func_sig(Program& p, OpImpl* fn, OpDef* def, DiagSink& diags);
void check_func_body(Program& p, OpImpl* fn, OpDef* def, DiagSink& diags,
                     const std::string& file);
void check_globals(Program& p, DiagSink& diags);

// Builtin registration, in builtins.cpp.
void register_builtins(Program& p);
void bind_builtin_natives(Program& p, TypeDesc* t);
TypeDesc* make_basic_array(Program& p, Binding elem);
TypeDesc* make_range_type(Program& p, Binding elem);
TypeDesc* make_set_type(Program& p, Binding elem);
TypeDesc* make_integer_type(Program& p);

}  // namespace psl
