#include "exec.hpp"

#include <cstdint>
#include <memory>

#include "ast.hpp"
#include "sched.hpp"
#include "sync.hpp"

namespace psl {

// Driver state for one active loop; lives on the driving thread's stack
// and outlives every iteration (the driver joins before returning).
struct LoopRt {
    LoopInfo* li = nullptr;
    const Node* node = nullptr;
    Master* master = nullptr;  // null for sequential drivers
    Frame* frame = nullptr;
    Iter* outer = nullptr;  // iteration chain at loop entry
    LoopRt* parent = nullptr;
};

namespace {
constexpr size_t kMaxArgs = 12;

bool is_stmt_kind(NodeKind k) {
    return k >= NodeKind::Block && k <= NodeKind::ForEach;
}

const Node* arg_value(const Node* a) {
    return a->kind == NodeKind::NamedArg ? a->child(0) : a;
}

NameInfo* name_info(const Node* e) { return static_cast<NameInfo*>(e->aux); }
CallInfo* call_info(const Node* e) { return static_cast<CallInfo*>(e->aux); }

Iter* find_iter(Env& env, int loop_id) {
    for (Iter* it = env.iter; it; it = it->parent)
        if (it->loop_id == loop_id) return it;
    fault("NULL_DEREF", "iteration variable referenced outside its loop");
}

// The initial / continued binding of a loop variable.
struct IterBinding {
    bool is_place = false;
    Place pl{};
    Value v;
};

Value invoke_places(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* places, size_t nargs,
                    Region* result_region, Master* cancel);
Place invoke_place(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* places, size_t nargs,
                   Master* cancel);
void run_iteration(ExecCtx& cx, LoopRt& lr, IterBinding b);

OpImpl* resolve_op(ExecCtx& cx, Env& env, CallInfo* ci, Span sp) {
    (void)cx;
    switch (ci->kind) {
        case CallKind::Direct:
            if (!ci->target) fault("UNDECLARED", "call to an unresolved operation", sp);
            return ci->target;
        case CallKind::Site: {
            TypeDesc* self = env.f->self;
            if (!self || !self->sites_ready || ci->site < 0 ||
                ci->site >= static_cast<int>(self->site_ops.size()))
                fault("UNDECLARED", "call site not resolved", sp);
            OpImpl* op = self->site_ops[ci->site];
            if (!op)
                fault("UNDECLARED", "no operation bound at this call site for " + self->key,
                      sp);
            return op;
        }
        default:
            return nullptr;
    }
}

TypeDesc* expected_type(Env& env, CallInfo* ci) {
    if (ci->expect) return ci->expect;
    if (ci->expect_site >= 0 && env.f->self && env.f->self->sites_ready &&
        ci->expect_site < static_cast<int>(env.f->self->site_types.size()))
        return env.f->self->site_types[ci->expect_site];
    return nullptr;
}

Place name_place(ExecCtx& cx, Env& env, NameInfo* ni, Span sp) {
    switch (ni->k) {
        case NameInfo::FrameVal:
            return {&env.f->vals[ni->slot], &env.f->region};
        case NameInfo::FrameRef:
            return env.f->refs[ni->slot];
        case NameInfo::IterVal: {
            Iter* it = find_iter(env, ni->loop_id);
            return {&it->vals[ni->slot], &env.f->region};
        }
        case NameInfo::IterRef: {
            Iter* it = find_iter(env, ni->loop_id);
            return it->refs[ni->slot];
        }
        case NameInfo::Global:
            return {&cx.globals[ni->slot], &cx.root_region};
        default:
            fault("UNDECLARED", "name is not an object", sp);
    }
}

// Whether the expression designates storage (vs producing a temporary).
bool is_place_expr(ExecCtx& cx, Env& env, const Node* e) {
    switch (e->kind) {
        case NodeKind::Name: {
            NameInfo* ni = name_info(e);
            return ni && ni->k != NameInfo::ConstExpr && ni->k != NameInfo::EnumSelf;
        }
        case NodeKind::Selected:
            return is_place_expr(cx, env, e->child(0));
        case NodeKind::CallExpr: {
            CallInfo* ci = call_info(e);
            if (!ci || (ci->kind != CallKind::Direct && ci->kind != CallKind::Site))
                return false;
            OpImpl* op = resolve_op(cx, env, ci, e->span);
            if (!op || !(op->native_place || (op->returns_ref && !op->native)))
                return false;
            // a ref result roots at the first argument's storage
            const Node* first = nullptr;
            if (e->child(0)->kind == NodeKind::Selected)
                first = e->child(0)->child(0);
            else if (e->children.size() >= 2)
                first = arg_value(e->child(1));
            return first && is_place_expr(cx, env, first);
        }
        default:
            return false;
    }
}

void eval_arg(ExecCtx& cx, Env& env, const Node* e, Arg& a) {
    if (is_place_expr(cx, env, e)) {
        a.place = eval_place(cx, env, e);
    } else {
        a.hold(eval_expr(cx, env, e, &env.f->region), &env.f->region);
    }
}

// Gather call arguments into slot order. Receiver of X.Op(...) sugar is
// parameter 0; other argument nodes carry their slot from the checker.
size_t gather_args(ExecCtx& cx, Env& env, const Node* e, Arg* argv, int arity) {
    if (arity > static_cast<int>(kMaxArgs))
        fault("INDEX_RANGE", "too many arguments", e->span);
    const Node* callee = e->child(0);
    size_t next = 0;
    if (callee->kind == NodeKind::Selected) {
        eval_arg(cx, env, callee->child(0), argv[0]);
        next = 1;
    }
    for (size_t i = 1; i < e->children.size(); ++i) {
        const Node* a = e->child(i);
        int slot = a->slot >= 0 ? a->slot : static_cast<int>(next + i - 1);
        if (slot < 0 || slot >= arity)
            fault("INDEX_RANGE", "argument does not match a parameter", a->span);
        eval_arg(cx, env, arg_value(a), argv[slot]);
    }
    return static_cast<size_t>(arity);
}

Value eval_call_expr(ExecCtx& cx, Env& env, const Node* e, Region* tgt) {
    CallInfo* ci = call_info(e);
    if (!ci) fault("UNDECLARED", "unresolved call", e->span);
    OpImpl* op = resolve_op(cx, env, ci, e->span);
    Arg argv[kMaxArgs];
    size_t n = gather_args(cx, env, e, argv, op->arity);
    return invoke(cx, op, op->owner ? op->owner : env.f->self, argv, n, tgt, env.cancel);
}

// ---- scalar builtins ----------------------------------------------------

int64_t int_arith(const std::string& op, int64_t l, int64_t r, Span sp) {
    int64_t out = 0;
    bool ovf = false;
    if (op == "+") {
        ovf = __builtin_add_overflow(l, r, &out);
    } else if (op == "-") {
        ovf = __builtin_sub_overflow(l, r, &out);
    } else if (op == "*") {
        ovf = __builtin_mul_overflow(l, r, &out);
    } else if (op == "/") {
        if (r == 0) fault("DIV_ZERO", "division by zero", sp);
        if (l == INT64_MIN && r == -1)
            ovf = true;
        else
            out = l / r;
    } else if (op == "mod") {
        if (r == 0) fault("DIV_ZERO", "mod by zero", sp);
        out = ((l % r) + r) % r;
    } else if (op == "**") {
        if (r < 0) fault("OVERFLOW", "negative exponent", sp);
        out = 1;
        for (int64_t k = 0; k < r; ++k)
            if (__builtin_mul_overflow(out, l, &out)) ovf = true;
    } else {
        fault("UNDECLARED", "operator '" + op + "' not defined for integers", sp);
    }
    if (ovf) fault("OVERFLOW", "integer overflow", sp);
    return out;
}

Value scalar_order(const Value& l, const Value& r) {
    auto ord = [](const char* s) { return Value::make_enum(s); };
    if (l.is_null() || r.is_null()) return ord("#unordered");
    switch (l.kind) {
        case VK::Int:
        case VK::Char:
            if (l.i < r.i) return ord("#less");
            if (l.i > r.i) return ord("#greater");
            return ord("#equal");
        case VK::Real:
            if (l.r != l.r || r.r != r.r) return ord("#unordered");
            if (l.r < r.r) return ord("#less");
            if (l.r > r.r) return ord("#greater");
            return ord("#equal");
        case VK::Str: {
            int c = l.str->text.compare(r.str->text);
            return c < 0 ? ord("#less") : c > 0 ? ord("#greater") : ord("#equal");
        }
        case VK::Enum:
            return l.sym == r.sym ? ord("#equal") : ord("#unordered");
        default:
            return scalar_equal(l, r) ? ord("#equal") : ord("#unordered");
    }
}

Value builtin_binary(const std::string& op, Value l, Value r, Span sp) {
    if (op == "=?") return scalar_order(l, r);
    if (op == "|") {
        auto text = [](const Value& v) {
            return v.kind == VK::Str ? v.str->text : value_to_string(v);
        };
        return Value::make_str(text(l) + text(r));
    }
    if (l.is_null() || r.is_null())
        fault("NULL_DEREF", "null operand of '" + op + "'", sp);
    if (l.kind == VK::Int || l.kind == VK::Char)
        return Value::make_int(int_arith(op, l.i, r.i, sp));
    if (l.kind == VK::Real) {
        double out = 0;
        if (op == "+")
            out = l.r + r.r;
        else if (op == "-")
            out = l.r - r.r;
        else if (op == "*")
            out = l.r * r.r;
        else if (op == "/") {
            if (r.r == 0.0) fault("DIV_ZERO", "division by zero", sp);
            out = l.r / r.r;
        } else if (op == "**") {
            out = 1;
            for (int64_t k = 0; k < r.i; ++k) out *= l.r;
        } else {
            fault("UNDECLARED", "operator '" + op + "' not defined for reals", sp);
        }
        return Value::make_real(out);
    }
    fault("NULL_DEREF", "operator '" + op + "' applied to a non-scalar", sp);
}

// Evaluate both operands, running the left on a sibling picothread when
// the checker marked it independent and worth the spawn.
void eval_operands(ExecCtx& cx, Env& env, const Node* e, CallInfo* ci, Value& lv,
                   Value& rv) {
    if (ci && (ci->spawn_mask & 1) && !cx.sched->sequential()) {
        auto lp = std::make_shared<Value>();
        Master om(env.cancel);
        Env lenv = env;
        lenv.cancel = &om;
        const Node* ln = e->child(0);
        cx.sched->spawn(&om, [&cx, lenv, ln, lp]() mutable {
            *lp = eval_expr(cx, lenv, ln, &lenv.f->region);
        });
        rv = eval_expr(cx, env, e->child(1), &env.f->region);
        cx.sched->await(&om);
        lv = std::move(*lp);
        lv.reattribute(&env.f->region);
    } else {
        lv = eval_expr(cx, env, e->child(0), &env.f->region);
        rv = eval_expr(cx, env, e->child(1), &env.f->region);
    }
}

Value eval_binary(ExecCtx& cx, Env& env, const Node* e, Region* tgt) {
    CallInfo* ci = call_info(e);
    const std::string& op = e->text;
    if (op == "and")
        return Value::make_bool(eval_expr(cx, env, e->child(0), tgt).truthy() &&
                                eval_expr(cx, env, e->child(1), tgt).truthy());
    if (op == "or")
        return Value::make_bool(eval_expr(cx, env, e->child(0), tgt).truthy() ||
                                eval_expr(cx, env, e->child(1), tgt).truthy());
    if (op == "..") {
        Value lo = eval_expr(cx, env, e->child(0), tgt);
        Value hi = eval_expr(cx, env, e->child(1), tgt);
        if (lo.is_null() || hi.is_null())
            fault("NULL_DEREF", "null bound of a range", e->span);
        return Value::make_range(lo.i, hi.i);
    }
    if (ci && (ci->kind == CallKind::Direct || ci->kind == CallKind::Site)) {
        OpImpl* sop = resolve_op(cx, env, ci, e->span);
        Value lv, rv;
        eval_operands(cx, env, e, ci, lv, rv);
        Arg argv[2];
        argv[0].hold(std::move(lv), &env.f->region);
        argv[1].hold(std::move(rv), &env.f->region);
        return invoke(cx, sop, sop->owner ? sop->owner : env.f->self, argv, 2, tgt,
                      env.cancel);
    }
    Value lv, rv;
    eval_operands(cx, env, e, ci, lv, rv);
    return builtin_binary(op, std::move(lv), std::move(rv), e->span);
}

Value eval_unary(ExecCtx& cx, Env& env, const Node* e, Region* tgt) {
    Value v = eval_expr(cx, env, e->child(0), tgt);
    if (e->text == "not") return Value::make_bool(!v.truthy());
    if (e->text == "+") return v;
    if (e->text == "-") {
        if (v.kind == VK::Int) {
            if (v.i == INT64_MIN) fault("OVERFLOW", "integer overflow", e->span);
            return Value::make_int(-v.i);
        }
        if (v.kind == VK::Real) return Value::make_real(-v.r);
        fault("NULL_DEREF", "negating a non-numeric value", e->span);
    }
    fault("UNDECLARED", "unary operator '" + e->text + "' not defined", e->span);
}

Value eval_in_set(ExecCtx& cx, Env& env, const Node* e) {
    // container types dispatch to their own "in" operator
    if (CallInfo* ci = call_info(e)) {
        OpImpl* sop = resolve_op(cx, env, ci, e->span);
        Arg args[2];
        eval_arg(cx, env, e->child(0), args[0]);
        eval_arg(cx, env, e->child(1), args[1]);
        Value r = invoke(cx, sop, sop->owner, args, 2, &env.f->region, env.cancel);
        bool in = r.truthy();
        if (e->has(FlagNegated)) in = !in;
        return Value::make_bool(in);
    }
    Value lhs = eval_expr(cx, env, e->child(0), &env.f->region);
    const Node* rhs = e->child(1);
    bool found = false;
    if (rhs->kind == NodeKind::Aggregate && !rhs->has(FlagParenAgg)) {
        for (const auto& el : rhs->children) {
            Value v = eval_expr(cx, env, el.get(), &env.f->region);
            if (v.kind == VK::Range) {
                if (lhs.kind == VK::Int && lhs.i >= v.i && lhs.i <= v.b) found = true;
            } else if (scalar_equal(lhs, v)) {
                found = true;
            }
            if (found) break;
        }
    } else {
        Value v = eval_expr(cx, env, rhs, &env.f->region);
        if (v.kind == VK::Range)
            found = lhs.kind == VK::Int && lhs.i >= v.i && lhs.i <= v.b;
        else if (v.kind == VK::Set)
            found = set_contains(*v.set, lhs);
        else if (!v.is_null())
            found = scalar_equal(lhs, v);
    }
    if (e->has(FlagNegated)) found = !found;
    return Value::make_bool(found);
}

// Evaluate a component initializer in a lightweight frame of its type.
Value eval_comp_init(ExecCtx& cx, TypeDesc* t, const Node* init, Region* tgt) {
    Frame f(tgt);
    f.self = t;
    if (t->module) {
        f.vals.resize(t->module->comp_inits.nvals);
        f.refs.resize(t->module->comp_inits.nrefs);
    }
    Env env{&f, nullptr, nullptr, nullptr};
    Value v = eval_expr(cx, env, init, &f.region);
    v.reattribute(tgt);
    return v;
}

Value eval_aggregate(ExecCtx& cx, Env& env, const Node* e, Region* tgt) {
    CallInfo* ci = call_info(e);
    TypeDesc* t = ci ? expected_type(env, ci) : nullptr;
    if (!t) fault("UNDECLARED", "aggregate has no determinable type", e->span);
    size_t nc = t->comps.size();
    std::vector<bool> given(nc, false);
    // `Comp <== X` components move their source, leaving it null
    auto eval_elem = [&](const Node* a, Region* r) -> Value {
        const Node* v = arg_value(a);
        if (a->has(FlagMoveInit) && is_place_expr(cx, env, v)) {
            Place p = eval_place(cx, env, v);
            Value out = std::move(*p.slot);
            out.reattribute(r);
            return out;
        }
        return eval_expr(cx, env, v, r);
    };
    if (t->concurrent) {
        Region* objr = &cx.root_region;  // concurrent objects outlive frames
        ConcObj* o = cx.sync->create(t, objr);
        for (size_t i = 0; i < e->children.size(); ++i) {
            const Node* a = e->child(i);
            int slot = a->slot >= 0 ? a->slot : static_cast<int>(i);
            if (slot < 0 || slot >= static_cast<int>(nc))
                fault("INDEX_RANGE", "aggregate value does not match a component",
                      a->span);
            o->comps[slot] = eval_elem(a, objr);
            given[slot] = true;
        }
        for (size_t i = 0; i < nc; ++i)
            if (!given[i] && t->comps[i].init)
                o->comps[i] = eval_comp_init(cx, t, t->comps[i].init, objr);
        return Value::make_conc(o);
    }
    CompRep* c = alloc_comp(t, tgt, nc);
    for (size_t i = 0; i < e->children.size(); ++i) {
        const Node* a = e->child(i);
        int slot = a->slot >= 0 ? a->slot : static_cast<int>(i);
        if (slot < 0 || slot >= static_cast<int>(nc))
            fault("INDEX_RANGE", "aggregate value does not match a component", a->span);
        c->slots[slot] = eval_elem(a, tgt);
        given[slot] = true;
    }
    for (size_t i = 0; i < nc; ++i)
        if (!given[i] && t->comps[i].init)
            c->slots[i] = eval_comp_init(cx, t, t->comps[i].init, tgt);
    return make_comp(c);
}

Value eval_selected(ExecCtx& cx, Env& env, const Node* e, Region* tgt) {
    Arg tmp;
    Place bp;
    if (is_place_expr(cx, env, e->child(0))) {
        bp = eval_place(cx, env, e->child(0));
    } else {
        tmp.hold(eval_expr(cx, env, e->child(0), &env.f->region), &env.f->region);
        bp = tmp.place;
    }
    Value& b = *bp.slot;
    if (b.is_null()) fault("NULL_DEREF", "component of a null object", e->span);
    if (e->slot < 0) fault("UNDECLARED", "unresolved component", e->span);
    if (b.kind == VK::Comp) return b.comp->slots[e->slot].copy(tgt);
    if (b.kind == VK::Conc) return b.conc->comps[e->slot].copy(tgt);
    fault("NULL_DEREF", "selecting a component of a non-object", e->span);
}

Value eval_name(ExecCtx& cx, Env& env, const Node* e, Region* tgt) {
    NameInfo* ni = name_info(e);
    if (!ni) fault("UNDECLARED", "unresolved name '" + e->text + "'", e->span);
    if (ni->k == NameInfo::ConstExpr) {
        if (ni->init) return eval_expr(cx, env, ni->init, tgt);
        TypeDesc* self = env.f->self;
        if (self && ni->slot >= 0 && ni->slot < static_cast<int>(self->actuals.size()) &&
            self->actuals[ni->slot].second.value)
            return eval_expr(cx, env, self->actuals[ni->slot].second.value, tgt);
        fault("UNDECLARED", "constant '" + e->text + "' has no value", e->span);
    }
    if (ni->k == NameInfo::EnumSelf) return Value();
    Place p = name_place(cx, env, ni, e->span);
    return p.slot->copy(tgt);
}

Value eval_attribute(ExecCtx& cx, Env& env, const Node* e) {
    Value v = eval_expr(cx, env, e->child(0), &env.f->region);
    bool first = e->text == "First";
    if (v.kind == VK::Range) return Value::make_int(first ? v.i : v.b);
    if (v.kind == VK::Arr || v.kind == VK::Slice)
        return Value::make_int(first ? seq_first(v) : seq_last(v));
    if (v.kind == VK::Str)
        return Value::make_int(first ? 1 : static_cast<int64_t>(v.str->text.size()));
    if (v.is_null()) fault("NULL_DEREF", "attribute of a null value", e->span);
    fault("UNDECLARED", "attribute '" + e->text + "' not defined", e->span);
}

// ---- loops --------------------------------------------------------------

IterBinding make_binding(ExecCtx& cx, Env& env, const Node* e, LoopInfo* li) {
    IterBinding b;
    if (li->var_is_ref && is_place_expr(cx, env, e)) {
        b.is_place = true;
        b.pl = eval_place(cx, env, e);
    } else {
        b.v = eval_expr(cx, env, e, &env.f->region);
    }
    return b;
}

ControlFlow exec_for_then_while(ExecCtx& cx, Env& env, const Node* s) {
    LoopInfo* li = static_cast<LoopInfo*>(s->aux);
    Master lm(env.cancel);
    LoopRt lr{li, s, &lm, env.f, env.iter, env.loop};
    IterBinding b0 = make_binding(cx, env, s->child(0), li);
    try {
        run_iteration(cx, lr, std::move(b0));
    } catch (Fault& f) {
        lm.record_fault(std::move(f));
    }
    cx.sched->await(&lm);
    std::lock_guard<std::mutex> lk(lm.mu);
    if (lm.has_outcome && lm.outcome.k == ControlFlow::Return)
        return std::move(lm.outcome);
    return {};
}

// Run one iteration chain: tail-iterate on the `then` expression, spawn
// siblings only for explicit `continue loop with`.
void run_iteration(ExecCtx& cx, LoopRt& lr, IterBinding b) {
    for (;;) {
        if (lr.master->cancelled_up()) return;
        Iter it;
        it.loop_id = lr.li->id;
        it.parent = lr.outer;
        it.vals.resize(lr.li->nvals);
        it.refs.resize(lr.li->nrefs);
        NameInfo* var = lr.li->var;
        if (lr.li->var_is_ref) {
            if (b.is_place) {
                it.refs[var->slot] = b.pl;
            } else {
                it.vals[var->temp_slot] = std::move(b.v);
                it.refs[var->slot] = {&it.vals[var->temp_slot], &lr.frame->region};
            }
        } else {
            it.vals[var->slot] =
                b.is_place ? b.pl.slot->copy(&lr.frame->region) : std::move(b.v);
        }
        Env env{lr.frame, &it, lr.master, &lr};
        if (const Node* wh = lr.node->child(2))
            if (!eval_expr(cx, env, wh, &lr.frame->region).truthy()) return;
        ControlFlow cf = exec_body(cx, env, lr.node->child(3));
        switch (cf.k) {
            case ControlFlow::Return:
                lr.master->claim(std::move(cf));
                return;
            case ControlFlow::ExitLoop:
                lr.master->claim(ControlFlow{ControlFlow::ExitLoop, {}, false});
                return;
            case ControlFlow::Continued:
                if (cf.spawned) return;
                break;  // plain continue: proceed to the then expression
            case ControlFlow::Normal:
                break;
        }
        const Node* nxt = lr.node->child(1);
        if (!nxt) return;
        b = make_binding(cx, env, nxt, lr.li);
    }
}

ControlFlow exec_continue(ExecCtx& cx, Env& env, const Node* s) {
    LoopRt* lr = env.loop;
    if (!lr) fault("UNDECLARED", "continue outside of a loop", s->span);
    if (s->children.empty() || !lr->master || lr->node->kind != NodeKind::ForThenWhile)
        return {ControlFlow::Continued, {}, false};
    if (lr->master->cancelled_up()) return {ControlFlow::Continued, {}, true};
    IterBinding b = make_binding(cx, env, arg_value(s->child(0)), lr->li);
    auto bp = std::make_shared<IterBinding>(std::move(b));
    LoopRt* plr = lr;
    cx.sched->spawn(lr->master, [&cx, plr, bp]() { run_iteration(cx, *plr, std::move(*bp)); });
    return {ControlFlow::Continued, {}, true};
}

ControlFlow exec_for_in_range(ExecCtx& cx, Env& env, const Node* s) {
    LoopInfo* li = static_cast<LoopInfo*>(s->aux);
    Value rv = eval_expr(cx, env, s->child(0), &env.f->region);
    int64_t lo, hi;
    if (rv.kind == VK::Range) {
        lo = rv.i;
        hi = rv.b;
    } else if (rv.kind == VK::Set && rv.set->interval) {
        lo = rv.set->lo;
        hi = rv.set->hi;
    } else if (rv.is_null()) {
        return {};
    } else {
        fault("NULL_DEREF", "for-in requires a countable range", s->span);
    }
    bool rev = s->has(FlagReverse);
    LoopRt lr{li, s, nullptr, env.f, env.iter, env.loop};
    Iter it;
    it.loop_id = li->id;
    it.parent = env.iter;
    for (int64_t v = rev ? hi : lo; rev ? v >= lo : v <= hi; rev ? --v : ++v) {
        if (env.cancel && env.cancel->cancelled_up()) return {};
        it.vals.clear();
        it.refs.clear();
        it.vals.resize(li->nvals);
        it.refs.resize(li->nrefs);
        it.vals[li->var->slot] = Value::make_int(v);
        Env benv{env.f, &it, env.cancel, &lr};
        ControlFlow cf = exec_body(cx, benv, s->child(1));
        if (cf.k == ControlFlow::Return) return cf;
        if (cf.k == ControlFlow::ExitLoop) return {};
    }
    return {};
}

ControlFlow exec_loop_until(ExecCtx& cx, Env& env, const Node* s) {
    LoopInfo* li = static_cast<LoopInfo*>(s->aux);
    LoopRt lr{li, s, nullptr, env.f, env.iter, env.loop};
    Iter it;
    it.loop_id = li->id;
    it.parent = env.iter;
    for (;;) {
        if (env.cancel && env.cancel->cancelled_up()) return {};
        if (eval_expr(cx, env, s->child(0), &env.f->region).truthy()) return {};
        it.vals.clear();
        it.refs.clear();
        it.vals.resize(li->nvals);
        it.refs.resize(li->nrefs);
        Env benv{env.f, &it, env.cancel, &lr};
        ControlFlow cf = exec_body(cx, benv, s->child(1));
        if (cf.k == ControlFlow::Return) return cf;
        if (cf.k == ControlFlow::ExitLoop) return {};
    }
}

ControlFlow exec_parallel(ExecCtx& cx, Env& env, const Node* s) {
    if (cx.sched->sequential()) {
        for (const auto& bp : s->children) {
            ControlFlow cf = exec_stmt(cx, env, bp.get());
            if (cf.k == ControlFlow::Return || cf.k == ControlFlow::ExitLoop) return cf;
        }
        return {};
    }
    Master gm(env.cancel);
    for (size_t i = 1; i < s->children.size(); ++i) {
        const Node* br = s->children[i].get();
        Env benv = env;
        benv.cancel = &gm;
        cx.sched->spawn(&gm, [&cx, benv, br, &gm]() mutable {
            ControlFlow cf = exec_stmt(cx, benv, br);
            if (cf.k == ControlFlow::Return || cf.k == ControlFlow::ExitLoop)
                gm.claim(std::move(cf));
        });
    }
    if (!s->children.empty()) {
        Env benv = env;
        benv.cancel = &gm;
        try {
            ControlFlow cf = exec_stmt(cx, benv, s->children[0].get());
            if (cf.k == ControlFlow::Return || cf.k == ControlFlow::ExitLoop)
                gm.claim(std::move(cf));
        } catch (Fault& f) {
            gm.record_fault(std::move(f));
        }
    }
    cx.sched->await(&gm);
    std::lock_guard<std::mutex> lk(gm.mu);
    if (gm.has_outcome) return std::move(gm.outcome);
    return {};
}

// ---- statements ---------------------------------------------------------

ControlFlow exec_var_decl(ExecCtx& cx, Env& env, const Node* s) {
    NameInfo* ni = name_info(s);
    if (!ni) fault("UNDECLARED", "unresolved declaration", s->span);
    Place sp = name_place(cx, env, ni, s->span);
    Region* tr = sp.region;
    if (const Node* anchor = s->child(2)) {
        if (is_place_expr(cx, env, anchor)) tr = eval_place(cx, env, anchor).region;
    }
    const Node* init = s->child(1);
    if (!init) {
        *sp.slot = Value();
        return {};
    }
    if (s->has(FlagMoveInit) && is_place_expr(cx, env, init)) {
        Place srcp = eval_place(cx, env, init);
        Value v = std::move(*srcp.slot);
        v.reattribute(tr);
        *sp.slot = std::move(v);
        return {};
    }
    *sp.slot = eval_expr(cx, env, init, tr);
    return {};
}

ControlFlow exec_ref_decl(ExecCtx& cx, Env& env, const Node* s) {
    NameInfo* ni = name_info(s);
    if (!ni) fault("UNDECLARED", "unresolved declaration", s->span);
    Place target;
    if (is_place_expr(cx, env, s->child(0))) {
        target = eval_place(cx, env, s->child(0));
    } else {
        Value v = eval_expr(cx, env, s->child(0), &env.f->region);
        if (ni->k == NameInfo::IterRef) {
            Iter* it = find_iter(env, ni->loop_id);
            it->vals[ni->temp_slot] = std::move(v);
            target = {&it->vals[ni->temp_slot], &env.f->region};
        } else {
            env.f->vals[ni->temp_slot] = std::move(v);
            target = {&env.f->vals[ni->temp_slot], &env.f->region};
        }
    }
    if (ni->k == NameInfo::IterRef)
        find_iter(env, ni->loop_id)->refs[ni->slot] = target;
    else
        env.f->refs[ni->slot] = target;
    return {};
}

}  // namespace

[[noreturn]] void fault(const std::string& code, const std::string& msg, Span sp) {
    throw Fault{code, msg, sp};
}

Place eval_place(ExecCtx& cx, Env& env, const Node* e) {
    switch (e->kind) {
        case NodeKind::Name: {
            NameInfo* ni = name_info(e);
            if (!ni) fault("UNDECLARED", "unresolved name '" + e->text + "'", e->span);
            return name_place(cx, env, ni, e->span);
        }
        case NodeKind::Selected: {
            Place bp = eval_place(cx, env, e->child(0));
            Value& b = *bp.slot;
            if (b.is_null()) fault("NULL_DEREF", "component of a null object", e->span);
            if (e->slot < 0) fault("UNDECLARED", "unresolved component", e->span);
            if (b.kind == VK::Comp) return {&b.comp->slots[e->slot], b.comp->region};
            if (b.kind == VK::Conc) return {&b.conc->comps[e->slot], b.conc->region};
            fault("NULL_DEREF", "selecting a component of a non-object", e->span);
        }
        case NodeKind::CallExpr: {
            CallInfo* ci = call_info(e);
            if (!ci) fault("UNDECLARED", "unresolved call", e->span);
            OpImpl* op = resolve_op(cx, env, ci, e->span);
            if (!op || !(op->native_place || (op->returns_ref && !op->native)))
                fault("UNDECLARED", "call result is not assignable", e->span);
            Arg argv[kMaxArgs];
            size_t n = gather_args(cx, env, e, argv, op->arity);
            Place places[kMaxArgs];
            for (size_t i = 0; i < n; ++i) places[i] = argv[i].place;
            if (op->native_place) return op->native_place(cx, op, places, n);
            return invoke_place(cx, op, op->owner ? op->owner : env.f->self, places, n,
                                env.cancel);
        }
        default:
            fault("UNDECLARED", "expression is not assignable", e->span);
    }
}

Value eval_expr(ExecCtx& cx, Env& env, const Node* e, Region* tgt) {
    switch (e->kind) {
        case NodeKind::IntLit:
            return Value::make_int(e->ival);
        case NodeKind::RealLit:
            return Value::make_real(e->rval);
        case NodeKind::CharLit:
            return Value::make_char(e->ival);
        case NodeKind::StrLit:
            return Value::make_str(e->text);
        case NodeKind::EnumLit:
            return Value::make_enum(e->text);
        case NodeKind::NullLit:
            return Value();
        case NodeKind::Name:
            return eval_name(cx, env, e, tgt);
        case NodeKind::Selected:
            return eval_selected(cx, env, e, tgt);
        case NodeKind::Attribute:
            return eval_attribute(cx, env, e);
        case NodeKind::Qualified: {
            CallInfo* ci = call_info(e);
            if (!ci) fault("UNDECLARED", "unresolved reference", e->span);
            OpImpl* op = resolve_op(cx, env, ci, e->span);
            if (!op) fault("UNDECLARED", "unresolved reference", e->span);
            return invoke(cx, op, op->owner ? op->owner : env.f->self, nullptr, 0, tgt,
                          env.cancel);
        }
        case NodeKind::CallExpr:
            return eval_call_expr(cx, env, e, tgt);
        case NodeKind::Binary:
            return eval_binary(cx, env, e, tgt);
        case NodeKind::Unary:
            return eval_unary(cx, env, e, tgt);
        case NodeKind::IsNull:
            return Value::make_bool(
                eval_expr(cx, env, e->child(0), &env.f->region).is_null());
        case NodeKind::NotNull:
            return Value::make_bool(
                !eval_expr(cx, env, e->child(0), &env.f->region).is_null());
        case NodeKind::InSet:
            return eval_in_set(cx, env, e);
        case NodeKind::ExprBlock: {
            for (size_t i = 0; i + 1 < e->children.size(); ++i) {
                ControlFlow cf = exec_stmt(cx, env, e->children[i].get());
                if (cf.k != ControlFlow::Normal) break;
            }
            if (e->children.empty()) return Value();
            return eval_expr(cx, env, e->children.back().get(), tgt);
        }
        case NodeKind::Aggregate:
            return eval_aggregate(cx, env, e, tgt);
        default:
            fault("UNDECLARED", "unexpected expression form", e->span);
    }
}

ControlFlow exec_stmt(ExecCtx& cx, Env& env, const Node* s) {
    if (!s) return {};
    switch (s->kind) {
        case NodeKind::Block:
            for (const auto& c : s->children) {
                ControlFlow cf = exec_stmt(cx, env, c.get());
                if (cf.k != ControlFlow::Normal) return cf;
            }
            return {};
        case NodeKind::ThenGroup:
            for (const auto& c : s->children) {
                ControlFlow cf = exec_stmt(cx, env, c.get());
                if (cf.k != ControlFlow::Normal) return cf;
            }
            return {};
        case NodeKind::ParallelGroup:
            return exec_parallel(cx, env, s);
        case NodeKind::VarDecl:
            return exec_var_decl(cx, env, s);
        case NodeKind::RefDecl:
            return exec_ref_decl(cx, env, s);
        case NodeKind::TypeDecl:
            return {};
        case NodeKind::Assign: {
            Place lp = eval_place(cx, env, s->child(0));
            *lp.slot = eval_expr(cx, env, s->child(1), lp.region);
            return {};
        }
        case NodeKind::Move: {
            Place lp = eval_place(cx, env, s->child(0));
            if (is_place_expr(cx, env, s->child(1))) {
                Place rp = eval_place(cx, env, s->child(1));
                Value v = std::move(*rp.slot);
                v.reattribute(lp.region);
                *lp.slot = std::move(v);
            } else {
                *lp.slot = eval_expr(cx, env, s->child(1), lp.region);
            }
            return {};
        }
        case NodeKind::Swap: {
            Place lp = eval_place(cx, env, s->child(0));
            Place rp = eval_place(cx, env, s->child(1));
            Value t = std::move(*lp.slot);
            *lp.slot = std::move(*rp.slot);
            lp.slot->reattribute(lp.region);
            t.reattribute(rp.region);
            *rp.slot = std::move(t);
            return {};
        }
        case NodeKind::CallStmt:
            eval_expr(cx, env, s->child(0), &env.f->region);
            return {};
        case NodeKind::Return: {
            ControlFlow cf{ControlFlow::Return, {}, false};
            if (s->child(0)) {
                if (env.f->op && env.f->op->returns_ref) {
                    env.f->ret_place = eval_place(cx, env, s->child(0));
                } else {
                    cf.val = eval_expr(cx, env, s->child(0), &env.f->region);
                }
            }
            return cf;
        }
        case NodeKind::ExitLoop:
            return {ControlFlow::ExitLoop, {}, false};
        case NodeKind::ContinueWith:
            return exec_continue(cx, env, s);
        case NodeKind::If: {
            if (eval_expr(cx, env, s->child(0), &env.f->region).truthy())
                return exec_stmt(cx, env, s->child(1));
            if (s->child(2)) return exec_stmt(cx, env, s->child(2));
            return {};
        }
        case NodeKind::LoopUntil:
            return exec_loop_until(cx, env, s);
        case NodeKind::ForThenWhile:
            return exec_for_then_while(cx, env, s);
        case NodeKind::ForInRange:
            return exec_for_in_range(cx, env, s);
        default:
            eval_expr(cx, env, s, &env.f->region);
            return {};
    }
}

ControlFlow exec_body(ExecCtx& cx, Env& env, const Node* body) {
    return exec_stmt(cx, env, body);
}

namespace {

bool place_within_array(const Place& p, ArrayRep* rep) {
    if (!rep || rep->elems.empty()) return false;
    const Value* lo = rep->elems.data();
    const Value* hi = lo + rep->elems.size();
    return p.slot >= lo && p.slot < hi;
}

// Dynamic hand-off check: a var/ref argument must not overlap another
// argument of the same call.
void check_arg_aliasing(OpImpl* op, Place* places, size_t nargs) {
    size_t n = std::min(nargs, op->params.size());
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            const ParamInfo& pi = op->params[i];
            const ParamInfo& pj = op->params[j];
            if (!mode_is_updatable(pi.mode) && !mode_is_updatable(pj.mode)) continue;
            if (mode_is_concurrent(pi.mode) || mode_is_concurrent(pj.mode)) continue;
            const Place& a = places[i];
            const Place& b = places[j];
            if (!a.slot || !b.slot) continue;
            bool overlap = a.slot == b.slot;
            auto seq_rep = [](const Value& v) -> ArrayRep* {
                return v.kind == VK::Arr || v.kind == VK::Slice ? v.arr : nullptr;
            };
            ArrayRep* ra = seq_rep(*a.slot);
            ArrayRep* rb = seq_rep(*b.slot);
            if (!overlap && ra && rb && ra == rb) {
                int64_t alo = seq_first(*a.slot), ahi = seq_last(*a.slot);
                int64_t blo = seq_first(*b.slot), bhi = seq_last(*b.slot);
                overlap = alo <= bhi && blo <= ahi;
            }
            if (!overlap && ra) overlap = place_within_array(b, ra);
            if (!overlap && rb) overlap = place_within_array(a, rb);
            if (overlap)
                fault("ALIAS_CHECK", "arguments of '" + op->name +
                                         "' overlap: parameters '" + pi.name + "' and '" +
                                         pj.name + "'");
        }
    }
}

}  // namespace

Value run_plain_body(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* args, size_t nargs,
                     Region* result_region, Master* cancel) {
    OpDef* def = const_cast<OpDef*>(op->def);
    if (!def || !def->body)
        fault("UNDECLARED", "operation '" + op->name + "' has no body");
    Frame f(result_region ? result_region : &cx.root_region);
    f.op = op;
    f.self = op->owner ? op->owner : self;
    f.result_region = result_region;
    f.vals.resize(static_cast<size_t>(def->nvals));
    f.refs.resize(static_cast<size_t>(def->nrefs));
    size_t n = std::min(nargs, op->params.size());
    for (size_t i = 0; i < n; ++i) {
        if (!op->params[i].optional && op->params[i].type && args[i].slot &&
            args[i].slot->is_null())
            fault("NULL_INTO_REQUIRED", "null passed for required parameter '" +
                                            op->params[i].name + "' of '" + op->name + "'");
        f.refs[i] = args[i];
    }
    check_arg_aliasing(op, args, nargs);
    Env env{&f, nullptr, cancel, nullptr};
    if (def->precond && !eval_expr(cx, env, def->precond, &f.region).truthy())
        fault("PRECOND_FAIL", "precondition of '" + op->name + "' failed",
              def->precond->span);
    Value result;
    if (is_stmt_kind(def->body->kind)) {
        ControlFlow cf = exec_body(cx, env, def->body);
        if (cf.k == ControlFlow::Return)
            result = std::move(cf.val);
        else if (def->result_slot >= 0)
            result = std::move(f.vals[def->result_slot]);
    } else {
        result = eval_expr(cx, env, def->body, &f.region);
    }
    if (result_region) result.reattribute(result_region);
    return result;
}

bool eval_dequeue_cond(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* args,
                       size_t nargs) {
    OpDef* def = const_cast<OpDef*>(op->def);
    if (!def || !def->queue_cond) return true;
    Frame f(&cx.root_region);
    f.op = op;
    f.self = op->owner ? op->owner : self;
    f.vals.resize(static_cast<size_t>(def->nvals));
    f.refs.resize(static_cast<size_t>(def->nrefs));
    for (size_t i = 0; i < std::min(nargs, f.refs.size()); ++i) f.refs[i] = args[i];
    Env env{&f, nullptr, nullptr, nullptr};
    return eval_expr(cx, env, def->queue_cond, &f.region).truthy();
}

namespace {

Value invoke_places(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* places, size_t nargs,
                    Region* result_region, Master* cancel) {
    if (!op) fault("UNDECLARED", "call to an unresolved operation");
    if (op->native) return op->native(cx, op, places, nargs, result_region);
    if (op->owner && op->owner->concurrent && op->controlling_param >= 0 &&
        (op->locked_shared || op->locked_excl || op->queued))
        return cx.sync->call(op, self, places, nargs, result_region);
    return run_plain_body(cx, op, self, places, nargs, result_region, cancel);
}

Place invoke_place(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* places, size_t nargs,
                   Master* cancel) {
    OpDef* def = const_cast<OpDef*>(op->def);
    if (!def || !def->body)
        fault("UNDECLARED", "operation '" + op->name + "' has no body");
    Frame f(&cx.root_region);
    f.op = op;
    f.self = op->owner ? op->owner : self;
    f.vals.resize(static_cast<size_t>(def->nvals));
    f.refs.resize(static_cast<size_t>(def->nrefs));
    for (size_t i = 0; i < std::min(nargs, f.refs.size()); ++i) f.refs[i] = places[i];
    check_arg_aliasing(op, places, nargs);
    Env env{&f, nullptr, cancel, nullptr};
    if (def->precond && !eval_expr(cx, env, def->precond, &f.region).truthy())
        fault("PRECOND_FAIL", "precondition of '" + op->name + "' failed",
              def->precond->span);
    ControlFlow cf = exec_body(cx, env, def->body);
    if (cf.k != ControlFlow::Return || !f.ret_place.slot)
        fault("NULL_DEREF", "ref operation '" + op->name + "' returned no reference");
    return f.ret_place;
}

}  // namespace

Value invoke(ExecCtx& cx, OpImpl* op, TypeDesc* self, Arg* args, size_t nargs,
             Region* result_region, Master* cancel) {
    Place places[kMaxArgs];
    for (size_t i = 0; i < nargs && i < kMaxArgs; ++i) places[i] = args[i].place;
    return invoke_places(cx, op, self, places, nargs, result_region, cancel);
}

}  // namespace psl
