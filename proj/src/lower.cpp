// Body pass: resolves names and calls inside operation bodies once per
// module (against the skeleton instantiation), allocates frame/iteration
// slots, registers call sites for per-instantiation rebinding, and runs
// the static safety checks.

#include <unordered_map>
#include <vector>

#include "sema.hpp"

namespace psl {

namespace {

void set_aux(const Node* n, void* v) { const_cast<Node*>(n)->aux = v; }
void set_slot(const Node* n, int32_t s) { const_cast<Node*>(n)->slot = s; }

bool is_stmt_body(const Node* n) {
    return n && (n->kind == NodeKind::Block || n->kind == NodeKind::ThenGroup ||
                 n->kind == NodeKind::ParallelGroup);
}

// Syntactic prescan: does this loop run iterations in parallel?
void scan_continues(const Node* n, bool in_par, int& count, bool& par_continue) {
    if (!n) return;
    switch (n->kind) {
        case NodeKind::ContinueWith:
            ++count;
            if (in_par) par_continue = true;
            return;
        case NodeKind::ForThenWhile:
        case NodeKind::ForInRange:
        case NodeKind::LoopUntil:
            return;  // continues inside belong to the inner loop
        case NodeKind::ParallelGroup:
            for (const auto& c : n->children) scan_continues(c.get(), true, count, par_continue);
            return;
        default:
            for (const auto& c : n->children) scan_continues(c.get(), in_par, count, par_continue);
            return;
    }
}

// Static access path for alias / escape analysis. Segments are component
// names, "#<n>" for constant indices, or "?" when dynamic.
struct Path {
    NameInfo* root = nullptr;
    std::vector<std::string> segs;
    bool ok = false;
};

struct ET {
    TypeDesc* t = nullptr;
    bool opt = false;
};

class Checker {
public:
    Checker(Program& p, DiagSink& diags, std::string file, ModuleSig* mod)
        : p_(p), diags_(diags), file_(std::move(file)), mod_(mod),
          self_(mod ? mod->skeleton : nullptr) {}

    void check_op(OpImpl* op, OpDef* od) {
        cur_op_ = op;
        cur_def_ = od;
        nvals_ = 0;
        nrefs_ = 0;
        loops_.clear();
        scopes_.clear();
        push_scope();

        const Node* bsig = od->body_decl ? od->body_decl : od->iface_decl;
        od->precond = bsig->child(2) ? bsig->child(2)
                                     : (od->iface_decl ? od->iface_decl->child(2) : nullptr);
        od->queue_cond = bsig->child(5) ? bsig->child(5)
                                        : (od->iface_decl ? od->iface_decl->child(5) : nullptr);
        od->body = bsig->child(3);

        // parameters: frame ref slots, names taken from the body signature
        const Node* params = bsig->child(0);
        size_t n = params ? params->children.size() : 0;
        for (size_t i = 0; i < n; ++i) {
            const Node* prm = params->children[i].get();
            NameInfo* ni = p_.new_nameinfo();
            ni->k = NameInfo::FrameRef;
            ni->slot = static_cast<int>(i);
            if (i < op->params.size()) {
                ni->type = op->params[i].type;
                ni->optional = op->params[i].optional;
                ni->mode = op->params[i].mode;
            } else {
                ni->mode = prm->mode;
            }
            ni->is_var = mode_is_updatable(ni->mode);
            ni->ref_rooted = ni->mode == ParamMode::Ref || ni->mode == ParamMode::RefVar;
            declare(prm->text, ni, prm->span);
            set_aux(prm, ni);
        }
        nrefs_ = static_cast<int>(n);

        // named result becomes a frame value slot
        const Node* rs = bsig->child(1) ? bsig->child(1)
                                        : (od->iface_decl ? od->iface_decl->child(1) : nullptr);
        if (rs && !rs->text.empty()) {
            NameInfo* ni = p_.new_nameinfo();
            ni->k = NameInfo::FrameVal;
            ni->slot = nvals_++;
            ni->type = op->result_type;
            ni->optional = op->result_optional;
            ni->is_var = true;
            declare(rs->text, ni, rs->span);
            set_aux(rs, ni);
            od->result_slot = ni->slot;
        }

        if (od->precond) expr(od->precond, p_.t_bool);
        if (od->queue_cond) {
            in_queue_cond_ = true;
            expr(od->queue_cond, p_.t_bool);
            in_queue_cond_ = false;
        }
        if (od->body) {
            if (is_stmt_body(od->body))
                stmt(od->body);
            else
                require_into(expr(od->body, op->result_type), op->result_optional,
                             od->body->span);
        }
        od->nvals = nvals_;
        od->nrefs = nrefs_;
        pop_scope();
        cur_op_ = nullptr;
        cur_def_ = nullptr;
    }

    // Component initializers and class-level consts run in a synthetic frame.
    void check_comp_inits() {
        cur_op_ = nullptr;
        cur_def_ = &mod_->comp_inits;
        nvals_ = 0;
        nrefs_ = 0;
        loops_.clear();
        scopes_.clear();
        push_scope();
        if (self_) {
            for (const auto& cs : self_->comps)
                if (cs.init) require_into(expr(cs.init, cs.type), cs.optional, cs.init->span);
        }
        mod_->comp_inits.nvals = nvals_;
        mod_->comp_inits.nrefs = nrefs_;
        pop_scope();
        cur_def_ = nullptr;
    }

    std::pair<int, int> frame_sizes() const { return {nvals_, nrefs_}; }

    void check_global(const Node* d, int index) {
        cur_def_ = nullptr;
        nvals_ = 0;
        nrefs_ = 0;
        scopes_.clear();
        push_scope();
        if (d->has(FlagVar))
            diags_.error("GLOBAL_VAR", "global variable '" + d->text +
                             "' is not allowed; use const or pass state explicitly",
                         d->span, file_);
        NameInfo* ni = global_info(d, index);
        bool opt = false;
        if (const Node* tr = d->child(0)) ni->type = resolve_tref(tr, opt);
        ni->optional = opt;
        if (const Node* init = d->child(1)) {
            ET e = expr(init, ni->type);
            if (!ni->type) ni->type = e.t;
            ni->optional = ni->optional || (!d->child(0) && e.opt);
            require_into(e, ni->optional, init->span);
        }
        pop_scope();
    }

    NameInfo* global_info(const Node* d, int index) {
        if (d->aux) return static_cast<NameInfo*>(d->aux);
        NameInfo* ni = p_.new_nameinfo();
        ni->k = NameInfo::Global;
        ni->slot = index;
        ni->is_var = d->has(FlagVar);
        ni->init = d->child(1);
        set_aux(d, ni);
        return ni;
    }

private:
    // ---- scopes ---------------------------------------------------------

    struct Scope {
        std::unordered_map<std::string, NameInfo*> names;
        std::unordered_map<std::string, const Node*> taliases;
    };

    struct LoopCtx {
        LoopInfo* li = nullptr;
        bool has_exit = false;
        bool outer_assign = false;
        Span assign_span{};
    };

    void push_scope() { scopes_.emplace_back(); }
    void pop_scope() { scopes_.pop_back(); }

    void declare(const std::string& name, NameInfo* ni, Span sp) {
        auto& top = scopes_.back().names;
        if (top.count(name)) {
            diags_.error("DUP_DECL", "duplicate declaration of '" + name + "'", sp, file_);
            return;
        }
        top[name] = ni;
    }

    NameInfo* lookup(const std::string& name) {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            auto f = it->names.find(name);
            if (f != it->names.end()) return f->second;
        }
        // class-level consts
        if (mod_ && self_) {
            for (const Node* comp : mod_->components) {
                if (comp->text != name || comp->has(FlagVar) || !comp->child(1)) continue;
                auto ci = self_->comp_index.find(name);
                NameInfo* ni = p_.new_nameinfo();
                ni->k = NameInfo::ConstExpr;
                ni->init = comp->child(1);
                if (ci != self_->comp_index.end()) {
                    ni->type = self_->comps[ci->second].type;
                    ni->optional = self_->comps[ci->second].optional;
                }
                return ni;
            }
            // value formals of the instantiation
            for (size_t i = 0; i < mod_->formals.size(); ++i) {
                const FormalParam& f = mod_->formals[i];
                if (f.is_type || f.name != name) continue;
                NameInfo* ni = p_.new_nameinfo();
                ni->k = NameInfo::ConstExpr;
                ni->slot = static_cast<int>(i);
                if (f.value_type) {
                    bool opt = false;
                    ni->type = resolve_tref(f.value_type, opt);
                    ni->optional = opt;
                }
                return ni;
            }
        }
        auto g = p_.global_index.find(name);
        if (g != p_.global_index.end()) return global_info(p_.globals[g->second], g->second);
        return nullptr;
    }

    NameInfo* alloc_local(bool is_ref) {
        NameInfo* ni = p_.new_nameinfo();
        if (!loops_.empty()) {
            LoopInfo* li = loops_.back().li;
            ni->k = is_ref ? NameInfo::IterRef : NameInfo::IterVal;
            ni->loop_id = li->id;
            ni->slot = is_ref ? li->nrefs++ : li->nvals++;
        } else {
            ni->k = is_ref ? NameInfo::FrameRef : NameInfo::FrameVal;
            ni->slot = is_ref ? nrefs_++ : nvals_++;
        }
        return ni;
    }

    // ---- type references -------------------------------------------------

    TypeDesc* resolve_tref(const Node* tr, bool& opt) {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            auto f = it->taliases.find(tr->text);
            if (f != it->taliases.end()) {
                TypeDesc* t = resolve_tref(f->second, opt);
                opt = opt || tr->has(FlagOptional);
                return t;
            }
        }
        TypeEnv env{&p_, mod_, self_, &diags_, file_};
        return resolve_type(env, tr, opt);
    }

    // ---- site registration ----------------------------------------------

    int type_site_of(TypeDesc* t) {
        for (size_t i = 0; i < mod_->type_sites.size(); ++i)
            if (mod_->type_sites[i] == t) return static_cast<int>(i);
        mod_->type_sites.push_back(t);
        return static_cast<int>(mod_->type_sites.size()) - 1;
    }

    void bind_call(CallInfo* ci, TypeDesc* host, const std::string& name, int arity,
                   OpImpl* sop) {
        if (sop) {
            ci->callee_reads_only = true;
            for (const auto& prm : sop->params)
                if (mode_is_updatable(prm.mode)) ci->callee_reads_only = false;
            ci->callee_interp = !sop->native;
        }
        if (mod_) {
            ci->kind = CallKind::Site;
            int ts = host == self_ ? -1 : type_site_of(host);
            for (size_t i = 0; i < mod_->call_sites.size(); ++i) {
                const CallSite& cs = mod_->call_sites[i];
                if (cs.type_site == ts && cs.op == name && cs.arity == arity) {
                    ci->site = static_cast<int>(i);
                    return;
                }
            }
            mod_->call_sites.push_back({ts, name, arity});
            ci->site = static_cast<int>(mod_->call_sites.size()) - 1;
        } else {
            ci->kind = CallKind::Direct;
            ci->target = sop;
            ci->name = name;
        }
    }

    void set_expect(CallInfo* ci, TypeDesc* t) {
        if (!t) return;
        if (mod_)
            ci->expect_site = type_site_of(t);
        else
            ci->expect = t;
    }

    // ---- expressions -----------------------------------------------------

    bool intlike(TypeDesc* t) const {
        return t && (t->builtin == BK::UnivInt || t->builtin == BK::Integer);
    }
    bool scalar_builtin(TypeDesc* t) const {
        if (!t) return false;
        switch (t->builtin) {
            case BK::UnivInt:
            case BK::UnivReal:
            case BK::UnivChar:
            case BK::UnivStr:
            case BK::UnivEnum:
            case BK::Boolean:
            case BK::Ordering:
            case BK::Integer:
            case BK::Range:
                return true;
            default:
                return false;
        }
    }

    void require_into(ET src, bool dst_opt, Span sp) {
        if (src.t == p_.t_null && !dst_opt)
            diags_.error("OPT_NULL", "null value for a non-optional target", sp, file_);
    }

    ET expr(const Node* e, TypeDesc* want = nullptr, bool want_opt = true) {
        if (!e) return {};
        switch (e->kind) {
            case NodeKind::IntLit:
                if (want && want->builtin == BK::Integer &&
                    (e->ival < want->range_lo || e->ival > want->range_hi))
                    diags_.error("LIT_PRECOND_FAIL",
                                 "literal " + std::to_string(e->ival) + " outside " +
                                     want->key,
                                 e->span, file_);
                return {intlike(want) ? want : p_.t_univ_int, false};
            case NodeKind::RealLit:
                return {p_.t_univ_real, false};
            case NodeKind::CharLit:
                return {p_.t_univ_char, false};
            case NodeKind::StrLit:
                return {p_.t_univ_str, false};
            case NodeKind::EnumLit:
                return {(e->text == "#true" || e->text == "#false") ? p_.t_bool
                                                                    : p_.t_univ_enum,
                        false};
            case NodeKind::NullLit:
                if (!want_opt)
                    diags_.error("OPT_NULL", "null value for a non-optional target", e->span,
                                 file_);
                return {p_.t_null, true};
            case NodeKind::Name:
                return name_expr(e);
            case NodeKind::Selected:
                return selected(e);
            case NodeKind::Attribute:
                expr(e->child(0));
                return {p_.t_univ_int, false};
            case NodeKind::Qualified:
                return qualified_call(e, nullptr, want);
            case NodeKind::CallExpr:
                return call_expr(e, want);
            case NodeKind::Binary:
                return binary(e, want);
            case NodeKind::Unary: {
                ET a = expr(e->child(0), want);
                CallInfo* ci = p_.new_callinfo();
                ci->kind = CallKind::Builtin;
                set_aux(e, ci);
                if (e->text == "not") return {p_.t_bool, false};
                return {a.t ? a.t : p_.t_univ_int, false};
            }
            case NodeKind::IsNull:
            case NodeKind::NotNull: {
                ET a = expr(e->child(0));
                if (a.t && !a.opt && a.t->builtin != BK::NullType &&
                    a.t->builtin != BK::FormalType)
                    diags_.warning("OPT_TEST_CONST",
                                   "null test on a non-optional expression is constant",
                                   e->span, file_);
                return {p_.t_bool, false};
            }
            case NodeKind::InSet:
                return in_set(e);
            case NodeKind::ExprBlock: {
                push_scope();
                // the desugared-aggregate accumulator takes the target type
                TypeDesc* saved = agg_want_;
                bool saved_opt = agg_want_opt_;
                agg_want_ = want;
                agg_want_opt_ = want_opt;
                for (size_t i = 0; i + 1 < e->children.size(); ++i)
                    stmt(e->children[i].get());
                agg_want_ = saved;
                agg_want_opt_ = saved_opt;
                ET r = e->children.empty()
                           ? ET{}
                           : expr(e->children.back().get(), want, want_opt);
                pop_scope();
                return r;
            }
            case NodeKind::Aggregate:
                return paren_aggregate(e, want);
            default:
                diags_.error("SYNTAX", "unexpected expression form", e->span, file_);
                return {};
        }
    }

    ET name_expr(const Node* e) {
        if (e->has(FlagOpName)) {
            diags_.error("UNDECLARED", "operator name '" + e->text + "' used as a value",
                         e->span, file_);
            return {};
        }
        NameInfo* ni = lookup(e->text);
        if (!ni) {
            diags_.error("UNDECLARED", "undeclared name '" + e->text + "'", e->span, file_);
            return {};
        }
        if (ni->k == NameInfo::Global && ni->is_var)
            diags_.error("GLOBAL_VAR", "reference to global variable '" + e->text + "'",
                         e->span, file_);
        set_aux(e, ni);
        return {ni->type, ni->optional};
    }

    ET selected(const Node* e) {
        ET base = expr(e->child(0));
        if (!base.t) return {};
        if (base.t->builtin == BK::FormalType) {
            diags_.error("UNDECLARED",
                         "component '" + e->text + "' of a formal type is not visible",
                         e->span, file_);
            return {};
        }
        auto it = base.t->comp_index.find(e->text);
        if (it == base.t->comp_index.end()) {
            diags_.error("UNDECLARED",
                         "'" + e->text + "' is not a component of " + base.t->key, e->span,
                         file_);
            return {};
        }
        set_slot(e, it->second);
        const CompSlot& cs = base.t->comps[it->second];
        return {cs.type, cs.optional};
    }

    // Type::op(...) or a bare Type::op reference (zero-argument call).
    ET qualified_call(const Node* q, const Node* call, TypeDesc* want) {
        bool opt = false;
        TypeDesc* host = resolve_tref(q->child(0), opt);
        if (!host) return {};
        size_t nargs = call ? call->children.size() - 1 : 0;
        OpImpl* sop = host->find_op_n(q->text, static_cast<int>(nargs));
        CallInfo* ci = p_.new_callinfo();
        const Node* site_node = call ? call : q;
        set_aux(site_node, ci);
        if (!sop && host->builtin != BK::FormalType) {
            diags_.error("UNDECLARED",
                         "no operation '" + q->text + "' with " + std::to_string(nargs) +
                             " arguments in " + host->key,
                         q->span, file_);
            return {};
        }
        bind_call(ci, host, q->text, static_cast<int>(nargs), sop);
        if (call) return finish_call(call, ci, sop, 1, want);
        return sop ? ET{sop->result_type, sop->result_optional} : ET{};
    }

    ET call_expr(const Node* e, TypeDesc* want) {
        const Node* callee = e->child(0);
        size_t nargs = e->children.size() - 1;
        if (callee->kind == NodeKind::Qualified) return qualified_call(callee, e, want);
        if (callee->kind == NodeKind::Selected) return method_call(e, want);
        if (callee->kind != NodeKind::Name) {
            diags_.error("SYNTAX", "uncallable expression", callee->span, file_);
            for (size_t i = 1; i < e->children.size(); ++i) expr(arg_value(e->child(i)));
            return {};
        }
        const std::string& name = callee->text;

        // first-argument dispatch needs the leading argument's static type
        ET a0;
        bool a0_checked = false;
        if (nargs >= 1) {
            a0 = expr(arg_value(e->child(1)));
            a0_checked = true;
        }
        CallInfo* ci = p_.new_callinfo();
        set_aux(e, ci);

        TypeDesc* host = nullptr;
        OpImpl* sop = nullptr;
        if (a0.t && a0.t->builtin != BK::NullType) {
            sop = a0.t->find_op_n(name, static_cast<int>(nargs));
            if (sop) host = a0.t;
            if (!sop && a0.t->builtin == BK::FormalType) host = a0.t;  // late-bound
        }
        if (!host && mod_ && self_) {
            sop = self_->find_op_n(name, static_cast<int>(nargs));
            if (sop) host = self_;
        }
        if (!host && !callee->has(FlagOpName)) {
            auto fit = p_.func_by_name.find(name);
            if (fit != p_.func_by_name.end() &&
                (fit->second->arity == static_cast<int>(nargs) || fit->second->native)) {
                ci->kind = CallKind::Direct;
                ci->target = fit->second;
                ci->name = name;
                return finish_call(e, ci, fit->second, a0_checked ? 2 : 1, want);
            }
        }
        if (!host && want) {
            sop = want->find_op_n(name, static_cast<int>(nargs));
            if (sop) host = want;
            if (!sop && want->builtin == BK::FormalType) host = want;
        }
        if (!host) {
            call_failure(name, nargs, e->span);
            for (size_t i = 2; i < e->children.size(); ++i) expr(arg_value(e->child(i)));
            return {};
        }
        bind_call(ci, host, name, static_cast<int>(nargs), sop);
        if (host == want) set_expect(ci, want);
        return finish_call(e, ci, sop, a0_checked ? 2 : 1, want);
    }

    // X.Op(args) sugar for Op(X, args).
    ET method_call(const Node* e, TypeDesc* want) {
        (void)want;
        const Node* callee = e->child(0);
        const Node* recv = callee->child(0);
        size_t nargs = e->children.size();  // receiver + written args
        ET a0 = expr(recv);
        CallInfo* ci = p_.new_callinfo();
        set_aux(e, ci);
        TypeDesc* host = nullptr;
        OpImpl* sop = nullptr;
        if (a0.t) {
            sop = a0.t->find_op_n(callee->text, static_cast<int>(nargs));
            if (sop || a0.t->builtin == BK::FormalType) host = a0.t;
        }
        if (!host) {
            call_failure(callee->text, nargs, e->span);
            for (size_t i = 1; i < e->children.size(); ++i) expr(arg_value(e->child(i)));
            return {};
        }
        bind_call(ci, host, callee->text, static_cast<int>(nargs), sop);
        // argument slots shift by one: receiver is parameter 0
        if (sop) {
            for (size_t i = 1; i < e->children.size(); ++i)
                bind_arg_slot(e->child(i), sop, static_cast<int>(i));
            check_args(e, sop, 1, /*shift=*/1);
            handoff_check(e, sop, /*shift=*/1);
        } else {
            for (size_t i = 1; i < e->children.size(); ++i) {
                set_slot(e->child(i), static_cast<int>(i));
                expr(arg_value(e->child(i)));
            }
        }
        if (in_queue_cond_ && sop) queue_purity(sop, e->span);
        return sop ? ET{sop->result_type, sop->result_optional} : ET{};
    }

    void call_failure(const std::string& name, size_t nargs, Span sp) {
        std::string code = "UNDECLARED";
        if (name == "[]" || name == "|=" || name == "+=" || name == "-=" || name == "<|=")
            code = "AGG_NO_OPS";
        else if (name == "index_set" || name == "Remove_Any" || name == "indexing")
            code = "ITER_NO_OPS";
        diags_.error(code,
                     "no applicable operation '" + name + "' with " +
                         std::to_string(nargs) + " arguments",
                     sp, file_);
    }

    static const Node* arg_value(const Node* a) {
        return a->kind == NodeKind::NamedArg ? a->child(0) : a;
    }

    void bind_arg_slot(const Node* a, OpImpl* sop, int pos) {
        if (a->kind == NodeKind::NamedArg) {
            for (size_t i = 0; i < sop->params.size(); ++i) {
                if (sop->params[i].name == a->text) {
                    set_slot(a, static_cast<int>(i));
                    return;
                }
            }
            diags_.error("UNDECLARED",
                         "'" + a->text + "' is not a parameter of '" + sop->name + "'",
                         a->span, file_);
            set_slot(a, pos);
        } else {
            set_slot(a, pos);
        }
    }

    // Check remaining arguments with parameter types; first_child is the
    // index of the first unchecked argument child.
    void check_args(const Node* e, OpImpl* sop, size_t first_child, int shift) {
        for (size_t i = first_child; i < e->children.size(); ++i) {
            const Node* a = e->children[i].get();
            int slot = a->slot >= 0 ? a->slot : static_cast<int>(i) - 1 + shift;
            TypeDesc* pt = nullptr;
            bool popt = true;
            if (sop && slot >= 0 && slot < static_cast<int>(sop->params.size())) {
                pt = sop->params[slot].type;
                popt = sop->params[slot].optional;
            }
            ET av = expr(arg_value(a), pt, popt);
            require_into(av, popt, a->span);
        }
        // a previously-checked first argument never gets a want type; its
        // null-ness is still diagnosed at run time
    }

    ET finish_call(const Node* e, CallInfo* ci, OpImpl* sop, size_t first_child,
                   TypeDesc* want) {
        (void)want;
        // assign parameter slots to every argument
        if (sop) {
            for (size_t i = 1; i < e->children.size(); ++i)
                bind_arg_slot(e->child(i), sop, static_cast<int>(i) - 1);
        } else {
            for (size_t i = 1; i < e->children.size(); ++i)
                set_slot(e->child(i), static_cast<int>(i) - 1);
        }
        check_args(e, sop, first_child, 0);
        if (sop) {
            handoff_check(e, sop, 0);
            if (in_queue_cond_) queue_purity(sop, e->span);
            return {sop->result_type, sop->result_optional};
        }
        (void)ci;
        return {};
    }

    void queue_purity(OpImpl* sop, Span sp) {
        for (const auto& prm : sop->params)
            if (mode_is_updatable(prm.mode)) {
                diags_.error("SYNC_UNSUPPORTED",
                             "dequeue condition calls '" + sop->name +
                                 "', which updates an argument",
                             sp, file_);
                return;
            }
    }

    // An operand may be evaluated on a sibling picothread when every call
    // in its subtree is bound and reads its arguments only; worth doing
    // only when the subtree contains an interpreted call.
    bool spawn_safe(const Node* e, bool& has_call) {
        if (!e) return true;
        switch (e->kind) {
            case NodeKind::CallExpr:
            case NodeKind::Qualified:
            case NodeKind::Binary:
            case NodeKind::Unary: {
                CallInfo* ci = static_cast<CallInfo*>(e->aux);
                if (ci && ci->kind != CallKind::Builtin) {
                    if (ci->kind == CallKind::Dynamic) return false;
                    if (!ci->callee_reads_only) return false;
                    if (ci->callee_interp) has_call = true;
                }
                break;
            }
            default:
                break;
        }
        for (const auto& c : e->children)
            if (c && !spawn_safe(c.get(), has_call)) return false;
        return true;
    }

    ET binary(const Node* e, TypeDesc* want) {
        const std::string& op = e->text;
        if (op == "and" || op == "or") {
            expr(e->child(0), p_.t_bool);
            expr(e->child(1), p_.t_bool);
            CallInfo* ci = p_.new_callinfo();
            ci->kind = CallKind::Builtin;
            set_aux(e, ci);
            return {p_.t_bool, false};
        }
        if (op == "..") {
            ET lo = expr(e->child(0));
            expr(e->child(1));
            CallInfo* ci = p_.new_callinfo();
            ci->kind = CallKind::Builtin;
            set_aux(e, ci);
            Binding eb;
            eb.type = intlike(lo.t) ? lo.t : p_.t_univ_int;
            return {make_range_type(p_, eb), false};
        }
        TypeDesc* aw = (op != "=?" && op != "|") ? want : nullptr;
        ET l = expr(e->child(0), aw);
        ET r = expr(e->child(1), op == "=?" ? l.t : aw);
        CallInfo* ci = p_.new_callinfo();
        set_aux(e, ci);
        {
            bool lc = false, rc = false;
            if (spawn_safe(e->child(0), lc) && lc && spawn_safe(e->child(1), rc) && rc)
                ci->spawn_mask = 1;
        }
        TypeDesc* host = l.t && !scalar_builtin(l.t) && l.t->builtin != BK::NullType
                             ? l.t
                             : (r.t && !scalar_builtin(r.t) && r.t->builtin != BK::NullType
                                    ? r.t
                                    : nullptr);
        if (host && host->builtin != BK::SetType && host->builtin != BK::BasicArray) {
            OpImpl* sop = host->find_op_n(op, 2);
            if (sop || host->builtin == BK::FormalType) {
                bind_call(ci, host, op, 2, sop);
                if (sop) return {sop->result_type, sop->result_optional};
                return op == "=?" ? ET{p_.t_ordering, false} : ET{};
            }
        }
        ci->kind = CallKind::Builtin;
        if (op == "=?") return {p_.t_ordering, false};
        if (op == "|") return {l.t ? l.t : p_.t_univ_str, false};
        return {l.t ? l.t : r.t, false};
    }

    ET in_set(const Node* e) {
        expr(e->child(0));
        const Node* rhs = e->child(1);
        if (rhs->kind == NodeKind::Aggregate && !rhs->has(FlagParenAgg)) {
            for (const auto& el : rhs->children) expr(el.get());
            return {p_.t_bool, false};
        }
        ET rt = expr(rhs);
        // user containers dispatch to their own "in" operator
        if (rt.t && rt.t->module) {
            OpImpl* sop = rt.t->find_op_n("in", 2);
            if (!sop && rt.t->builtin != BK::FormalType) {
                diags_.error("UNDECLARED", "no operation 'in' on " + rt.t->key,
                             e->span, file_);
                return {p_.t_bool, false};
            }
            CallInfo* ci = p_.new_callinfo();
            set_aux(e, ci);
            bind_call(ci, rt.t, "in", 2, sop);
        }
        return {p_.t_bool, false};
    }

    ET paren_aggregate(const Node* e, TypeDesc* want) {
        TypeDesc* t = nullptr;
        if (!e->text.empty()) {
            // a bare module qualifier takes its actuals from the context
            if (want && want->module &&
                (want->module->name == e->text || want->module->full == e->text)) {
                t = want;
            } else {
                Node tr(NodeKind::TypeRef, e->span);
                tr.text = e->text;
                bool opt = false;
                t = resolve_tref(&tr, opt);
            }
        } else {
            t = want;
        }
        if (!t || t->builtin == BK::FormalType) {
            if (!t)
                diags_.error("UNDECLARED", "aggregate has no determinable type", e->span,
                             file_);
            else
                diags_.error("AGG_NO_OPS", "aggregate of a formal type", e->span, file_);
            for (const auto& el : e->children) expr(arg_value(el.get()));
            return {t, false};
        }
        CallInfo* ci = p_.new_callinfo();
        set_aux(e, ci);
        set_expect(ci, t);
        int pos = 0;
        for (const auto& elp : e->children) {
            const Node* el = elp.get();
            int slot = pos;
            if (el->kind == NodeKind::NamedArg) {
                auto it = t->comp_index.find(el->text);
                if (it == t->comp_index.end()) {
                    diags_.error("UNDECLARED",
                                 "'" + el->text + "' is not a component of " + t->key,
                                 el->span, file_);
                    slot = -1;
                } else {
                    slot = it->second;
                }
            } else {
                ++pos;
            }
            set_slot(el, slot);
            TypeDesc* ct = nullptr;
            bool copt = true;
            if (slot >= 0 && slot < static_cast<int>(t->comps.size())) {
                ct = t->comps[slot].type;
                copt = t->comps[slot].optional;
            }
            require_into(expr(arg_value(el), ct, copt), copt, el->span);
        }
        return {t, false};
    }

    // ---- statements ------------------------------------------------------

    void stmt(const Node* s) {
        if (!s) return;
        switch (s->kind) {
            case NodeKind::Block:
                push_scope();
                for (const auto& c : s->children) stmt(c.get());
                pop_scope();
                return;
            case NodeKind::ThenGroup:
                push_scope();
                for (const auto& c : s->children)
                    for (const auto& g : c->children) stmt(g.get());
                pop_scope();
                return;
            case NodeKind::ParallelGroup:
                for (const auto& c : s->children) {
                    push_scope();
                    stmt(c.get());
                    pop_scope();
                }
                return;
            case NodeKind::VarDecl:
                var_decl(s);
                return;
            case NodeKind::RefDecl:
                ref_decl(s);
                return;
            case NodeKind::TypeDecl:
                scopes_.back().taliases[s->text] = s->child(0);
                return;
            case NodeKind::Assign:
                assign(s);
                return;
            case NodeKind::Move: {
                ET lhs = expr(s->child(0));
                ET rhs = expr(s->child(1), lhs.t);
                if (!rhs.opt && rhs.t && rhs.t->builtin != BK::NullType)
                    diags_.error("OPT_NULL",
                                 "move source must be optional; it is set to null",
                                 s->child(1)->span, file_);
                note_update(s->child(0), s->span);
                return;
            }
            case NodeKind::Swap:
                expr(s->child(0));
                expr(s->child(1));
                note_update(s->child(0), s->span);
                note_update(s->child(1), s->span);
                return;
            case NodeKind::CallStmt:
                expr(s->child(0));
                return;
            case NodeKind::Return: {
                for (auto& lc : loops_) lc.has_exit = true;
                TypeDesc* rt = cur_op_ ? cur_op_->result_type : nullptr;
                bool ropt = cur_op_ ? cur_op_->result_optional : true;
                if (s->child(0)) {
                    ET v = expr(s->child(0), rt, ropt);
                    require_into(v, ropt, s->span);
                    if (cur_op_ && cur_op_->returns_ref) {
                        Path pa = path_of(s->child(0));
                        if (!pa.ok || !pa.root || !pa.root->ref_rooted)
                            diags_.error("REF_ESCAPE",
                                         "ref result must be rooted at a ref parameter",
                                         s->span, file_);
                    }
                }
                return;
            }
            case NodeKind::ExitLoop:
                if (!loops_.empty()) loops_.back().has_exit = true;
                return;
            case NodeKind::ContinueWith:
                continue_with(s);
                return;
            case NodeKind::If: {
                expr(s->child(0), p_.t_bool);
                push_scope();
                stmt(s->child(1));
                pop_scope();
                if (s->child(2)) {
                    push_scope();
                    stmt(s->child(2));
                    pop_scope();
                }
                return;
            }
            case NodeKind::LoopUntil:
                loop_until(s);
                return;
            case NodeKind::ForThenWhile:
                for_then_while(s);
                return;
            case NodeKind::ForInRange:
                for_in_range(s);
                return;
            default:
                expr(s);
                return;
        }
    }

    // matches the accumulator seed produced for a bracket aggregate
    static bool is_empty_agg_init(const Node* init) {
        return init && init->kind == NodeKind::CallExpr && init->children.size() == 1 &&
               init->child(0) && init->child(0)->kind == NodeKind::Name &&
               init->child(0)->text == "[]";
    }

    void var_decl(const Node* s) {
        bool opt = false;
        TypeDesc* dt = nullptr;
        if (const Node* tr = s->child(0)) dt = resolve_tref(tr, opt);
        if (!dt && agg_want_ && !s->text.empty() && s->text[0] == '@' &&
            is_empty_agg_init(s->child(1))) {
            dt = agg_want_;
            opt = agg_want_opt_;
            agg_want_ = nullptr;
        }
        ET iv;
        if (const Node* init = s->child(1)) {
            iv = expr(init, dt, dt ? opt : true);
            if (dt) require_into(iv, opt, init->span);
        }
        if (const Node* anchor = s->child(2)) expr(anchor);
        NameInfo* ni = alloc_local(/*is_ref=*/false);
        ni->type = dt ? dt : iv.t;
        ni->optional = dt ? opt : iv.opt;
        ni->is_var = s->has(FlagVar);
        declare(s->text, ni, s->span);
        set_aux(s, ni);
    }

    void ref_decl(const Node* s) {
        ET base = expr(s->child(0));
        NameInfo* ni = alloc_local(/*is_ref=*/true);
        // backing value slot for initializers that are not places (slices)
        ni->temp_slot = ni->k == NameInfo::IterRef ? loops_.back().li->nvals++ : nvals_++;
        ni->type = base.t;
        ni->optional = base.opt;
        ni->is_var = true;
        Path pa = path_of(s->child(0));
        ni->ref_rooted = pa.ok && pa.root && pa.root->ref_rooted;
        declare(s->text, ni, s->span);
        set_aux(s, ni);
    }

    void assign(const Node* s) {
        ET lhs = expr(s->child(0));
        ET rhs = expr(s->child(1), lhs.t, lhs.opt);
        require_into(rhs, lhs.opt, s->span);
        note_update(s->child(0), s->span);
    }

    // Track updates of names declared outside the innermost loop for the
    // parallel-loop exit/update check.
    void note_update(const Node* lhs, Span sp) {
        if (loops_.empty()) return;
        Path pa = path_of(lhs);
        if (!pa.ok || !pa.root) return;
        NameInfo* root = pa.root;
        if (root->type && root->type->concurrent) return;
        LoopCtx& lc = loops_.back();
        bool inside = (root->k == NameInfo::IterVal || root->k == NameInfo::IterRef) &&
                      root->loop_id == lc.li->id;
        if (!inside && !lc.outer_assign) {
            lc.outer_assign = true;
            lc.assign_span = sp;
        }
    }

    void continue_with(const Node* s) {
        LoopCtx* target = loops_.empty() ? nullptr : &loops_.back();
        if (!target) {
            diags_.error("SYNTAX", "continue outside of a loop", s->span, file_);
            return;
        }
        LoopInfo* li = target->li;
        set_aux(s, li);
        if (s->children.size() > 1)
            diags_.error("UNDECLARED", "loop has a single iteration variable", s->span,
                         file_);
        for (const auto& bp : s->children) {
            const Node* b = bp.get();
            if (b->kind == NodeKind::NamedArg) {
                if (li->var_name != b->text)
                    diags_.error("UNDECLARED",
                                 "'" + b->text + "' is not the loop variable", b->span,
                                 file_);
                set_slot(b, 0);
            }
            ET v = expr(arg_value(b), li->var ? li->var->type : nullptr);
            require_into(v, li->var ? li->var->optional : true, b->span);
        }
    }

    LoopInfo* open_loop(const Node* s) {
        LoopInfo* li = p_.new_loopinfo();
        li->id = static_cast<int>(p_.loopinfos.size()) - 1;
        int count = 0;
        bool par_continue = false;
        const Node* body = s->kind == NodeKind::ForThenWhile ? s->child(3) : s->child(1);
        scan_continues(body, false, count, par_continue);
        li->parallel = par_continue || count >= 2;
        set_aux(s, li);
        loops_.push_back({li, false, false, Span{}});
        push_scope();
        return li;
    }

    void close_loop(const Node* s) {
        LoopCtx lc = loops_.back();
        pop_scope();
        loops_.pop_back();
        if (lc.li->parallel && lc.has_exit && lc.outer_assign)
            diags_.error("LOOP_EXIT_UPDATE",
                         "parallel loop both exits early and updates state declared "
                         "outside the loop",
                         lc.assign_span.line ? lc.assign_span : s->span, file_);
    }

    void loop_until(const Node* s) {
        expr(s->child(0), p_.t_bool);
        open_loop(s);
        stmt(s->child(1));
        close_loop(s);
    }

    void for_then_while(const Node* s) {
        bool by_ref = s->has(FlagRef);
        ET init = expr(s->child(0));
        LoopInfo* li = open_loop(s);
        NameInfo* var = p_.new_nameinfo();
        var->k = by_ref ? NameInfo::IterRef : NameInfo::IterVal;
        var->loop_id = li->id;
        var->slot = by_ref ? li->nrefs++ : li->nvals++;
        if (by_ref) var->temp_slot = li->nvals++;
        var->type = init.t;
        var->optional = init.opt;
        var->is_var = true;
        if (by_ref) {
            Path pa = path_of(s->child(0));
            var->ref_rooted = pa.ok && pa.root && pa.root->ref_rooted;
        }
        declare(s->text, var, s->span);
        li->var = var;
        li->var_is_ref = by_ref;
        li->var_name = s->text;
        if (s->child(1)) {
            ET nxt = expr(s->child(1), var->type);
            var->optional = var->optional || nxt.opt;
        }
        if (s->child(2)) expr(s->child(2), p_.t_bool);
        stmt(s->child(3));
        close_loop(s);
    }

    void for_in_range(const Node* s) {
        ET range = expr(s->child(0));
        LoopInfo* li = open_loop(s);
        NameInfo* var = p_.new_nameinfo();
        var->k = NameInfo::IterVal;
        var->loop_id = li->id;
        var->slot = li->nvals++;
        var->type = range.t && range.t->builtin == BK::Range && range.t->elem.type
                        ? range.t->elem.type
                        : p_.t_univ_int;
        var->is_var = false;
        declare(s->text, var, s->span);
        li->var = var;
        li->var_name = s->text;
        stmt(s->child(1));
        close_loop(s);
    }

    // ---- alias / escape paths -------------------------------------------

    Path path_of(const Node* e) {
        Path pa;
        if (!e) return pa;
        switch (e->kind) {
            case NodeKind::Name:
                if (e->aux) {
                    pa.root = static_cast<NameInfo*>(e->aux);
                    pa.ok = true;
                }
                return pa;
            case NodeKind::Selected: {
                pa = path_of(e->child(0));
                if (pa.ok) pa.segs.push_back(e->text);
                return pa;
            }
            case NodeKind::CallExpr: {
                const Node* callee = e->child(0);
                if (callee->kind == NodeKind::Name && e->children.size() >= 2) {
                    const std::string& n = callee->text;
                    if (n == "indexing") {
                        pa = path_of(arg_value(e->child(1)));
                        if (pa.ok) {
                            const Node* idx =
                                e->children.size() >= 3 ? arg_value(e->child(2)) : nullptr;
                            pa.segs.push_back(idx && idx->kind == NodeKind::IntLit
                                                  ? "#" + std::to_string(idx->ival)
                                                  : "?");
                        }
                        return pa;
                    }
                    if (n == "slicing") {
                        pa = path_of(arg_value(e->child(1)));
                        if (pa.ok) pa.segs.push_back("?");
                        return pa;
                    }
                }
                // a ref-returning call roots at its first argument
                if (e->aux) {
                    CallInfo* ci = static_cast<CallInfo*>(e->aux);
                    if (ci->target && ci->target->returns_ref && e->children.size() >= 2) {
                        pa = path_of(arg_value(e->child(1)));
                        if (pa.ok) pa.segs.push_back("?");
                        return pa;
                    }
                }
                return pa;
            }
            default:
                return pa;
        }
    }

    // Static overlap of var/ref arguments (hand-off rule).
    void handoff_check(const Node* e, OpImpl* sop, int shift) {
        struct AP {
            Path pa;
            bool upd = false;
            Span sp{};
        };
        std::vector<AP> aps;
        auto consider = [&](const Node* a, int slot) {
            if (slot < 0 || slot >= static_cast<int>(sop->params.size())) return;
            const ParamInfo& pi = sop->params[slot];
            if (mode_is_concurrent(pi.mode)) return;
            AP ap;
            ap.upd = mode_is_updatable(pi.mode);
            ap.pa = path_of(arg_value(a));
            ap.sp = a->span;
            if (ap.pa.ok && ap.pa.root) aps.push_back(std::move(ap));
        };
        if (shift == 1 && e->child(0) && e->child(0)->kind == NodeKind::Selected)
            consider(e->child(0)->child(0), 0);
        for (size_t i = 1; i < e->children.size(); ++i)
            consider(e->child(i), e->child(i)->slot);
        for (size_t i = 0; i < aps.size(); ++i) {
            for (size_t j = i + 1; j < aps.size(); ++j) {
                if (!aps[i].upd && !aps[j].upd) continue;
                if (aps[i].pa.root != aps[j].pa.root) continue;
                if (aps[i].pa.root->type && aps[i].pa.root->type->concurrent) continue;
                const auto& s1 = aps[i].pa.segs;
                const auto& s2 = aps[j].pa.segs;
                size_t n = std::min(s1.size(), s2.size());
                bool definite = true;
                for (size_t k = 0; k < n; ++k) {
                    if (s1[k] == "?" || s2[k] == "?") {
                        definite = false;  // left to the runtime check
                        break;
                    }
                    if (s1[k] != s2[k]) {
                        definite = false;
                        n = 0;  // provably disjoint
                        break;
                    }
                }
                if (definite)
                    diags_.error("HANDOFF_ALIAS",
                                 "arguments overlap: a var or ref argument must not "
                                 "alias another argument",
                                 aps[j].sp, file_);
            }
        }
    }

    Program& p_;
    DiagSink& diags_;
    std::string file_;
    ModuleSig* mod_;
    TypeDesc* self_;
    OpImpl* cur_op_ = nullptr;
    OpDef* cur_def_ = nullptr;
    int nvals_ = 0;
    int nrefs_ = 0;
    bool in_queue_cond_ = false;
    TypeDesc* agg_want_ = nullptr;
    bool agg_want_opt_ = false;
    std::vector<Scope> scopes_;
    std::vector<LoopCtx> loops_;
};

}  // namespace

void check_module_bodies(Program& p, ModuleSig* m, DiagSink& diags,
                         const std::string& file) {
    if (!m->skeleton) return;
    Checker ck(p, diags, file, m);
    ck.check_comp_inits();
    for (auto& od : m->ops) {
        if (od.rename_target || !od.body_decl) continue;
        OpImpl* op = nullptr;
        for (auto& o : m->skeleton->ops)
            if (o->def == &od) {
                op = o.get();
                break;
            }
        if (op) ck.check_op(op, &od);
    }
}

void declare_func_sig(Program& p, OpImpl* fn, OpDef* def, DiagSink& diags) {
    if (fn->native || !fn->decl) return;
    TypeEnv env{&p, nullptr, nullptr, &diags, def->file};
    const Node* d = fn->decl;
    if (const Node* params = d->child(0)) {
        for (const auto& prm : params->children) {
            ParamInfo pi;
            pi.name = prm->text;
            pi.mode = prm->mode;
            pi.optional = prm->has(FlagOptional);
            if (const Node* tr = prm->child(0)) {
                bool opt = false;
                pi.type = resolve_type(env, tr, opt);
                pi.optional |= opt;
            }
            fn->params.push_back(std::move(pi));
        }
    }
    fn->has_precond = d->child(2) != nullptr;
    if (const Node* rs = d->child(1)) {
        fn->returns_ref = rs->has(FlagRef);
        fn->has_named_result = !rs->text.empty();
        if (const Node* tr = rs->child(0)) {
            bool opt = false;
            fn->result_type = resolve_type(env, tr, opt);
            fn->result_optional = opt || rs->has(FlagOptional);
        }
    }
}

void check_func_body(Program& p, OpImpl* fn, OpDef* def, DiagSink& diags,
                     const std::string& file) {
    if (fn->native || !fn->decl) return;
    Checker ck(p, diags, file, nullptr);
    ck.check_op(fn, def);
}

void check_globals(Program& p, DiagSink& diags) {
    p.global_frame_sizes.resize(p.globals.size());
    for (size_t i = 0; i < p.globals.size(); ++i) {
        const Node* d = p.globals[i];
        Checker ck(p, diags, p.global_files[i], nullptr);
        ck.check_global(d, static_cast<int>(i));
        p.global_frame_sizes[i] = ck.frame_sizes();
    }
}

}  // namespace psl
