#include "sema.hpp"

#include <algorithm>

#include "pretty.hpp"

namespace psl {

namespace {

std::vector<std::string> split_path(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t p = s.find("::", pos);
        if (p == std::string::npos) {
            out.push_back(s.substr(pos));
            break;
        }
        out.push_back(s.substr(pos, p - pos));
        pos = p + 2;
    }
    return out;
}

// Constant folding for static value actuals (Integer ranges).
bool const_eval(const Node* e, __int128& out) {
    if (!e) return false;
    switch (e->kind) {
        case NodeKind::IntLit:
            out = e->ival;
            return true;
        case NodeKind::Unary: {
            __int128 v;
            if (!const_eval(e->child(0), v)) return false;
            if (e->text == "-") {
                out = -v;
                return true;
            }
            return false;
        }
        case NodeKind::Binary: {
            __int128 l, r;
            if (!const_eval(e->child(0), l) || !const_eval(e->child(1), r)) return false;
            if (e->text == "+") out = l + r;
            else if (e->text == "-") out = l - r;
            else if (e->text == "*") out = l * r;
            else if (e->text == "/") {
                if (r == 0) return false;
                out = l / r;
            } else if (e->text == "mod") {
                if (r == 0) return false;
                out = ((l % r) + r) % r;
            } else if (e->text == "**") {
                if (r < 0 || r > 127) return false;
                __int128 acc = 1;
                for (__int128 k = 0; k < r; ++k) acc *= l;
                out = acc;
            } else {
                return false;
            }
            return true;
        }
        default:
            return false;
    }
}

bool const_eval_range(const Node* e, int64_t& lo, int64_t& hi) {
    if (!e || e->kind != NodeKind::Binary || e->text != "..") return false;
    __int128 l, h;
    if (!const_eval(e->child(0), l) || !const_eval(e->child(1), h)) return false;
    constexpr __int128 kMin = INT64_MIN, kMax = INT64_MAX;
    if (l < kMin || l > kMax || h < kMin || h > kMax) return false;
    lo = static_cast<int64_t>(l);
    hi = static_cast<int64_t>(h);
    return true;
}

std::string binding_key(const Binding& b) {
    if (b.type) {
        std::string k = b.optional ? "optional " : "";
        return k + b.type->key;
    }
    if (b.value) return pretty_print(*b.value);
    return "?";
}

// ---- registry collection ------------------------------------------------

void collect_formals(ModuleSig& m, const Node* list) {
    if (!list) return;
    for (const auto& f : list->children) {
        FormalParam fp;
        fp.name = f->text;
        if (f->kind == NodeKind::FormalType) {
            fp.is_type = true;
            fp.constraint = f->child(0);
            fp.dflt = f->child(1);
        } else {
            fp.is_type = false;
            fp.value_type = f->child(0);
            fp.dflt = f->child(1);
        }
        m.formals.push_back(std::move(fp));
    }
}

void add_op_decl(Program& p, ModuleSig& m, const Node* d, bool from_class, DiagSink& diags) {
    // Match an existing signature entry by name and parameter count.
    size_t nparams = d->child(0) ? d->child(0)->children.size() : 0;
    OpDef* found = nullptr;
    for (auto& od : m.ops) {
        size_t n = 0;
        if (const Node* sig = od.iface_decl ? od.iface_decl : od.body_decl)
            n = sig->child(0) ? sig->child(0)->children.size() : 0;
        if (od.name == d->text && n == nparams) {
            found = &od;
            break;
        }
    }
    const Node* body = d->child(3);
    const Node* rename = d->child(4);
    if (!from_class) {
        if (found) {
            diags.error("DUP_DECL", "duplicate declaration of '" + d->text + "'", d->span,
                        m.file);
            return;
        }
        OpDef od;
        od.name = d->text;
        od.is_op = d->has(FlagIsOp);
        od.iface_decl = d;
        if (body) od.body_decl = d;
        if (rename) od.rename_target = rename;
        m.ops.push_back(std::move(od));
    } else {
        if (found) {
            if (found->body_decl || found->rename_target) {
                diags.error("DUP_DECL", "duplicate body for '" + d->text + "'", d->span,
                            m.file);
                return;
            }
            if (body) found->body_decl = d;
            if (rename) found->rename_target = rename;
        } else {
            OpDef od;
            od.name = d->text;
            od.is_op = d->has(FlagIsOp);
            od.iface_decl = d;
            if (body) od.body_decl = d;
            if (rename) od.rename_target = rename;
            m.ops.push_back(std::move(od));
        }
    }
    (void)p;
}

void add_component(ModuleSig& m, const Node* d, DiagSink& diags) {
    for (const Node* c : m.components) {
        if (c->text == d->text) {
            diags.error("DUP_DECL", "duplicate component '" + d->text + "'", d->span, m.file);
            return;
        }
    }
    m.components.push_back(d);
    if (!d->has(FlagVar) && d->child(1)) m.module_consts.push_back(d);
}

ModuleSig* register_module(Program& p, ModuleSig* enclosing, const std::string& full,
                           const std::string& file, DiagSink& diags, Span sp) {
    std::string simple = split_path(full).back();
    auto& scope = enclosing ? enclosing->locals : p.module_by_name;
    auto it = scope.find(simple);
    if (it != scope.end()) return it->second;
    p.modules.push_back(std::make_unique<ModuleSig>());
    ModuleSig* m = p.modules.back().get();
    m->name = simple;
    m->full = full;
    m->file = file;
    m->enclosing = enclosing;
    scope[simple] = m;
    if (!enclosing && full != simple) {
        auto fit = p.module_by_name.find(full);
        if (fit != p.module_by_name.end() && fit->second != m)
            diags.error("DUP_DECL", "duplicate module '" + full + "'", sp, file);
        p.module_by_name[full] = m;
    }
    return m;
}

void collect_interface(Program& p, ModuleSig* enclosing, const Node* n,
                       const std::string& file, DiagSink& diags);
void collect_class(Program& p, ModuleSig* enclosing, const Node* n, const std::string& file,
                   DiagSink& diags);

void collect_interface(Program& p, ModuleSig* enclosing, const Node* n,
                       const std::string& file, DiagSink& diags) {
    ModuleSig* m = register_module(p, enclosing, n->text, file, diags, n->span);
    if (m->iface) {
        diags.error("DUP_DECL", "duplicate interface '" + n->text + "'", n->span, file);
        return;
    }
    m->iface = n;
    m->is_abstract = n->has(FlagAbstract);
    m->is_concurrent = n->has(FlagConcurrent);
    collect_formals(*m, n->child(0));
    if (const Node* impls = n->child(1))
        for (const auto& t : impls->children) m->implements.push_back(t.get());
    for (size_t i = 2; i < n->children.size(); ++i) {
        const Node* d = n->children[i].get();
        if (!d) continue;
        switch (d->kind) {
            case NodeKind::OpDecl:
                add_op_decl(p, *m, d, /*from_class=*/false, diags);
                break;
            case NodeKind::ComponentDecl:
                add_component(*m, d, diags);
                break;
            case NodeKind::TypeDecl:
                m->type_decls[d->text] = d->child(0);
                break;
            case NodeKind::InterfaceDecl:
                collect_interface(p, m, d, file, diags);
                break;
            case NodeKind::ClassDecl:
                collect_class(p, m, d, file, diags);
                break;
            default:
                break;
        }
    }
}

void collect_class(Program& p, ModuleSig* enclosing, const Node* n, const std::string& file,
                   DiagSink& diags) {
    ModuleSig* m = register_module(p, enclosing, n->text, file, diags, n->span);
    if (m->klass) {
        diags.error("DUP_DECL", "duplicate class '" + n->text + "'", n->span, file);
        return;
    }
    m->klass = n;
    if (n->has(FlagConcurrent)) m->is_concurrent = true;
    auto scan = [&](const Node* list, bool exported) {
        if (!list) return;
        for (const auto& dp : list->children) {
            const Node* d = dp.get();
            if (!d) continue;
            switch (d->kind) {
                case NodeKind::OpDecl:
                    if (exported) {
                        add_op_decl(p, *m, d, /*from_class=*/true, diags);
                    } else {
                        // private helper: visible inside the class only
                        OpDef od;
                        od.name = d->text;
                        od.is_op = d->has(FlagIsOp);
                        od.body_decl = d;
                        m->ops.push_back(std::move(od));
                    }
                    break;
                case NodeKind::ComponentDecl:
                    add_component(*m, d, diags);
                    break;
                case NodeKind::TypeDecl:
                    m->type_decls[d->text] = d->child(0);
                    break;
                case NodeKind::InterfaceDecl:
                    collect_interface(p, m, d, file, diags);
                    break;
                case NodeKind::ClassDecl:
                    collect_class(p, m, d, file, diags);
                    break;
                default:
                    break;
            }
        }
    };
    scan(n->child(0), /*exported=*/false);
    scan(n->child(1), /*exported=*/true);
}

void collect_unit(Program& p, const Node* unit, DiagSink& diags) {
    const std::string& file = unit->text;
    for (const auto& dp : unit->children) {
        const Node* d = dp.get();
        if (!d) continue;
        switch (d->kind) {
            case NodeKind::InterfaceDecl:
                collect_interface(p, nullptr, d, file, diags);
                break;
            case NodeKind::ClassDecl:
                collect_class(p, nullptr, d, file, diags);
                break;
            case NodeKind::OpDecl: {
                if (p.func_by_name.count(d->text)) {
                    diags.error("DUP_DECL", "duplicate function '" + d->text + "'", d->span,
                                file);
                    break;
                }
                p.func_defs.push_back(std::make_unique<OpDef>());
                OpDef* def = p.func_defs.back().get();
                def->name = d->text;
                def->iface_decl = d;
                def->body_decl = d;
                def->file = file;
                p.funcs.push_back(std::make_unique<OpImpl>());
                OpImpl* fn = p.funcs.back().get();
                fn->name = d->text;
                fn->decl = d;
                fn->def = def;
                fn->arity = d->child(0) ? static_cast<int>(d->child(0)->children.size()) : 0;
                p.func_by_name[d->text] = fn;
                break;
            }
            case NodeKind::VarDecl: {
                if (p.global_index.count(d->text)) {
                    diags.error("DUP_DECL", "duplicate global '" + d->text + "'", d->span,
                                file);
                    break;
                }
                p.global_index[d->text] = static_cast<int>(p.globals.size());
                p.globals.push_back(d);
                p.global_files.push_back(file);
                break;
            }
            default:
                break;
        }
    }
}

// ---- signature checks ---------------------------------------------------

size_t decl_arity(const Node* d) {
    return d && d->child(0) ? d->child(0)->children.size() : 0;
}

void check_module_sig(Program& p, ModuleSig* m, DiagSink& diags) {
    for (auto& od : m->ops) {
        const Node* sig = od.iface_decl ? od.iface_decl : od.body_decl;
        if (sig && sig->has(FlagLockFree))
            diags.error("SYNC_UNSUPPORTED", "lock_free operations are not supported",
                        sig->span, m->file);
        // concurrent param modes only on concurrent modules
        if (sig && sig->child(0) && !m->is_concurrent) {
            for (const auto& prm : sig->child(0)->children)
                if (mode_is_concurrent(prm->mode))
                    diags.error("SYNC_UNSUPPORTED",
                                "locked/queued parameter in non-concurrent module '" +
                                    m->name + "'",
                                prm->span, m->file);
        }
        if (od.rename_target) {
            // target must exist with the same arity
            const OpDef* target = nullptr;
            for (const auto& other : m->ops) {
                if (&other == &od) continue;
                if (other.name == od.rename_target->text) {
                    target = &other;
                    break;
                }
            }
            const Node* osig =
                target ? (target->iface_decl ? target->iface_decl : target->body_decl)
                       : nullptr;
            if (!target || decl_arity(osig) != decl_arity(sig)) {
                diags.error("RENAME_SIG",
                            "'" + od.name + "' renames '" + od.rename_target->text +
                                "' with a mismatched signature",
                            od.rename_target->span, m->file);
            }
        } else if (m->klass && !m->is_abstract && od.iface_decl && !od.body_decl) {
            diags.error("MISSING_EXPORT",
                        "operation '" + od.name + "' declared in interface '" + m->name +
                            "' has no exported body",
                        od.iface_decl->span, m->file);
        }
    }
    for (auto& [nm, local] : m->locals) check_module_sig(p, local, diags);
}

// ---- cycle detection ----------------------------------------------------

ModuleSig* lookup_module_for_cycle(Program& p, ModuleSig* from, const std::string& name) {
    std::string head = split_path(name).front();
    for (ModuleSig* s = from; s; s = s->enclosing) {
        if (s->name == head) return s;
        auto it = s->locals.find(head);
        if (it != s->locals.end()) return it->second;
        auto td = s->type_decls.find(head);
        if (td != s->type_decls.end() && td->second)
            return lookup_module_for_cycle(p, s->enclosing, td->second->text);
    }
    auto it = p.module_by_name.find(head);
    return it == p.module_by_name.end() ? nullptr : it->second;
}

bool cycle_dfs(Program& p, ModuleSig* m, std::unordered_map<ModuleSig*, int>& color,
               DiagSink& diags) {
    color[m] = 1;
    for (const Node* comp : m->components) {
        const Node* tr = comp->child(0);
        if (!tr || tr->has(FlagOptional)) continue;
        // a formal-typed component cannot recurse into this module statically
        bool is_formal = false;
        for (const auto& f : m->formals)
            if (f.name == tr->text) is_formal = true;
        if (is_formal) continue;
        ModuleSig* target = lookup_module_for_cycle(p, m, tr->text);
        if (!target) continue;
        int c = color.count(target) ? color[target] : 0;
        if (c == 1) {
            diags.error("CYCLE",
                        "component '" + comp->text + "' gives module '" + m->name +
                            "' unbounded size; use optional",
                        comp->span, m->file);
            return true;
        }
        if (c == 0 && cycle_dfs(p, target, color, diags)) return true;
    }
    color[m] = 2;
    return false;
}

void check_cycles(Program& p, DiagSink& diags) {
    std::unordered_map<ModuleSig*, int> color;
    for (auto& mp : p.modules)
        if (!color.count(mp.get())) cycle_dfs(p, mp.get(), color, diags);
}

// ---- skeletons ----------------------------------------------------------

TypeDesc* formal_desc(Program& p, ModuleSig* m, const FormalParam& f, DiagSink& diags);
TypeDesc* formal_member(TypeEnv& env, TypeDesc* t, const std::string& name);

// Build the abstract op table a formal type exposes from its constraint.
void add_constraint_ops(Program& p, TypeDesc* fd, ModuleSig* cons,
                        const std::vector<Binding>& cargs, DiagSink& diags) {
    TypeEnv env{&p, cons, nullptr, &diags, cons->file};
    // host for the constraint's own formals
    TypeDesc host;
    host.module = cons;
    for (size_t i = 0; i < cons->formals.size(); ++i) {
        if (i < cargs.size() && cargs[i].type) {
            host.actuals.emplace_back(cons->formals[i].name, cargs[i]);
        } else if (cons->formals[i].is_type) {
            // unsupplied constraint formal: project it through the formal type
            Binding b;
            b.type = formal_member(env, fd, cons->formals[i].name);
            if (b.type) host.actuals.emplace_back(cons->formals[i].name, b);
        }
    }
    // self-substitution: the constraint's own name denotes the formal
    env.self_type = &host;
    for (auto& od : cons->ops) {
        if (fd->find_op(od.name)) continue;
        const Node* sig = od.iface_decl ? od.iface_decl : od.body_decl;
        if (!sig) continue;
        fd->ops.push_back(std::make_unique<OpImpl>());
        OpImpl* op = fd->ops.back().get();
        op->name = od.name;
        op->is_op = od.is_op;
        op->owner = fd;
        op->decl = sig;
        op->def = &od;
        op->index = static_cast<int>(fd->ops.size()) - 1;
        op->arity = static_cast<int>(decl_arity(sig));
        if (const Node* params = sig->child(0)) {
            for (const auto& prm : params->children) {
                ParamInfo pi;
                pi.name = prm->text;
                pi.mode = prm->mode;
                pi.optional = prm->has(FlagOptional);
                const Node* tr = prm->child(0);
                // the constraint's name or "self" position maps to fd
                if (tr && (tr->simple_name() == cons->name || tr->text == cons->full)) {
                    pi.type = fd;
                } else if (tr) {
                    bool opt = false;
                    pi.type = resolve_type(env, tr, opt);
                    pi.optional |= opt;
                }
                op->params.push_back(std::move(pi));
            }
        }
        if (const Node* rs = sig->child(1)) {
            const Node* tr = rs->child(0);
            op->returns_ref = rs->has(FlagRef);
            op->result_optional = rs->has(FlagOptional) || (tr && tr->has(FlagOptional));
            op->has_named_result = !rs->text.empty();
            if (tr && (tr->simple_name() == cons->name || tr->text == cons->full)) {
                op->result_type = fd;
            } else if (tr) {
                bool opt = false;
                op->result_type = resolve_type(env, tr, opt);
                op->result_optional |= opt;
            }
        }
        fd->op_by_name[op->name] = op;
    }
}

TypeDesc* formal_desc(Program& p, ModuleSig* m, const FormalParam& f, DiagSink& diags) {
    std::string key = "$formal " + m->full + "." + f.name;
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;
    TypeDesc* t = p.new_type();
    t->builtin = BK::FormalType;
    t->key = key;
    t->formal_name = f.name;
    p.interned[key] = t;
    if (f.constraint) {
        TypeEnv env{&p, m, nullptr, &diags, m->file};
        std::string cname = f.constraint->text;
        ModuleSig* cons = nullptr;
        auto mit = p.module_by_name.find(cname);
        if (mit != p.module_by_name.end()) cons = mit->second;
        if (cons) {
            t->formal_constraints.push_back(cons);
            std::vector<Binding> cargs;
            for (const auto& a : f.constraint->children) {
                const Node* v = a->kind == NodeKind::NamedArg ? a->child(0) : a.get();
                Binding b;
                if (v && v->kind == NodeKind::TypeRef) {
                    bool opt = false;
                    // constraint args refer to sibling formals of m
                    for (const auto& f2 : m->formals)
                        if (f2.is_type && f2.name == v->text) {
                            b.type = formal_desc(p, m, f2, diags);
                            break;
                        }
                    if (!b.type) {
                        TypeEnv e2 = env;
                        b.type = resolve_type(e2, v, opt);
                        b.optional = opt;
                    }
                }
                cargs.push_back(std::move(b));
            }
            add_constraint_ops(p, t, cons, cargs, diags);
        } else if (cname != "Assignable") {
            diags.error("UNDECLARED", "unknown constraint '" + cname + "'",
                        f.constraint->span, m->file);
        }
    }
    return t;
}

// Associated type named through a formal's constraint, e.g. the Key_Type of
// a `KV_Type is Keyed<>` formal.  Substitution later resolves the "::" path
// against the instantiation's actuals.
TypeDesc* formal_member(TypeEnv& env, TypeDesc* t, const std::string& name) {
    Program& p = *env.p;
    std::string key = t->key + "::" + name;
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;
    for (ModuleSig* cons : t->formal_constraints) {
        for (const auto& f2 : cons->formals) {
            if (!f2.is_type || f2.name != name) continue;
            TypeDesc* proj = p.new_type();
            proj->builtin = BK::FormalType;
            proj->key = key;
            proj->formal_name = t->formal_name + "::" + name;
            p.interned[key] = proj;
            if (f2.constraint) {
                auto mit = p.module_by_name.find(f2.constraint->text);
                if (mit != p.module_by_name.end()) {
                    proj->formal_constraints.push_back(mit->second);
                    add_constraint_ops(p, proj, mit->second, {}, *env.diags);
                }
            }
            return proj;
        }
    }
    return nullptr;
}

// ---- builtin type reference dispatch ------------------------------------

Binding resolve_actual(TypeEnv& env, const Node* a) {
    Binding b;
    const Node* v = a->kind == NodeKind::NamedArg ? a->child(0) : a;
    if (v && v->kind == NodeKind::TypeRef) {
        bool opt = false;
        b.type = resolve_type(env, v, opt);
        b.optional = opt;
    } else {
        b.value = v;
    }
    return b;
}

// Align written actuals with formals, applying defaults.
bool align_actuals(TypeEnv& env, ModuleSig* m, const Node* tref,
                   std::vector<Binding>& out) {
    std::vector<const Node*> positional;
    std::unordered_map<std::string, const Node*> named;
    for (const auto& a : tref->children) {
        if (a->kind == NodeKind::NamedArg)
            named[a->text] = a.get();
        else
            positional.push_back(a.get());
    }
    size_t pi = 0;
    for (const auto& f : m->formals) {
        const Node* src = nullptr;
        auto it = named.find(f.name);
        if (it != named.end())
            src = it->second;
        else if (pi < positional.size())
            src = positional[pi++];
        if (src) {
            out.push_back(resolve_actual(env, src));
        } else if (f.dflt) {
            Binding b;
            if (f.is_type) {
                bool opt = false;
                b.type = resolve_type(env, f.dflt, opt);
                b.optional = opt;
            } else {
                b.value = f.dflt;
            }
            out.push_back(std::move(b));
        } else {
            env.diags->error("UNDECLARED",
                             "missing actual for formal '" + f.name + "' of '" + m->name +
                                 "'",
                             tref->span, env.file);
            return false;
        }
    }
    return true;
}

TypeDesc* builtin_ref(TypeEnv& env, const Node* tref) {
    Program& p = *env.p;
    const std::string& n = tref->text;
    if (n == "Univ_Integer") return p.t_univ_int;
    if (n == "Univ_Real") return p.t_univ_real;
    if (n == "Univ_Character") return p.t_univ_char;
    if (n == "Univ_String") return p.t_univ_str;
    if (n == "Univ_Enumeration") return p.t_univ_enum;
    if (n == "Boolean") return p.t_bool;
    if (n == "Ordering") return p.t_ordering;
    if (n == "Integer") {
        TypeDesc* t = make_integer_type(p);
        for (const auto& a : tref->children) {
            const Node* v = a->kind == NodeKind::NamedArg ? a->child(0) : a.get();
            int64_t lo, hi;
            if (const_eval_range(v, lo, hi)) {
                std::string key =
                    "Integer<" + std::to_string(lo) + ".." + std::to_string(hi) + ">";
                auto it = p.interned.find(key);
                if (it != p.interned.end()) return it->second;
                TypeDesc* r = p.new_type();
                r->builtin = BK::Integer;
                r->key = key;
                r->range_lo = lo;
                r->range_hi = hi;
                p.interned[key] = r;
                bind_builtin_natives(p, r);
                return r;
            }
            env.diags->error("UNDECLARED", "Integer Range must be a static range",
                             tref->span, env.file);
        }
        return t;
    }
    auto elem_of = [&](const char* what) -> Binding {
        if (tref->children.empty()) {
            env.diags->error("UNDECLARED", std::string(what) + " needs an element type",
                             tref->span, env.file);
            return Binding{p.t_univ_int, false, nullptr};
        }
        return resolve_actual(env, tref->children[0].get());
    };
    if (n == "Basic_Array") return make_basic_array(p, elem_of("Basic_Array"));
    if (n == "Countable_Range") return make_range_type(p, elem_of("Countable_Range"));
    if (n == "Set") return make_set_type(p, elem_of("Set"));
    return nullptr;
}

ModuleSig* find_module(TypeEnv& env, const std::string& head, const Node** alias_out) {
    *alias_out = nullptr;
    for (ModuleSig* s = env.self_module; s; s = s->enclosing) {
        if (s->name == head || s->full == head) return s;
        auto lit = s->locals.find(head);
        if (lit != s->locals.end()) return lit->second;
        auto tit = s->type_decls.find(head);
        if (tit != s->type_decls.end()) {
            *alias_out = tit->second;
            return nullptr;
        }
    }
    auto it = env.p->module_by_name.find(head);
    return it == env.p->module_by_name.end() ? nullptr : it->second;
}

}  // namespace

// ---- public resolution --------------------------------------------------

TypeDesc* resolve_type(TypeEnv& env, const Node* tref, bool& optional) {
    optional = tref->has(FlagOptional);
    Program& p = *env.p;
    auto segs = split_path(tref->text);
    const std::string& head = segs.front();

    // formal binding of the current instantiation
    if (env.self_type) {
        if (Binding* b = env.self_type->find_actual(head)) {
            optional = optional || b->optional;
            TypeDesc* t = b->type;
            // member access into the bound type's own actuals
            for (size_t i = 1; t && i < segs.size(); ++i) {
                Binding* nb = t->find_actual(segs[i]);
                if (nb) {
                    optional = optional || nb->optional;
                    t = nb->type;
                } else if (t->builtin == BK::FormalType) {
                    TypeDesc* proj = formal_member(env, t, segs[i]);
                    if (!proj) {
                        env.diags->error(
                            "UNDECLARED",
                            "'" + segs[i] + "' is not a formal of " + t->key,
                            tref->span, env.file);
                        return nullptr;
                    }
                    t = proj;
                } else {
                    env.diags->error("UNDECLARED",
                                     "'" + segs[i] + "' is not a formal of " + t->key,
                                     tref->span, env.file);
                    return nullptr;
                }
            }
            return t;
        }
    }

    // the module's own name denotes the current instantiation
    if (env.self_module && segs.size() == 1 &&
        (head == env.self_module->name || tref->text == env.self_module->full))
        if (env.self_type && tref->children.empty()) return env.self_type;

    if (segs.size() == 1) {
        if (TypeDesc* t = builtin_ref(env, tref)) return t;
    }

    const Node* alias = nullptr;
    ModuleSig* m = find_module(env, tref->text, &alias);
    if (!m && !alias) m = find_module(env, head, &alias);
    if (alias) {
        bool opt = false;
        TypeDesc* t = resolve_type(env, alias, opt);
        optional = optional || opt;
        return t;
    }
    if (!m) {
        env.diags->error("UNDECLARED", "unknown type '" + tref->text + "'", tref->span,
                         env.file);
        return nullptr;
    }
    std::vector<Binding> actuals;
    if (!align_actuals(env, m, tref, actuals)) return nullptr;
    TypeDesc* t = instantiate(p, m, std::move(actuals), *env.diags, tref->span, env.file);
    for (size_t i = 1; t && i < segs.size(); ++i) {
        Binding* nb = t->find_actual(segs[i]);
        if (!nb) {
            if (t->builtin == BK::FormalType) {
                if (TypeDesc* proj = formal_member(env, t, segs[i])) {
                    t = proj;
                    continue;
                }
            }
            env.diags->error("UNDECLARED", "'" + segs[i] + "' is not a formal of " + t->key,
                             tref->span, env.file);
            return nullptr;
        }
        optional = optional || nb->optional;
        t = nb->type;
    }
    return t;
}

bool conforms(Program& p, TypeDesc* actual, ModuleSig* constraint,
              const std::vector<Binding>& cargs, DiagSink& diags) {
    if (!actual) return true;  // earlier error; avoid cascades
    if (actual->builtin == BK::FormalType) {
        for (ModuleSig* c : actual->formal_constraints)
            if (c == constraint) return true;
        // fall through to structural on the formal's synthesized ops
    }
    // explicit implements?
    if (actual->module) {
        TypeEnv env{&p, actual->module, actual, &diags, actual->module->file};
        for (const Node* impl : actual->module->implements) {
            if (split_path(impl->text).back() != constraint->name) continue;
            if (constraint->formals.empty()) return true;
            std::vector<Binding> ib;
            TypeEnv e2 = env;
            if (!align_actuals(e2, constraint, impl, ib)) continue;
            if (ib.size() != cargs.size()) continue;
            bool same = true;
            for (size_t i = 0; i < ib.size(); ++i)
                if (ib[i].type != cargs[i].type) same = false;
            if (same) return true;
        }
    }
    if (!constraint->formals.empty()) return false;  // parameterized needs implements
    // structural: every constraint op present by name and arity
    for (const auto& od : constraint->ops) {
        const Node* sig = od.iface_decl ? od.iface_decl : od.body_decl;
        size_t want = decl_arity(sig);
        bool ok = false;
        for (const auto& op : actual->ops)
            if (op->name == od.name && static_cast<size_t>(op->arity) == want) ok = true;
        if (!ok) return false;
    }
    return true;
}

TypeDesc* instantiate(Program& p, ModuleSig* m, std::vector<Binding> actuals,
                      DiagSink& diags, Span where, const std::string& file) {
    std::string key = m->full + "<";
    for (size_t i = 0; i < actuals.size(); ++i) {
        if (i) key += ", ";
        key += binding_key(actuals[i]);
    }
    key += ">";
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;

    TypeDesc* t = p.new_type();
    t->module = m;
    t->key = key;
    t->concurrent = m->is_concurrent;
    for (size_t i = 0; i < actuals.size() && i < m->formals.size(); ++i)
        t->actuals.emplace_back(m->formals[i].name, std::move(actuals[i]));
    p.interned[key] = t;

    // conformance of actuals against formal constraints
    TypeEnv env{&p, m, t, &diags, file};
    for (size_t i = 0; i < t->actuals.size(); ++i) {
        const FormalParam& f = m->formals[i];
        Binding& b = t->actuals[i].second;
        if (!f.is_type || !f.constraint || !b.type) continue;
        if (b.type->builtin == BK::FormalType) continue;  // checked at use site
        const Node* ctr = f.constraint;
        ModuleSig* cons = nullptr;
        auto mit = p.module_by_name.find(ctr->text);
        if (mit != p.module_by_name.end()) cons = mit->second;
        if (!cons) continue;  // unknown constraint already diagnosed
        std::vector<Binding> cargs;
        TypeEnv e2 = env;
        align_actuals(e2, cons, ctr, cargs);
        if (!conforms(p, b.type, cons, cargs, diags))
            diags.error("CONFORMANCE",
                        "actual '" + b.type->key + "' for formal '" + f.name +
                            "' does not conform to " + ctr->text,
                        where, file);
    }

    // components
    for (const Node* comp : m->components) {
        CompSlot cs;
        cs.name = comp->text;
        cs.is_var = comp->has(FlagVar);
        cs.init = comp->child(1);
        if (const Node* tr = comp->child(0)) {
            bool opt = false;
            cs.type = resolve_type(env, tr, opt);
            cs.optional = opt;
        }
        t->comp_index[cs.name] = static_cast<int>(t->comps.size());
        t->comps.push_back(std::move(cs));
    }

    // operations
    for (auto& od : m->ops) {
        if (od.rename_target) continue;
        const Node* sig = od.iface_decl ? od.iface_decl : od.body_decl;
        if (!sig) continue;
        t->ops.push_back(std::make_unique<OpImpl>());
        OpImpl* op = t->ops.back().get();
        op->name = od.name;
        op->is_op = od.is_op;
        op->owner = t;
        op->decl = od.body_decl ? od.body_decl : od.iface_decl;
        op->def = &od;
        op->index = static_cast<int>(t->ops.size()) - 1;
        op->arity = static_cast<int>(decl_arity(sig));
        op->has_precond = sig->child(2) != nullptr;
        if (const Node* params = sig->child(0)) {
            int idx = 0;
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
                if (mode_is_concurrent(prm->mode) && op->controlling_param < 0)
                    op->controlling_param = idx;
                op->params.push_back(std::move(pi));
                ++idx;
            }
        }
        if (op->controlling_param >= 0) {
            ParamMode cm = op->params[op->controlling_param].mode;
            op->queued = cm == ParamMode::Queued || cm == ParamMode::QueuedVar;
            op->locked_shared = cm == ParamMode::Locked;
            op->locked_excl = cm == ParamMode::LockedVar || op->queued;
            op->queued_while = sig->has(FlagQueuedWhile) ||
                               (op->decl && op->decl->has(FlagQueuedWhile));
        }
        if (const Node* rs = sig->child(1)) {
            op->returns_ref = rs->has(FlagRef);
            op->has_named_result = !rs->text.empty();
            if (const Node* tr = rs->child(0)) {
                bool opt = false;
                op->result_type = resolve_type(env, tr, opt);
                op->result_optional = opt || rs->has(FlagOptional);
            }
        }
        t->op_by_name[op->name] = op;
    }
    // renames alias to their target's implementation
    for (auto& od : m->ops) {
        if (!od.rename_target) continue;
        OpImpl* target = t->find_op(od.rename_target->text);
        if (!target) continue;  // RENAME_SIG already reported
        t->ops.push_back(std::make_unique<OpImpl>());
        OpImpl* op = t->ops.back().get();
        *op = *target;
        op->name = od.name;
        op->is_op = od.is_op;
        op->index = static_cast<int>(t->ops.size()) - 1;
        t->op_by_name[op->name] = op;
    }

    if (m->checked) resolve_sites(p, t, diags);
    return t;
}

TypeDesc* subst_type(Program& p, TypeDesc* t, TypeDesc* self, DiagSink& diags) {
    if (!t || !self) return t;
    if (self->module && t == self->module->skeleton) return self;
    auto it = self->subst_cache.find(t);
    if (it != self->subst_cache.end()) return it->second;
    TypeDesc* out = t;
    switch (t->builtin) {
        case BK::FormalType: {
            auto parts = split_path(t->formal_name);
            Binding* b = self->find_actual(parts[0]);
            TypeDesc* r = b ? b->type : nullptr;
            for (size_t i = 1; r && i < parts.size(); ++i) {
                Binding* nb = r->find_actual(parts[i]);
                r = nb ? nb->type : nullptr;
            }
            if (r) out = r;
            break;
        }
        case BK::BasicArray:
        case BK::SetType:
        case BK::Range: {
            Binding e = t->elem;
            e.type = subst_type(p, e.type, self, diags);
            if (e.type != t->elem.type) {
                out = t->builtin == BK::BasicArray ? make_basic_array(p, e)
                    : t->builtin == BK::SetType    ? make_set_type(p, e)
                                                   : make_range_type(p, e);
            }
            break;
        }
        case BK::None: {
            if (!t->module) break;
            bool changed = false;
            std::vector<Binding> actuals;
            for (auto& a : t->actuals) {
                Binding b = a.second;
                b.type = subst_type(p, b.type, self, diags);
                if (b.type != a.second.type) changed = true;
                actuals.push_back(std::move(b));
            }
            if (changed)
                out = instantiate(p, t->module, std::move(actuals), diags, Span{},
                                  t->module->file);
            break;
        }
        default:
            break;
    }
    self->subst_cache[t] = out;
    return out;
}

void resolve_sites(Program& p, TypeDesc* t, DiagSink& diags) {
    if (t->sites_ready || !t->module) return;
    t->sites_ready = true;
    ModuleSig* m = t->module;
    t->site_types.resize(m->type_sites.size(), nullptr);
    for (size_t i = 0; i < m->type_sites.size(); ++i)
        t->site_types[i] = subst_type(p, m->type_sites[i], t, diags);
    t->site_ops.resize(m->call_sites.size(), nullptr);
    for (size_t i = 0; i < m->call_sites.size(); ++i) {
        const CallSite& cs = m->call_sites[i];
        TypeDesc* host = cs.type_site >= 0 ? t->site_types[cs.type_site] : t;
        if (host) t->site_ops[i] = host->find_op_n(cs.op, cs.arity);
    }
}

std::unique_ptr<Program> analyze(std::vector<NodePtr> units, DiagSink& diags) {
    auto p = std::make_unique<Program>();
    register_builtins(*p);
    p->units = std::move(units);

    for (const auto& u : p->units) collect_unit(*p, u.get(), diags);
    for (auto& m : p->modules)
        if (!m->enclosing) check_module_sig(*p, m.get(), diags);
    check_cycles(*p, diags);

    // skeleton per module, then generic body check
    for (auto& mp : p->modules) {
        ModuleSig* m = mp.get();
        if (m->skeleton) continue;
        std::vector<Binding> binds;
        bool ok = true;
        for (const auto& f : m->formals) {
            Binding b;
            if (f.is_type) {
                b.type = formal_desc(*p, m, f, diags);
            } else {
                TypeEnv env{p.get(), m, nullptr, &diags, m->file};
                bool opt = false;
                b.type = f.value_type ? resolve_type(env, f.value_type, opt) : nullptr;
                b.value = f.dflt;
            }
            if (f.is_type && !b.type) ok = false;
            binds.push_back(std::move(b));
        }
        if (!ok) continue;
        m->skeleton = instantiate(*p, m, std::move(binds), diags, Span{}, m->file);
    }
    for (size_t i = 0; i < p->funcs.size(); ++i)
        declare_func_sig(*p, p->funcs[i].get(), p->func_defs[i].get(), diags);
    check_globals(*p, diags);
    for (auto& mp : p->modules) {
        ModuleSig* m = mp.get();
        if (m->skeleton && !m->checked) check_module_bodies(*p, m, diags, m->file);
        m->checked = true;
    }
    for (size_t i = 0; i < p->funcs.size(); ++i) {
        if (p->funcs[i]->native) continue;
        check_func_body(*p, p->funcs[i].get(), p->func_defs[i].get(), diags,
                        p->func_defs[i]->file);
    }

    // fill site tables for every type created during analysis; resolving
    // may intern further types, so index rather than iterate
    for (size_t i = 0; i < p->types.size(); ++i) resolve_sites(*p, p->types[i].get(), diags);
    return p;
}

}  // namespace psl
