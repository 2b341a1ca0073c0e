#include <cstdint>
#include <mutex>
#include <ostream>

#include "exec.hpp"
#include "sema.hpp"

namespace psl {

namespace {

Value& arg(Place* args, size_t i) { return *args[i].slot; }

Value ord(const char* which) { return Value::make_enum(which); }

// The documented 64-bit mixing function behind Hash(Univ_Integer).
uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

[[noreturn]] void arith_fault(const char* code, const char* msg) { fault(code, msg); }

Value nat_int_cmp(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const Value& l = arg(a, 0);
    const Value& r = arg(a, 1);
    if (l.is_null() || r.is_null()) return ord("#unordered");
    if (l.i < r.i) return ord("#less");
    if (l.i > r.i) return ord("#greater");
    return ord("#equal");
}

Value nat_char_cmp(ExecCtx& cx, OpImpl* op, Place* a, size_t n, Region* rr) {
    return nat_int_cmp(cx, op, a, n, rr);
}

Value nat_real_cmp(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const Value& l = arg(a, 0);
    const Value& r = arg(a, 1);
    if (l.is_null() || r.is_null() || l.r != l.r || r.r != r.r) return ord("#unordered");
    if (l.r < r.r) return ord("#less");
    if (l.r > r.r) return ord("#greater");
    return ord("#equal");
}

Value nat_enum_cmp(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const Value& l = arg(a, 0);
    const Value& r = arg(a, 1);
    if (l.is_null() || r.is_null()) return ord("#unordered");
    return l.sym == r.sym ? ord("#equal") : ord("#unordered");
}

Value nat_str_cmp(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const Value& l = arg(a, 0);
    const Value& r = arg(a, 1);
    if (l.is_null() || r.is_null()) return ord("#unordered");
    int c = l.str->text.compare(r.str->text);
    return c < 0 ? ord("#less") : c > 0 ? ord("#greater") : ord("#equal");
}

Value nat_int_hash(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    return Value::make_int(
        static_cast<int64_t>(mix64(static_cast<uint64_t>(arg(a, 0).i)) >> 1));
}

Value nat_str_hash(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const std::string& s = arg(a, 0).str->text;
    uint64_t h = 0x243F6A8885A308D3ull;
    for (unsigned char c : s) h = mix64(h ^ c);
    return Value::make_int(static_cast<int64_t>(h >> 1));
}

Value nat_enum_hash(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    uint64_t h = 0x243F6A8885A308D3ull;
    for (unsigned char c : *arg(a, 0).sym) h = mix64(h ^ c);
    return Value::make_int(static_cast<int64_t>(h >> 1));
}

template <char OpC>
Value nat_int_arith(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    int64_t l = arg(a, 0).i, r = arg(a, 1).i, out = 0;
    bool ovf = false;
    if constexpr (OpC == '+') ovf = __builtin_add_overflow(l, r, &out);
    if constexpr (OpC == '-') ovf = __builtin_sub_overflow(l, r, &out);
    if constexpr (OpC == '*') ovf = __builtin_mul_overflow(l, r, &out);
    if constexpr (OpC == '/') {
        if (r == 0) arith_fault("DIV_ZERO", "division by zero");
        if (l == INT64_MIN && r == -1) ovf = true;
        else out = l / r;
    }
    if constexpr (OpC == 'm') {
        if (r == 0) arith_fault("DIV_ZERO", "mod by zero");
        out = ((l % r) + r) % r;
    }
    if constexpr (OpC == 'p') {
        if (r < 0) arith_fault("OVERFLOW", "negative exponent");
        out = 1;
        for (int64_t k = 0; k < r; ++k)
            if (__builtin_mul_overflow(out, l, &out)) ovf = true;
    }
    if (ovf) arith_fault("OVERFLOW", "integer overflow");
    return Value::make_int(out);
}

Value nat_str_concat(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    auto text = [](const Value& v) -> std::string {
        if (v.kind == VK::Str) return v.str->text;
        return value_to_string(v);
    };
    return Value::make_str(text(arg(a, 0)) + text(arg(a, 1)));
}

Value nat_str_len(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    return Value::make_int(static_cast<int64_t>(arg(a, 0).str->text.size()));
}

Value nat_to_string(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    return Value::make_str(value_to_string(arg(a, 0)));
}

Value nat_println(ExecCtx& cx, OpImpl*, Place* a, size_t, Region*) {
    static std::mutex mu;  // whole lines even when printed from servers
    std::lock_guard<std::mutex> lk(mu);
    if (cx.out) *cx.out << value_to_string(arg(a, 0)) << '\n';
    return Value();
}

// REPL replay markers: silence output of already-seen lines.
Value nat_mute(ExecCtx& cx, OpImpl*, Place*, size_t, Region*) {
    cx.out = nullptr;
    return Value();
}

Value nat_unmute(ExecCtx& cx, OpImpl*, Place*, size_t, Region*) {
    cx.out = cx.out_real;
    return Value();
}

// ---- Basic_Array --------------------------------------------------------

Value nat_array_create(ExecCtx&, OpImpl*, Place* a, size_t, Region* rr) {
    int64_t len = arg(a, 0).i;
    if (len < 0) fault("INDEX_RANGE", "negative array length");
    ArrayRep* r = alloc_array(rr, 1, static_cast<size_t>(len));
    for (auto& e : r->elems) e = arg(a, 1).copy(rr);
    return make_array(r);
}

Place nat_array_index_place(ExecCtx&, OpImpl*, Place* a, size_t) {
    const Value& base = arg(a, 0);
    int64_t i = arg(a, 1).i;
    if (base.kind != VK::Arr && base.kind != VK::Slice)
        fault("NULL_DEREF", "indexing a null array");
    Value* e = seq_elem(base, i);
    if (!e)
        fault("INDEX_RANGE", "index " + std::to_string(i) + " outside " +
                                 std::to_string(seq_first(base)) + " .. " +
                                 std::to_string(seq_last(base)));
    Region* reg = base.kind == VK::Arr ? base.arr->region : base.arr->region;
    return Place{e, reg};
}

Value nat_array_index(ExecCtx& cx, OpImpl* op, Place* a, size_t n, Region* rr) {
    Place pl = nat_array_index_place(cx, op, a, n);
    return pl.slot->copy(rr);
}

Value nat_array_slice(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const Value& base = arg(a, 0);
    const Value& rng = arg(a, 1);
    if (base.kind != VK::Arr && base.kind != VK::Slice)
        fault("NULL_DEREF", "slicing a null array");
    int64_t lo = rng.i, hi = rng.b;
    if (lo > hi) return Value::make_slice(base.arr, seq_first(base), seq_first(base) - 1);
    if (lo < seq_first(base) || hi > seq_last(base))
        fault("INDEX_RANGE", "slice bounds outside array");
    return Value::make_slice(base.arr, lo, hi);
}

Value nat_seq_magnitude(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const Value& v = arg(a, 0);
    if (v.kind == VK::Set) return Value::make_int(set_size(*v.set));
    if (v.kind == VK::Str) return Value::make_int(static_cast<int64_t>(v.str->text.size()));
    if (v.kind == VK::Range) return Value::make_int(v.b >= v.i ? v.b - v.i + 1 : 0);
    if (v.is_null()) return Value::make_int(0);
    return Value::make_int(seq_length(v));
}

// iteration keys of an array or slice: its index range
Value nat_array_index_set(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    const Value& v = arg(a, 0);
    if (v.kind != VK::Arr && v.kind != VK::Slice)
        fault("NULL_DEREF", "iterating a null array");
    return Value::make_range(seq_first(v), seq_last(v));
}

Value nat_range_remove_any(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    Value& r = arg(a, 0);
    if (r.kind != VK::Range || r.i > r.b) return Value();
    return Value::make_int(r.i++);
}

// ---- Set ----------------------------------------------------------------

Value nat_set_empty(ExecCtx&, OpImpl*, Place*, size_t, Region* rr) {
    return make_set(alloc_set(rr));
}

Value nat_set_insert(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    Value& s = arg(a, 0);
    if (s.is_null()) s = make_set(alloc_set(a[0].region));
    if (s.kind != VK::Set) fault("NULL_DEREF", "'|=' target is not a set");
    set_insert(*s.set, arg(a, 1).copy(s.set->region));
    return Value();
}

Value nat_set_remove(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    Value& s = arg(a, 0);
    if (s.kind != VK::Set) return Value();
    const Value& e = arg(a, 1);
    if (s.set->interval) {
        Value tmp;
        // degrade via insert machinery only when the element is interior
        if (e.kind == VK::Int && e.i >= s.set->lo && e.i <= s.set->hi) {
            if (e.i == s.set->lo) {
                ++s.set->lo;
                return Value();
            }
            // materialize
            for (int64_t k = s.set->lo; k <= s.set->hi; ++k)
                if (k != e.i) s.set->elems.push_back(Value::make_int(k));
            s.set->interval = false;
            s.set->lo = 1;
            s.set->hi = 0;
        }
        (void)tmp;
        return Value();
    }
    for (size_t k = 0; k < s.set->elems.size(); ++k) {
        if (scalar_equal(s.set->elems[k], e)) {
            s.set->elems[k] = std::move(s.set->elems.back());
            s.set->elems.pop_back();
            break;
        }
    }
    return Value();
}

Value nat_set_remove_any(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    Value& s = arg(a, 0);
    Value out;
    if (s.kind == VK::Set) set_remove_any(*s.set, out);
    return out;
}

// iteration: the key set of a set is the set itself
Value nat_set_index_set(ExecCtx&, OpImpl*, Place* a, size_t, Region* rr) {
    const Value& s = arg(a, 0);
    if (s.kind != VK::Set) return make_set(alloc_set(rr));
    return s.copy(rr);
}

Value nat_set_indexing(ExecCtx&, OpImpl*, Place* a, size_t, Region* rr) {
    return arg(a, 1).copy(rr);
}

// ---- Integer<Range> -----------------------------------------------------

Value nat_int_from_univ(ExecCtx&, OpImpl* op, Place* a, size_t, Region*) {
    int64_t v = arg(a, 0).i;
    TypeDesc* t = op->owner;
    if (v < t->range_lo || v > t->range_hi)
        fault("PRECOND_FAIL", "Univ in Range");
    return Value::make_int(v);
}

Value nat_int_to_univ(ExecCtx&, OpImpl*, Place* a, size_t, Region*) {
    return Value::make_int(arg(a, 0).i);
}

// ---- table plumbing -----------------------------------------------------

OpImpl* add_native(Program& p, TypeDesc* t, const std::string& name, int arity, NativeFn fn,
                   TypeDesc* result, bool returns_ref = false,
                   NativePlaceFn pf = nullptr) {
    t->ops.push_back(std::make_unique<OpImpl>());
    OpImpl* op = t->ops.back().get();
    op->name = name;
    op->is_op = !name.empty() && !isalpha(static_cast<unsigned char>(name[0]));
    op->owner = t;
    op->native = fn;
    op->native_place = pf;
    op->index = static_cast<int>(t->ops.size()) - 1;
    op->arity = arity;
    op->params.resize(static_cast<size_t>(arity));
    op->result_type = result;
    op->returns_ref = returns_ref;
    t->op_by_name[name] = op;
    (void)p;
    return op;
}

void add_int_ops(Program& p, TypeDesc* t) {
    add_native(p, t, "=?", 2, nat_int_cmp, p.t_ordering);
    add_native(p, t, "Hash", 1, nat_int_hash, p.t_univ_int);
    add_native(p, t, "+", 2, nat_int_arith<'+'>, t);
    add_native(p, t, "-", 2, nat_int_arith<'-'>, t);
    add_native(p, t, "*", 2, nat_int_arith<'*'>, t);
    add_native(p, t, "/", 2, nat_int_arith<'/'>, t);
    add_native(p, t, "mod", 2, nat_int_arith<'m'>, t);
    add_native(p, t, "**", 2, nat_int_arith<'p'>, t);
    add_native(p, t, "To_String", 1, nat_to_string, p.t_univ_str);
}

TypeDesc* make_interned(Program& p, const std::string& key, BK bk) {
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;
    TypeDesc* t = p.new_type();
    t->builtin = bk;
    t->key = key;
    p.interned[key] = t;
    return t;
}

}  // namespace

TypeDesc* make_basic_array(Program& p, Binding elem) {
    std::string ek = elem.type ? elem.type->key : "?";
    std::string key = "Basic_Array<" + (elem.optional ? "optional " + ek : ek) + ">";
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;
    TypeDesc* t = make_interned(p, key, BK::BasicArray);
    t->elem = elem;
    t->actuals.emplace_back("Component_Type", elem);
    add_native(p, t, "Create", 2, nat_array_create, t);
    add_native(p, t, "indexing", 2, nat_array_index, elem.type, /*ref=*/true,
               nat_array_index_place);
    add_native(p, t, "slicing", 2, nat_array_slice, t);
    add_native(p, t, "magnitude", 1, nat_seq_magnitude, p.t_univ_int);
    add_native(p, t, "index_set", 1, nat_array_index_set,
               make_range_type(p, Binding{p.t_univ_int, false, nullptr}));
    return t;
}

TypeDesc* make_range_type(Program& p, Binding elem) {
    std::string key = "Countable_Range<" + (elem.type ? elem.type->key : "?") + ">";
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;
    TypeDesc* t = make_interned(p, key, BK::Range);
    t->elem = elem;
    add_native(p, t, "magnitude", 1, nat_seq_magnitude, p.t_univ_int);
    OpImpl* ra = add_native(p, t, "Remove_Any", 1, nat_range_remove_any, elem.type);
    ra->result_optional = true;
    ra->params[0].mode = ParamMode::Var;
    return t;
}

TypeDesc* make_set_type(Program& p, Binding elem) {
    std::string ek = elem.type ? elem.type->key : "?";
    std::string key = "Set<" + (elem.optional ? "optional " + ek : ek) + ">";
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;
    TypeDesc* t = make_interned(p, key, BK::SetType);
    t->elem = elem;
    t->actuals.emplace_back("Element_Type", elem);
    add_native(p, t, "[]", 0, nat_set_empty, t);
    add_native(p, t, "|=", 2, nat_set_insert, nullptr)->params[0].mode = ParamMode::Var;
    add_native(p, t, "+=", 2, nat_set_insert, nullptr)->params[0].mode = ParamMode::Var;
    add_native(p, t, "-=", 2, nat_set_remove, nullptr)->params[0].mode = ParamMode::Var;
    OpImpl* ra = add_native(p, t, "Remove_Any", 1, nat_set_remove_any, elem.type);
    ra->result_optional = true;
    ra->params[0].mode = ParamMode::Var;
    add_native(p, t, "magnitude", 1, nat_seq_magnitude, p.t_univ_int);
    add_native(p, t, "index_set", 1, nat_set_index_set, t);
    add_native(p, t, "indexing", 2, nat_set_indexing, elem.type)->result_optional =
        elem.optional;
    return t;
}

TypeDesc* make_integer_type(Program& p) {
    std::string key = "Integer<-2**63+1 .. +2**63-1>";
    auto it = p.interned.find(key);
    if (it != p.interned.end()) return it->second;
    TypeDesc* t = make_interned(p, key, BK::Integer);
    t->range_lo = INT64_MIN + 1;
    t->range_hi = INT64_MAX;
    bind_builtin_natives(p, t);
    return t;
}

void bind_builtin_natives(Program& p, TypeDesc* t) {
    if (t->builtin == BK::Integer) {
        add_int_ops(p, t);
        add_native(p, t, "from_univ", 1, nat_int_from_univ, t);
        add_native(p, t, "to_univ", 1, nat_int_to_univ, p.t_univ_int);
    }
}

void register_builtins(Program& p) {
    p.t_univ_int = make_interned(p, "Univ_Integer", BK::UnivInt);
    p.t_univ_real = make_interned(p, "Univ_Real", BK::UnivReal);
    p.t_univ_char = make_interned(p, "Univ_Character", BK::UnivChar);
    p.t_univ_str = make_interned(p, "Univ_String", BK::UnivStr);
    p.t_univ_enum = make_interned(p, "Univ_Enumeration", BK::UnivEnum);
    p.t_bool = make_interned(p, "Boolean", BK::Boolean);
    p.t_ordering = make_interned(p, "Ordering", BK::Ordering);
    p.t_null = make_interned(p, "$null", BK::NullType);

    add_int_ops(p, p.t_univ_int);
    add_native(p, p.t_univ_real, "=?", 2, nat_real_cmp, p.t_ordering);
    add_native(p, p.t_univ_char, "=?", 2, nat_char_cmp, p.t_ordering);
    add_native(p, p.t_univ_char, "Hash", 1, nat_int_hash, p.t_univ_int);
    add_native(p, p.t_univ_enum, "=?", 2, nat_enum_cmp, p.t_ordering);
    add_native(p, p.t_univ_enum, "Hash", 1, nat_enum_hash, p.t_univ_int);
    add_native(p, p.t_bool, "=?", 2, nat_enum_cmp, p.t_ordering);
    add_native(p, p.t_ordering, "=?", 2, nat_enum_cmp, p.t_ordering);
    add_native(p, p.t_univ_str, "=?", 2, nat_str_cmp, p.t_ordering);
    add_native(p, p.t_univ_str, "Hash", 1, nat_str_hash, p.t_univ_int);
    add_native(p, p.t_univ_str, "|", 2, nat_str_concat, p.t_univ_str);
    add_native(p, p.t_univ_str, "Length", 1, nat_str_len, p.t_univ_int);
    add_native(p, p.t_univ_str, "magnitude", 1, nat_seq_magnitude, p.t_univ_int);
    add_native(p, p.t_univ_str, "To_String", 1, nat_to_string, p.t_univ_str);

    // stand-alone builtin functions
    auto add_func = [&](const std::string& name, int arity, NativeFn fn, TypeDesc* rt) {
        p.func_defs.push_back(std::make_unique<OpDef>());
        OpDef* def = p.func_defs.back().get();
        def->name = name;
        p.funcs.push_back(std::make_unique<OpImpl>());
        OpImpl* f = p.funcs.back().get();
        f->name = name;
        f->def = def;
        f->native = fn;
        f->arity = arity;
        f->result_type = rt;
        p.func_by_name[name] = f;
    };
    add_func("Println", 1, nat_println, nullptr);
    add_func("To_String", 1, nat_to_string, p.t_univ_str);
    add_func("@mute", 0, nat_mute, nullptr);
    add_func("@unmute", 0, nat_unmute, nullptr);
}

}  // namespace psl
