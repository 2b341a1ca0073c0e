#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "diag.hpp"

namespace psl {

struct TypeDesc;
struct ConcObj;
struct CompRep;
struct ArrayRep;
struct SetRep;
struct Region;

// Interned strings for enum literals; equality is pointer equality.
const std::string* intern_symbol(const std::string& text);

// Immutable shared string payload.
struct StrRep {
    std::string text;
    std::atomic<int> refs{1};
};

enum class VK : uint8_t {
    Null,
    Int,
    Real,
    Char,
    Enum,   // sym: interned symbol
    Str,    // str: shared immutable
    Range,  // a=lo, b=hi (inclusive)
    Comp,   // comp: owned composite
    Arr,    // arr: owned array
    Slice,  // arr view: not owned; lo/hi element indices (inclusive)
    Set,    // set: owned
    Conc,   // conc: registry-owned concurrent object handle
};

// Single-owner tree value. Copy is explicit (deep), destruction releases
// the whole subtree. 24 bytes.
struct Value {
    VK kind = VK::Null;
    union {
        int64_t i;
        double r;
        const std::string* sym;
        StrRep* str;
        CompRep* comp;
        ArrayRep* arr;
        SetRep* set;
        ConcObj* conc;
    };
    union {
        int64_t b;  // Range hi
        struct {
            int32_t lo, hi;
        } sb;  // Slice bounds
    };

    Value() : i(0), b(0) {}
    Value(const Value&) = delete;
    Value& operator=(const Value&) = delete;
    Value(Value&& o) noexcept { steal(o); }
    Value& operator=(Value&& o) noexcept {
        if (this != &o) {
            release();
            steal(o);
        }
        return *this;
    }
    ~Value() { release(); }

    bool is_null() const { return kind == VK::Null; }

    static Value make_int(int64_t v) {
        Value x;
        x.kind = VK::Int;
        x.i = v;
        return x;
    }
    static Value make_real(double v) {
        Value x;
        x.kind = VK::Real;
        x.r = v;
        return x;
    }
    static Value make_char(int64_t cp) {
        Value x;
        x.kind = VK::Char;
        x.i = cp;
        return x;
    }
    static Value make_enum(const std::string& name) {
        Value x;
        x.kind = VK::Enum;
        x.sym = intern_symbol(name);
        return x;
    }
    static Value make_str(std::string text);
    static Value make_range(int64_t lo, int64_t hi) {
        Value x;
        x.kind = VK::Range;
        x.i = lo;
        x.b = hi;
        return x;
    }
    static Value make_bool(bool v) { return make_enum(v ? "#true" : "#false"); }
    static Value make_slice(ArrayRep* base, int64_t lo, int64_t hi) {
        Value x;
        x.kind = VK::Slice;
        x.arr = base;
        x.sb.lo = static_cast<int32_t>(lo);
        x.sb.hi = static_cast<int32_t>(hi);
        return x;
    }
    static Value make_conc(ConcObj* o) {
        Value x;
        x.kind = VK::Conc;
        x.conc = o;
        return x;
    }

    bool truthy() const;  // #true
    // Deep copy charged to the given region.
    Value copy(Region* into) const;
    // Drop the payload, reclaiming storage immediately.
    void release();
    // Charge this value's subtree to a different region (counts move,
    // storage does not).
    void reattribute(Region* into);

private:
    void steal(Value& o) {
        kind = o.kind;
        i = o.i;
        b = o.b;
        o.kind = VK::Null;
        o.i = 0;
        o.b = 0;
    }
};

// Scope-lifetime accounting pool. Objects carry their region; counters
// track allocations and releases exactly.
struct Region {
    Region* parent = nullptr;
    std::atomic<int64_t> live{0};

    explicit Region(Region* p = nullptr) : parent(p) {}
    ~Region();
};

struct CompRep {
    TypeDesc* type = nullptr;
    Region* region = nullptr;
    std::vector<Value> slots;
};

struct ArrayRep {
    Region* region = nullptr;
    int64_t first = 1;
    std::vector<Value> elems;
};

// Native set: either a dense integer interval (index_set fast path) or
// a general element list with hashed lookup.
struct SetRep {
    Region* region = nullptr;
    bool interval = false;
    int64_t lo = 1, hi = 0;  // interval form, inclusive; empty when lo > hi
    std::vector<Value> elems;
};

CompRep* alloc_comp(TypeDesc* type, Region* region, size_t nslots);
ArrayRep* alloc_array(Region* region, int64_t first, size_t len);
SetRep* alloc_set(Region* region);
Value make_comp(CompRep* c);
Value make_array(ArrayRep* a);
Value make_set(SetRep* s);

// Global accounting.
int64_t live_objects();
int64_t peak_live_objects();
int64_t total_allocated();
int64_t total_released();
void reset_accounting();

// Structural equality used by "=?" on scalars and by set membership.
bool scalar_equal(const Value& a, const Value& b);
size_t value_hash(const Value& v);

// Slice/array helpers; n is a user index (first-based).
int64_t seq_first(const Value& v);
int64_t seq_last(const Value& v);
int64_t seq_length(const Value& v);
Value* seq_elem(const Value& v, int64_t index);  // nullptr when out of range

// Set ops.
bool set_contains(const SetRep& s, const Value& v);
void set_insert(SetRep& s, Value v);
bool set_remove_any(SetRep& s, Value& out);
int64_t set_size(const SetRep& s);

std::string value_to_string(const Value& v);

}  // namespace psl
