#include "value.hpp"

#include <mutex>
#include <unordered_set>

namespace psl {

namespace {

std::atomic<int64_t> g_allocated{0};
std::atomic<int64_t> g_released{0};
std::atomic<int64_t> g_live{0};
std::atomic<int64_t> g_peak{0};

void count_alloc(Region* region) {
    g_allocated.fetch_add(1, std::memory_order_relaxed);
    int64_t now = g_live.fetch_add(1, std::memory_order_relaxed) + 1;
    int64_t peak = g_peak.load(std::memory_order_relaxed);
    while (now > peak &&
           !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
    if (region) region->live.fetch_add(1, std::memory_order_relaxed);
}

void count_release(Region* region) {
    g_released.fetch_add(1, std::memory_order_relaxed);
    g_live.fetch_sub(1, std::memory_order_relaxed);
    if (region) region->live.fetch_sub(1, std::memory_order_relaxed);
}

std::mutex g_symbols_mu;
std::unordered_set<std::string> g_symbols;

}  // namespace

const std::string* intern_symbol(const std::string& text) {
    std::lock_guard<std::mutex> lock(g_symbols_mu);
    return &*g_symbols.insert(text).first;
}

Region::~Region() = default;

Value Value::make_str(std::string text) {
    Value x;
    x.kind = VK::Str;
    x.str = new StrRep{std::move(text)};
    return x;
}

bool Value::truthy() const {
    static const std::string* t = intern_symbol("#true");
    return kind == VK::Enum && sym == t;
}

CompRep* alloc_comp(TypeDesc* type, Region* region, size_t nslots) {
    auto* c = new CompRep;
    c->type = type;
    c->region = region;
    c->slots.resize(nslots);
    count_alloc(region);
    return c;
}

ArrayRep* alloc_array(Region* region, int64_t first, size_t len) {
    auto* a = new ArrayRep;
    a->region = region;
    a->first = first;
    a->elems.resize(len);
    count_alloc(region);
    return a;
}

SetRep* alloc_set(Region* region) {
    auto* s = new SetRep;
    s->region = region;
    return s;
}

Value make_comp(CompRep* c) {
    Value x;
    x.kind = VK::Comp;
    x.comp = c;
    return x;
}

Value make_array(ArrayRep* a) {
    Value x;
    x.kind = VK::Arr;
    x.arr = a;
    return x;
}

Value make_set(SetRep* s) {
    Value x;
    x.kind = VK::Set;
    x.set = s;
    return x;
}

void Value::release() {
    switch (kind) {
        case VK::Str:
            if (str->refs.fetch_sub(1) == 1) delete str;
            break;
        case VK::Comp:
            count_release(comp->region);
            delete comp;  // slots release recursively
            break;
        case VK::Arr:
            count_release(arr->region);
            delete arr;
            break;
        case VK::Set:
            delete set;
            break;
        default:
            break;  // scalars, slices and handles own nothing
    }
    kind = VK::Null;
    i = 0;
    b = 0;
}

Value Value::copy(Region* into) const {
    switch (kind) {
        case VK::Str: {
            str->refs.fetch_add(1);
            Value x;
            x.kind = VK::Str;
            x.str = str;
            return x;
        }
        case VK::Comp: {
            CompRep* c = alloc_comp(comp->type, into, comp->slots.size());
            for (size_t k = 0; k < comp->slots.size(); ++k)
                c->slots[k] = comp->slots[k].copy(into);
            return make_comp(c);
        }
        case VK::Arr: {
            ArrayRep* a = alloc_array(into, arr->first, arr->elems.size());
            for (size_t k = 0; k < arr->elems.size(); ++k)
                a->elems[k] = arr->elems[k].copy(into);
            return make_array(a);
        }
        case VK::Slice: {
            // Copying a slice materializes an array of its own.
            int64_t len = sb.hi - sb.lo + 1;
            if (len < 0) len = 0;
            ArrayRep* a = alloc_array(into, 1, static_cast<size_t>(len));
            for (int64_t k = 0; k < len; ++k)
                a->elems[static_cast<size_t>(k)] =
                    arr->elems[static_cast<size_t>(sb.lo + k - arr->first)].copy(into);
            return make_array(a);
        }
        case VK::Set: {
            SetRep* s = alloc_set(into);
            s->interval = set->interval;
            s->lo = set->lo;
            s->hi = set->hi;
            for (const auto& e : set->elems) s->elems.push_back(e.copy(into));
            return make_set(s);
        }
        default: {
            Value x;
            x.kind = kind;
            x.i = i;
            x.b = b;
            return x;
        }
    }
}

void Value::reattribute(Region* into) {
    switch (kind) {
        case VK::Comp:
            if (comp->region != into) {
                if (comp->region) comp->region->live.fetch_sub(1, std::memory_order_relaxed);
                if (into) into->live.fetch_add(1, std::memory_order_relaxed);
                comp->region = into;
            }
            for (auto& s : comp->slots) s.reattribute(into);
            break;
        case VK::Arr:
            if (arr->region != into) {
                if (arr->region) arr->region->live.fetch_sub(1, std::memory_order_relaxed);
                if (into) into->live.fetch_add(1, std::memory_order_relaxed);
                arr->region = into;
            }
            for (auto& e : arr->elems) e.reattribute(into);
            break;
        case VK::Set:
            set->region = into;
            for (auto& e : set->elems) e.reattribute(into);
            break;
        default:
            break;
    }
}

int64_t live_objects() { return g_live.load(); }
int64_t peak_live_objects() { return g_peak.load(); }
int64_t total_allocated() { return g_allocated.load(); }
int64_t total_released() { return g_released.load(); }

void reset_accounting() {
    g_allocated = 0;
    g_released = 0;
    g_live = 0;
    g_peak = 0;
}

bool scalar_equal(const Value& a, const Value& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case VK::Null: return true;
        case VK::Int:
        case VK::Char: return a.i == b.i;
        case VK::Real: return a.r == b.r;
        case VK::Enum: return a.sym == b.sym;
        case VK::Str: return a.str == b.str || a.str->text == b.str->text;
        case VK::Range: return a.i == b.i && a.b == b.b;
        case VK::Conc: return a.conc == b.conc;
        default: return false;
    }
}

size_t value_hash(const Value& v) {
    auto mix = [](uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    };
    switch (v.kind) {
        case VK::Int:
        case VK::Char: return static_cast<size_t>(mix(static_cast<uint64_t>(v.i)));
        case VK::Enum: return std::hash<const void*>()(v.sym);
        case VK::Str: return std::hash<std::string>()(v.str->text);
        default: return static_cast<size_t>(mix(static_cast<uint64_t>(v.i) ^ 0x5bu));
    }
}

int64_t seq_first(const Value& v) {
    if (v.kind == VK::Slice) return v.sb.lo;
    if (v.kind == VK::Arr) return v.arr->first;
    return 1;
}

int64_t seq_last(const Value& v) {
    if (v.kind == VK::Slice) return v.sb.hi;
    if (v.kind == VK::Arr) return v.arr->first + static_cast<int64_t>(v.arr->elems.size()) - 1;
    return 0;
}

int64_t seq_length(const Value& v) {
    int64_t n = seq_last(v) - seq_first(v) + 1;
    return n < 0 ? 0 : n;
}

Value* seq_elem(const Value& v, int64_t index) {
    if (v.kind == VK::Slice) {
        if (index < v.sb.lo || index > v.sb.hi) return nullptr;
        return &v.arr->elems[static_cast<size_t>(index - v.arr->first)];
    }
    if (v.kind == VK::Arr) {
        int64_t off = index - v.arr->first;
        if (off < 0 || off >= static_cast<int64_t>(v.arr->elems.size())) return nullptr;
        return &v.arr->elems[static_cast<size_t>(off)];
    }
    return nullptr;
}

bool set_contains(const SetRep& s, const Value& v) {
    if (s.interval) return v.kind == VK::Int && v.i >= s.lo && v.i <= s.hi;
    for (const auto& e : s.elems)
        if (scalar_equal(e, v)) return true;
    return false;
}

void set_insert(SetRep& s, Value v) {
    if (s.interval) {
        // Degrade to list form.
        for (int64_t k = s.lo; k <= s.hi; ++k) s.elems.push_back(Value::make_int(k));
        s.interval = false;
        s.lo = 1;
        s.hi = 0;
    }
    if (!set_contains(s, v)) s.elems.push_back(std::move(v));
}

bool set_remove_any(SetRep& s, Value& out) {
    if (s.interval) {
        if (s.lo > s.hi) return false;
        out = Value::make_int(s.lo++);
        return true;
    }
    if (s.elems.empty()) return false;
    out = std::move(s.elems.back());
    s.elems.pop_back();
    return true;
}

int64_t set_size(const SetRep& s) {
    if (s.interval) return s.hi >= s.lo ? s.hi - s.lo + 1 : 0;
    return static_cast<int64_t>(s.elems.size());
}

static void utf8_append(std::string& out, int64_t cp) {
    uint32_t c = static_cast<uint32_t>(cp);
    if (c < 0x80) {
        out += static_cast<char>(c);
    } else if (c < 0x800) {
        out += static_cast<char>(0xC0 | (c >> 6));
        out += static_cast<char>(0x80 | (c & 0x3F));
    } else if (c < 0x10000) {
        out += static_cast<char>(0xE0 | (c >> 12));
        out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (c & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (c >> 18));
        out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (c & 0x3F));
    }
}

std::string value_to_string(const Value& v) {
    switch (v.kind) {
        case VK::Null: return "null";
        case VK::Int: return std::to_string(v.i);
        case VK::Real: {
            char buf[32];
            snprintf(buf, sizeof buf, "%g", v.r);
            return buf;
        }
        case VK::Char: {
            std::string s;
            utf8_append(s, v.i);
            return s;
        }
        case VK::Enum: return *v.sym;
        case VK::Str: return v.str->text;
        case VK::Range:
            return std::to_string(v.i) + " .. " + std::to_string(v.b);
        case VK::Comp: {
            std::string s = "(";
            for (size_t k = 0; k < v.comp->slots.size(); ++k) {
                if (k) s += ", ";
                s += value_to_string(v.comp->slots[k]);
            }
            return s + ")";
        }
        case VK::Arr:
        case VK::Slice: {
            std::string s = "[";
            for (int64_t k = seq_first(v); k <= seq_last(v); ++k) {
                if (k != seq_first(v)) s += ", ";
                s += value_to_string(*seq_elem(v, k));
            }
            return s + "]";
        }
        case VK::Set: {
            std::string s = "{";
            bool sep = false;
            if (v.set->interval) {
                for (int64_t k = v.set->lo; k <= v.set->hi; ++k) {
                    if (sep) s += ", ";
                    s += std::to_string(k);
                    sep = true;
                }
            } else {
                for (const auto& e : v.set->elems) {
                    if (sep) s += ", ";
                    s += value_to_string(e);
                    sep = true;
                }
            }
            return s + "}";
        }
        case VK::Conc: return "<concurrent>";
    }
    return "?";
}

}  // namespace psl
