#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <random>
#include <vector>

#include "value.hpp"

using namespace psl;

namespace {

// Reference model: plain trees with explicit copy semantics.
struct Model {
    bool is_leaf = true;
    int64_t leaf = 0;
    bool null = true;
    std::vector<Model> kids;

    static Model mk_null() { return Model{}; }
    static Model mk_leaf(int64_t v) {
        Model m;
        m.null = false;
        m.leaf = v;
        return m;
    }
    static Model mk_node(std::vector<Model> kids) {
        Model m;
        m.null = false;
        m.is_leaf = false;
        m.kids = std::move(kids);
        return m;
    }
};

bool matches(const Model& m, const Value& v) {
    if (m.null) return v.is_null();
    if (m.is_leaf) return v.kind == VK::Int && v.i == m.leaf;
    if (v.kind != VK::Comp) return false;
    if (v.comp->slots.size() != m.kids.size()) return false;
    for (size_t i = 0; i < m.kids.size(); ++i)
        if (!matches(m.kids[i], v.comp->slots[i])) return false;
    return true;
}

Value build(const Model& m, Region* r) {
    if (m.null) return Value();
    if (m.is_leaf) return Value::make_int(m.leaf);
    CompRep* c = alloc_comp(nullptr, r, m.kids.size());
    for (size_t i = 0; i < m.kids.size(); ++i) c->slots[i] = build(m.kids[i], r);
    return make_comp(c);
}

Model random_model(std::mt19937& rng, int depth) {
    int roll = static_cast<int>(rng() % 10);
    if (depth >= 6 || roll < 3) return Model::mk_leaf(static_cast<int64_t>(rng() % 1000));
    if (roll == 3) return Model::mk_null();
    size_t fanout = 1 + rng() % 4;
    std::vector<Model> kids;
    for (size_t i = 0; i < fanout; ++i) kids.push_back(random_model(rng, depth + 1));
    return Model::mk_node(std::move(kids));
}

int64_t count_objects(const Model& m) {
    if (m.null || m.is_leaf) return 0;
    int64_t n = 1;
    for (const auto& k : m.kids) n += count_objects(k);
    return n;
}

}  // namespace

TEST_CASE("copy is deep and independent") {
    reset_accounting();
    {
        Region r;
        Model src = Model::mk_node({Model::mk_leaf(35), Model::mk_leaf(42)});
        Value y = build(src, &r);
        Value z = y.copy(&r);
        CHECK(matches(src, z));
        z.comp->slots[0] = Value::make_int(99);
        CHECK(matches(src, y));
        CHECK(live_objects() == 2);
    }
    CHECK(live_objects() == 0);
}

TEST_CASE("move leaves the source null with zero allocations") {
    reset_accounting();
    Region r;
    Model src = Model::mk_node({Model::mk_leaf(1), Model::mk_node({Model::mk_leaf(2)})});
    Value a = build(src, &r);
    int64_t alloc_before = total_allocated();
    Value b = std::move(a);
    CHECK(total_allocated() == alloc_before);
    CHECK(a.is_null());
    CHECK(matches(src, b));
    CHECK(live_objects() == 2);
}

TEST_CASE("swap is an involution with zero allocations") {
    reset_accounting();
    Region r;
    Model ma = Model::mk_node({Model::mk_leaf(7)});
    Model mb = Model::mk_leaf(9);
    Value a = build(ma, &r);
    Value b = build(mb, &r);
    int64_t alloc_before = total_allocated();
    std::swap(a, b);
    CHECK(matches(mb, a));
    CHECK(matches(ma, b));
    std::swap(a, b);
    CHECK(matches(ma, a));
    CHECK(matches(mb, b));
    CHECK(total_allocated() == alloc_before);
}

TEST_CASE("nulling a subtree reclaims exactly its objects") {
    reset_accounting();
    Region r;
    // chain of 1000 single-slot composites
    Value v = Value::make_int(0);
    for (int i = 0; i < 1000; ++i) {
        CompRep* c = alloc_comp(nullptr, &r, 1);
        c->slots[0] = std::move(v);
        v = make_comp(c);
    }
    CHECK(live_objects() == 1000);
    v.release();
    CHECK(v.is_null());
    CHECK(live_objects() == 0);
    CHECK(total_allocated() == total_released());
}

TEST_CASE("region attribution follows moves across regions") {
    reset_accounting();
    Region outer;
    Region inner(&outer);
    Value v = build(Model::mk_node({Model::mk_leaf(1), Model::mk_node({Model::mk_leaf(2)})}),
                    &inner);
    CHECK(inner.live.load() == 2);
    CHECK(outer.live.load() == 0);
    int64_t alloc_before = total_allocated();
    v.reattribute(&outer);
    CHECK(inner.live.load() == 0);
    CHECK(outer.live.load() == 2);
    CHECK(total_allocated() == alloc_before);
}

TEST_CASE("conservation holds over random op sequences") {
    std::mt19937 rng(12345);
    for (int trial = 0; trial < 1000; ++trial) {
        reset_accounting();
        Region r;
        constexpr int kSlots = 4;
        std::vector<Model> models(kSlots);
        std::vector<Value> vals(kSlots);
        for (int i = 0; i < kSlots; ++i) {
            models[i] = random_model(rng, 0);
            vals[i] = build(models[i], &r);
        }
        for (int step = 0; step < 12; ++step) {
            int a = static_cast<int>(rng() % kSlots);
            int b = static_cast<int>(rng() % kSlots);
            switch (rng() % 4) {
                case 0:  // copy-assign
                    if (a != b) {
                        vals[a] = vals[b].copy(&r);
                        models[a] = models[b];
                    }
                    break;
                case 1:  // move
                    if (a != b) {
                        vals[a] = std::move(vals[b]);
                        models[a] = models[b];
                        models[b] = Model::mk_null();
                    }
                    break;
                case 2:  // swap
                    if (a != b) {
                        std::swap(vals[a], vals[b]);
                        std::swap(models[a], models[b]);
                    }
                    break;
                case 3:  // set null
                    vals[a].release();
                    models[a] = Model::mk_null();
                    break;
            }
            // conservation at every step
            REQUIRE(total_allocated() - total_released() == live_objects());
            int64_t expected = 0;
            for (const auto& m : models) expected += count_objects(m);
            REQUIRE(live_objects() == expected);
            for (int i = 0; i < kSlots; ++i) REQUIRE(matches(models[i], vals[i]));
        }
        for (auto& v : vals) v.release();
        REQUIRE(live_objects() == 0);
    }
}

TEST_CASE("cross-region move equals copy then null observationally") {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        reset_accounting();
        Region r1;
        Region r2;
        Model m = random_model(rng, 0);
        Value src1 = build(m, &r1);
        Value src2 = build(m, &r1);
        // move path
        Value dest1 = std::move(src1);
        dest1.reattribute(&r2);
        // copy-then-null path
        Value dest2 = src2.copy(&r2);
        src2.release();
        CHECK(matches(m, dest1));
        CHECK(matches(m, dest2));
        CHECK(src1.is_null());
        CHECK(src2.is_null());
        CHECK(r1.live.load() == 0);
    }
}

TEST_CASE("peak live tracks the high-water mark") {
    reset_accounting();
    Region r;
    {
        Value big = build(Model::mk_node({Model::mk_node({Model::mk_leaf(1)}),
                                          Model::mk_node({Model::mk_leaf(2)})}),
                          &r);
        CHECK(live_objects() == 3);
    }
    CHECK(live_objects() == 0);
    CHECK(peak_live_objects() == 3);
}

TEST_CASE("slices view without owning") {
    reset_accounting();
    Region r;
    ArrayRep* a = alloc_array(&r, 1, 5);
    for (int i = 0; i < 5; ++i) a->elems[i] = Value::make_int(i + 10);
    Value arr = make_array(a);
    {
        Value s = Value::make_slice(a, 2, 4);
        CHECK(seq_first(s) == 2);
        CHECK(seq_last(s) == 4);
        CHECK(seq_length(s) == 3);
        CHECK(seq_elem(s, 2)->i == 11);
        CHECK(seq_elem(s, 1) == nullptr);
        std::swap(*seq_elem(s, 2), *seq_elem(s, 4));
        CHECK(a->elems[1].i == 13);
    }
    CHECK(live_objects() == 1);
}

TEST_CASE("interval sets remove in order and degrade on insert") {
    Region r;
    SetRep* s = alloc_set(&r);
    s->interval = true;
    s->lo = 1;
    s->hi = 3;
    CHECK(set_size(*s) == 3);
    CHECK(set_contains(*s, Value::make_int(2)));
    Value out;
    CHECK(set_remove_any(*s, out));
    CHECK(out.i == 1);
    set_insert(*s, Value::make_int(9));
    CHECK(!s->interval);
    CHECK(set_size(*s) == 3);
    CHECK(set_contains(*s, Value::make_int(9)));
    CHECK(!set_contains(*s, Value::make_int(1)));
    Value v = make_set(s);
}
