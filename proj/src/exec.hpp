#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sema.hpp"
#include "value.hpp"

namespace psl {

class Sched;
struct Master;
class SyncRegistry;

// Fault raised by runtime checks; carried to the session boundary.
struct Fault {
    std::string code;
    std::string message;
    Span span;
};

// An assignable location plus the region charged for what it holds.
struct Place {
    Value* slot = nullptr;
    Region* region = nullptr;
};

struct ControlFlow {
    enum K { Normal, Return, ExitLoop, Continued } k = Normal;
    Value val;
    bool spawned = false;  // Continued: a follow-up iteration was spawned
};

// Per-iteration binding storage for a loop; records of enclosing loops
// chain through parent. Records live on the driving picothread's stack;
// joins guarantee they outlive every spawned descendant.
struct Iter {
    int loop_id = -1;
    Iter* parent = nullptr;
    std::vector<Value> vals;
    std::vector<Place> refs;
};

struct LoopRt;  // active loop driver state, internal to exec.cpp

struct Frame {
    OpImpl* op = nullptr;
    TypeDesc* self = nullptr;
    Region region;  // declared before the slots so they are released first
    std::vector<Value> vals;
    std::vector<Place> refs;
    Region* result_region = nullptr;
    Place ret_place{};  // set by `return` in ref-returning operations

    explicit Frame(Region* parent_region) : region(parent_region) {}
};

// One thread of control's view: the shared frame plus its own iteration
// chain, cancellation scope and innermost loop driver.
struct Env {
    Frame* f = nullptr;
    Iter* iter = nullptr;
    Master* cancel = nullptr;
    LoopRt* loop = nullptr;
};

struct RunOptions {
    bool sequential = false;
    int servers = 0;  // 0: hardware count
    uint64_t seed = 0;
    bool stats = false;
    bool debug_sync = false;
    int lock_timeout_ms = 0;
};

struct RunStats {
    std::atomic<int64_t> spawned{0};
    std::atomic<int64_t> steals{0};
    std::atomic<int64_t> executed{0};
    std::atomic<int64_t> discarded{0};
    std::atomic<int64_t> active{0};
    std::atomic<int64_t> max_active{0};
    int servers = 1;

    void on_start() {
        int64_t now = active.fetch_add(1) + 1;
        int64_t peak = max_active.load();
        while (now > peak && !max_active.compare_exchange_weak(peak, now)) {
        }
    }
    void on_stop() { active.fetch_sub(1); }
};

// Shared interpreter state for one program run.
struct ExecCtx {
    Program* prog = nullptr;
    Sched* sched = nullptr;
    SyncRegistry* sync = nullptr;
    RunStats stats;
    RunOptions opts;
    std::ostream* out = nullptr;
    std::ostream* out_real = nullptr;  // restored by the REPL unmute marker
    std::ostream* err = nullptr;
    Region root_region;
    std::vector<Value> globals;

    ExecCtx() : root_region(nullptr) {}
};

// Argument being passed: a place, optionally keeping a temporary alive.
struct Arg {
    Place place;
    Value temp;

    void hold(Value v, Region* r) {
        temp = std::move(v);
        place.slot = &temp;
        place.region = r;
    }
};

// Evaluation entry points (exec.cpp).
Value eval_expr(ExecCtx& cx, Env& env, const Node* e, Region* target);
Place eval_place(ExecCtx& cx, Env& env, const Node* e);
ControlFlow exec_stmt(ExecCtx& cx, Env& env, const Node* s);
ControlFlow exec_body(ExecCtx& cx, Env& env, const Node* body);

// Invoke an operation with bound argument places.
Value invoke(ExecCtx& cx, OpImpl* op, TypeDesc* self, Arg* args, size_t nargs,
             Region* result_region, Master* cancel);

// Sync-module entry points: run an interpreted body with pre-bound
// argument places (locking is the caller's responsibility).
Value run_plain_body(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* args, size_t nargs,
                     Region* result_region, Master* cancel);
bool eval_dequeue_cond(ExecCtx& cx, OpImpl* op, TypeDesc* self, Place* args, size_t nargs);

[[noreturn]] void fault(const std::string& code, const std::string& msg, Span sp = {});

}  // namespace psl
