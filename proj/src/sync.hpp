#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <vector>

#include "exec.hpp"

namespace psl {

// A parked queued call whose dequeue condition was false. The caller
// blocks (helping the scheduler) until done; the server that changes the
// object's state runs the body under its own lock tenure.
struct QueuedCall {
    OpImpl* op = nullptr;
    TypeDesc* self = nullptr;
    std::vector<Place> args;  // places into the parked caller's frame
    Region* result_region = nullptr;
    Value result;
    bool has_fault = false;
    Fault fault_val;
    std::atomic<bool> done{false};
};

// The only shared-mutable runtime entity. Components are accessed only
// while holding the lock.
struct ConcObj {
    int64_t id = 0;
    TypeDesc* type = nullptr;
    Region* region = nullptr;
    std::vector<Value> comps;
    std::mutex mu;
    std::condition_variable cv;
    int readers = 0;
    bool writer = false;
    std::deque<QueuedCall*> waiting;
};

class SyncRegistry {
public:
    explicit SyncRegistry(ExecCtx& cx) : cx_(cx) {}

    ConcObj* create(TypeDesc* type, Region* region);

    // Dispatch a locked or queued operation on the controlling argument.
    Value call(OpImpl* op, TypeDesc* self, Place* args, size_t nargs,
               Region* result_region);

    // Post-run check: no parked caller remains (deadlocked program).
    size_t waiting_count();

private:
    void log_event(ConcObj* o, const std::string& op, const char* phase, const char* mode);
    void service_queue(ConcObj* o);  // exclusive lock held
    bool cond_holds(QueuedCall* qc);
    Value run_shared(ConcObj* o, OpImpl* op, TypeDesc* self, Place* args, size_t nargs,
                    Region* result_region);

    ExecCtx& cx_;
    std::mutex reg_mu_;
    std::vector<std::unique_ptr<ConcObj>> objs_;
    std::mutex log_mu_;
};

}  // namespace psl
