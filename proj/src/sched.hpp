#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "exec.hpp"

namespace psl {

// Join point for a group of picothreads. Outcomes (return / exit-loop)
// are claimed by at most one member; faults are captured first-wins and
// rethrown at the await.
struct Master {
    Master* parent = nullptr;
    std::atomic<int64_t> outstanding{0};
    std::atomic<bool> cancelled{false};
    std::atomic<bool> claimed{false};
    std::mutex mu;
    bool has_outcome = false;
    ControlFlow outcome;
    bool has_fault = false;
    Fault fault_val;

    explicit Master(Master* p = nullptr) : parent(p) {}

    bool cancelled_up() const {
        for (const Master* m = this; m; m = m->parent)
            if (m->cancelled.load(std::memory_order_relaxed)) return true;
        return false;
    }

    // Single-winner outcome claim; winner flags the rest of the group.
    bool claim(ControlFlow cf) {
        bool expected = false;
        if (!claimed.compare_exchange_strong(expected, true)) return false;
        {
            std::lock_guard<std::mutex> lk(mu);
            outcome = std::move(cf);
            has_outcome = true;
        }
        cancelled.store(true, std::memory_order_relaxed);
        return true;
    }

    void record_fault(Fault f) {
        {
            std::lock_guard<std::mutex> lk(mu);
            if (has_fault) return;
            has_fault = true;
            fault_val = std::move(f);
        }
        cancelled.store(true, std::memory_order_relaxed);
    }
};

// Work-stealing scheduler: each server services its own deque newest-first
// and steals oldest-first from a randomly chosen victim. In sequential
// mode spawn executes the item immediately (depth-first, deterministic).
class Sched {
public:
    Sched(const RunOptions& opts, RunStats* stats);
    ~Sched();

    void spawn(Master* m, std::function<void()> fn);
    // Help until the master's group is empty; rethrows a captured fault.
    void await(Master* m);
    // Run one available item (own deque, then steal); false when idle.
    bool help_one();

    bool sequential() const { return seq_; }
    int servers() const { return nservers_; }

private:
    struct Task {
        Master* m = nullptr;
        std::function<void()> fn;
    };
    struct Deque {
        std::mutex mu;
        std::deque<Task> dq;
    };

    void run_task(Task t);
    void worker_loop(int id);
    int self_id() const;

    bool seq_ = false;
    int nservers_ = 1;
    uint64_t seed_ = 0;
    RunStats* stats_ = nullptr;
    std::vector<std::unique_ptr<Deque>> deques_;
    std::vector<std::thread> threads_;
    std::atomic<bool> stop_{false};
    std::mutex idle_mu_;
    std::condition_variable idle_cv_;
};

}  // namespace psl
