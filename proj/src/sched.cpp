#include "sched.hpp"

#include <chrono>

namespace psl {

namespace {
thread_local int tl_worker = 0;  // foreign threads enqueue on server 0
}

Sched::Sched(const RunOptions& opts, RunStats* stats) : stats_(stats) {
    seq_ = opts.sequential;
    nservers_ = seq_ ? 1 : (opts.servers > 0 ? opts.servers
                                             : static_cast<int>(
                                                   std::thread::hardware_concurrency()));
    if (nservers_ < 1) nservers_ = 1;
    seed_ = opts.seed;
    stats_->servers = nservers_;
    deques_.reserve(nservers_);
    for (int i = 0; i < nservers_; ++i) deques_.push_back(std::make_unique<Deque>());
    tl_worker = 0;  // the constructing thread is server 0
    for (int i = 1; i < nservers_; ++i)
        threads_.emplace_back([this, i] { worker_loop(i); });
}

Sched::~Sched() {
    stop_.store(true);
    idle_cv_.notify_all();
    for (auto& t : threads_) t.join();
}

int Sched::self_id() const { return tl_worker < nservers_ ? tl_worker : 0; }

void Sched::run_task(Task t) {
    stats_->on_start();
    if (t.m->cancelled_up()) {
        stats_->discarded.fetch_add(1, std::memory_order_relaxed);
    } else {
        try {
            t.fn();
        } catch (Fault& f) {
            t.m->record_fault(std::move(f));
        }
        stats_->executed.fetch_add(1, std::memory_order_relaxed);
    }
    stats_->on_stop();
    t.m->outstanding.fetch_sub(1, std::memory_order_release);
}

void Sched::spawn(Master* m, std::function<void()> fn) {
    m->outstanding.fetch_add(1, std::memory_order_relaxed);
    stats_->spawned.fetch_add(1, std::memory_order_relaxed);
    Task t{m, std::move(fn)};
    if (seq_) {
        run_task(std::move(t));
        return;
    }
    Deque& d = *deques_[self_id()];
    {
        std::lock_guard<std::mutex> lk(d.mu);
        d.dq.push_back(std::move(t));
    }
    idle_cv_.notify_one();
}

bool Sched::help_one() {
    int id = self_id();
    Deque& own = *deques_[id];
    Task t;
    bool got = false;
    {
        std::lock_guard<std::mutex> lk(own.mu);
        if (!own.dq.empty()) {
            t = std::move(own.dq.back());
            own.dq.pop_back();
            got = true;
        }
    }
    if (!got && nservers_ > 1) {
        thread_local std::mt19937_64 rng(seed_ * 0x9e3779b97f4a7c15ULL + tl_worker + 1);
        int start = static_cast<int>(rng() % nservers_);
        for (int k = 0; k < nservers_ && !got; ++k) {
            int v = (start + k) % nservers_;
            if (v == id) continue;
            Deque& vic = *deques_[v];
            std::lock_guard<std::mutex> lk(vic.mu);
            if (!vic.dq.empty()) {
                t = std::move(vic.dq.front());
                vic.dq.pop_front();
                got = true;
                stats_->steals.fetch_add(1, std::memory_order_relaxed);
            }
        }
    }
    if (!got) return false;
    run_task(std::move(t));
    return true;
}

void Sched::await(Master* m) {
    while (m->outstanding.load(std::memory_order_acquire) > 0) {
        if (!help_one()) std::this_thread::yield();
    }
    std::lock_guard<std::mutex> lk(m->mu);
    if (m->has_fault) {
        Fault f = std::move(m->fault_val);
        m->has_fault = false;
        throw f;
    }
}

void Sched::worker_loop(int id) {
    tl_worker = id;
    while (!stop_.load(std::memory_order_relaxed)) {
        if (!help_one()) {
            std::unique_lock<std::mutex> lk(idle_mu_);
            idle_cv_.wait_for(lk, std::chrono::milliseconds(1));
        }
    }
}

}  // namespace psl
