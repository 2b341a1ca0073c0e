#include "sync.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <thread>

#include "sched.hpp"

namespace psl {

namespace {
// Locks held by the current server thread, for re-entry detection.
thread_local std::vector<ConcObj*> tl_held;

bool holds(ConcObj* o) {
    return std::find(tl_held.begin(), tl_held.end(), o) != tl_held.end();
}

struct HeldMark {
    ConcObj* o;
    explicit HeldMark(ConcObj* obj) : o(obj) { tl_held.push_back(o); }
    ~HeldMark() { tl_held.pop_back(); }
};
}  // namespace

ConcObj* SyncRegistry::create(TypeDesc* type, Region* region) {
    std::lock_guard<std::mutex> lk(reg_mu_);
    objs_.push_back(std::make_unique<ConcObj>());
    ConcObj* o = objs_.back().get();
    o->id = static_cast<int64_t>(objs_.size());
    o->type = type;
    o->region = region;
    o->comps.resize(type ? type->comps.size() : 0);
    return o;
}

size_t SyncRegistry::waiting_count() {
    std::lock_guard<std::mutex> lk(reg_mu_);
    size_t n = 0;
    for (auto& o : objs_) {
        std::lock_guard<std::mutex> ol(o->mu);
        n += o->waiting.size();
    }
    return n;
}

void SyncRegistry::log_event(ConcObj* o, const std::string& op, const char* phase,
                             const char* mode) {
    if (!cx_.opts.debug_sync || !cx_.err) return;
    std::lock_guard<std::mutex> lk(log_mu_);
    *cx_.err << o->id << " " << op << " " << phase << " " << mode << "\n";
}

bool SyncRegistry::cond_holds(QueuedCall* qc) {
    bool c = eval_dequeue_cond(cx_, qc->op, qc->self, qc->args.data(), qc->args.size());
    return qc->op->queued_while ? !c : c;
}

// Exclusive lock held by the caller; run every parked call whose condition
// now holds, in arrival order, rescanning until a full pass finds none.
void SyncRegistry::service_queue(ConcObj* o) {
    bool progressed = true;
    while (progressed) {
        progressed = false;
        for (size_t i = 0; i < o->waiting.size(); ++i) {
            QueuedCall* qc = o->waiting[i];
            if (!cond_holds(qc)) continue;
            o->waiting.erase(o->waiting.begin() + static_cast<long>(i));
            log_event(o, qc->op->name, "begin", "queued");
            try {
                qc->result = run_plain_body(cx_, qc->op, qc->self, qc->args.data(),
                                            qc->args.size(), qc->result_region,
                                            /*cancel=*/nullptr);
            } catch (Fault& f) {
                qc->has_fault = true;
                qc->fault_val = std::move(f);
            }
            log_event(o, qc->op->name, "end", "queued");
            qc->done.store(true, std::memory_order_release);
            progressed = true;
            break;  // restart the scan: state may have changed again
        }
    }
    if (cx_.opts.debug_sync) {
        for (QueuedCall* qc : o->waiting)
            if (cond_holds(qc) && cx_.err) {
                std::lock_guard<std::mutex> lk(log_mu_);
                *cx_.err << o->id << " " << qc->op->name
                         << " quiescence-violation queued\n";
            }
    }
}

Value SyncRegistry::run_shared(ConcObj* o, OpImpl* op, TypeDesc* self, Place* args,
                              size_t nargs, Region* result_region) {
    {
        std::unique_lock<std::mutex> lk(o->mu);
        auto ready = [&] { return !o->writer; };
        if (cx_.opts.lock_timeout_ms > 0) {
            if (!o->cv.wait_for(lk, std::chrono::milliseconds(cx_.opts.lock_timeout_ms),
                                ready))
                fault("LOCK_TIMEOUT", "timed out acquiring shared lock");
        } else {
            o->cv.wait(lk, ready);
        }
        ++o->readers;
    }
    HeldMark hm(o);
    log_event(o, op->name, "begin", "shared");
    Value r;
    try {
        r = run_plain_body(cx_, op, self, args, nargs, result_region, nullptr);
    } catch (...) {
        log_event(o, op->name, "end", "shared");
        std::lock_guard<std::mutex> lk(o->mu);
        if (--o->readers == 0) o->cv.notify_all();
        throw;
    }
    log_event(o, op->name, "end", "shared");
    {
        std::lock_guard<std::mutex> lk(o->mu);
        if (--o->readers == 0) o->cv.notify_all();
    }
    return r;
}

Value SyncRegistry::call(OpImpl* op, TypeDesc* self, Place* args, size_t nargs,
                         Region* result_region) {
    Place& ctl = args[op->controlling_param];
    if (!ctl.slot || ctl.slot->kind != VK::Conc || !ctl.slot->conc)
        fault("NULL_DEREF", "locked operation on a null concurrent object");
    ConcObj* o = ctl.slot->conc;
    if (holds(o))
        fault("SYNC_REENTRY",
              "operation '" + op->name + "' re-enters a concurrent object already "
              "locked by this thread");

    if (op->locked_shared && !op->queued)
        return run_shared(o, op, self, args, nargs, result_region);

    std::unique_lock<std::mutex> lk(o->mu);
    auto ready = [&] { return !o->writer && o->readers == 0; };
    if (cx_.opts.lock_timeout_ms > 0) {
        if (!o->cv.wait_for(lk, std::chrono::milliseconds(cx_.opts.lock_timeout_ms),
                            ready))
            fault("LOCK_TIMEOUT", "timed out acquiring exclusive lock");
    } else {
        o->cv.wait(lk, ready);
    }
    o->writer = true;
    HeldMark hm(o);

    if (op->queued) {
        bool c = eval_dequeue_cond(cx_, op, self, args, nargs);
        bool proceed = op->queued_while ? !c : c;
        if (!proceed) {
            // park and let this server do other work while polling
            QueuedCall qc;
            qc.op = op;
            qc.self = self;
            qc.args.assign(args, args + nargs);
            qc.result_region = result_region;
            o->waiting.push_back(&qc);
            o->writer = false;
            lk.unlock();
            o->cv.notify_all();
            tl_held.pop_back();  // not holding while parked
            auto deadline = std::chrono::steady_clock::now() +
                            std::chrono::milliseconds(cx_.opts.lock_timeout_ms);
            while (!qc.done.load(std::memory_order_acquire)) {
                if (!cx_.sched->help_one()) std::this_thread::yield();
                if (cx_.opts.lock_timeout_ms > 0 &&
                    std::chrono::steady_clock::now() > deadline) {
                    std::unique_lock<std::mutex> lk2(o->mu);
                    auto it = std::find(o->waiting.begin(), o->waiting.end(), &qc);
                    if (it != o->waiting.end()) {
                        o->waiting.erase(it);
                        lk2.unlock();
                        tl_held.push_back(o);  // balance HeldMark's destructor
                        fault("LOCK_TIMEOUT",
                              "queued call '" + op->name + "' timed out waiting");
                    }
                    // a server is running the body right now; keep polling
                }
            }
            tl_held.push_back(o);  // balance HeldMark's destructor
            if (qc.has_fault) throw qc.fault_val;
            return std::move(qc.result);
        }
    }

    const char* mode = op->queued ? "queued" : "exclusive";
    log_event(o, op->name, "begin", mode);
    Value r;
    try {
        r = run_plain_body(cx_, op, self, args, nargs, result_region, nullptr);
    } catch (...) {
        log_event(o, op->name, "end", mode);
        service_queue(o);
        o->writer = false;
        lk.unlock();
        o->cv.notify_all();
        throw;
    }
    log_event(o, op->name, "end", mode);
    service_queue(o);
    o->writer = false;
    lk.unlock();
    o->cv.notify_all();
    return r;
}

}  // namespace psl
