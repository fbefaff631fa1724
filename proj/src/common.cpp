#include "floe/common.hpp"

#include <cstdlib>
#include <memory>

namespace floe {

namespace {

int default_workers() {
    if (const char* env = std::getenv("FLOEFORMER_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

std::atomic<int> g_workers{0};  // 0 = not yet resolved

thread_local bool tl_in_parallel = false;

// Work-stealing-free static pool: one shared job at a time, chunks handed out
// by an atomic counter. Job state lives on the heap so late-waking workers can
// never touch a dead frame.
class Pool {
public:
    explicit Pool(int helpers) {
        for (int i = 0; i < helpers; ++i) threads_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::unique_lock<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int64_t n, int parts, const std::function<void(int64_t, int64_t)>& fn) {
        std::unique_lock<std::mutex> serial(run_m_);  // one job at a time
        auto job = std::make_shared<Job>();
        job->n = n;
        job->parts = parts;
        job->chunk = (n + parts - 1) / parts;
        job->fn = &fn;
        {
            std::unique_lock<std::mutex> lk(m_);
            job_ = job;
            ++generation_;
        }
        cv_.notify_all();
        execute(*job);
        // fn may reference the caller's stack: wait until every chunk finished.
        while (job->done.load(std::memory_order_acquire) < job->parts) std::this_thread::yield();
        {
            std::unique_lock<std::mutex> lk(m_);
            job_.reset();
        }
        if (job->failed.load()) std::rethrow_exception(job->error);
    }

private:
    struct Job {
        std::atomic<int> next{0};
        std::atomic<int> done{0};
        std::atomic<bool> failed{false};
        std::exception_ptr error;
        std::mutex error_m;
        int64_t n = 0;
        int64_t chunk = 0;
        int parts = 0;
        const std::function<void(int64_t, int64_t)>* fn = nullptr;
    };

    // The first exception cancels the remaining chunks and is rethrown by run().
    static void execute(Job& j) {
        tl_in_parallel = true;
        for (;;) {
            const int p = j.next.fetch_add(1);
            if (p >= j.parts) break;
            const int64_t b = static_cast<int64_t>(p) * j.chunk;
            const int64_t e = std::min<int64_t>(j.n, b + j.chunk);
            if (b < e && !j.failed.load()) {
                try {
                    (*j.fn)(b, e);
                } catch (...) {
                    std::unique_lock<std::mutex> lk(j.error_m);
                    if (!j.failed.load()) {
                        j.error = std::current_exception();
                        j.failed.store(true);
                    }
                }
            }
            j.done.fetch_add(1, std::memory_order_release);
        }
        tl_in_parallel = false;
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return stop_ || (job_ && generation_ != seen); });
                if (stop_) return;
                seen = generation_;
                job = job_;
            }
            if (job) execute(*job);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::mutex run_m_;
    std::condition_variable cv_;
    std::shared_ptr<Job> job_;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

Pool& pool() {
    static Pool p(std::max(0, worker_count() - 1));  // calling thread is worker #0
    return p;
}

}  // namespace

int worker_count() {
    int v = g_workers.load();
    if (v <= 0) {
        v = default_workers();
        g_workers.store(v);
    }
    return v;
}

void set_worker_count(int n) { g_workers.store(n > 0 ? n : default_workers()); }

void parallel_for(int64_t n, int64_t work_per_item, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    constexpr int64_t kMinWork = 64 * 1024;
    const int workers = worker_count();
    if (workers <= 1 || tl_in_parallel || n < 2 || n * work_per_item < kMinWork) {
        fn(0, n);
        return;
    }
    pool().run(n, static_cast<int>(std::min<int64_t>(workers, n)), fn);
}

}  // namespace floe
