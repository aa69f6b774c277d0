#include "medkan/threadpool.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace medkan {
namespace {

thread_local bool t_in_parallel = false;

class Pool {
public:
    explicit Pool(int n) : size_(n < 1 ? 1 : n) {
        for (int i = 1; i < size_; ++i)
            workers_.emplace_back([this, i] { worker_loop(i); });
    }

    ~Pool() {
        {
            std::lock_guard lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    int size() const { return size_; }

    void run(std::size_t n, std::size_t grain,
             const std::function<void(std::size_t, std::size_t)>& fn) {
        int parts = size_;
        if (grain > 0) {
            std::size_t max_parts = (n + grain - 1) / grain;
            if (max_parts < static_cast<std::size_t>(parts))
                parts = static_cast<int>(max_parts);
        }
        if (parts <= 1) {
            fn(0, n);
            return;
        }
        std::size_t chunk = (n + parts - 1) / parts;
        {
            std::lock_guard lk(mu_);
            job_fn_ = &fn;
            job_n_ = n;
            job_chunk_ = chunk;
            job_parts_ = parts;
            pending_.store(parts - 1, std::memory_order_relaxed);
            ++epoch_;
        }
        cv_.notify_all();
        fn(0, std::min(chunk, n)); // part 0 runs on the calling thread
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [this] { return pending_.load(std::memory_order_acquire) == 0; });
        job_fn_ = nullptr;
    }

private:
    void worker_loop(int me) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
            std::size_t n = 0, chunk = 0;
            int parts = 0;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
                if (stop_) return;
                seen = epoch_;
                fn = job_fn_;
                n = job_n_;
                chunk = job_chunk_;
                parts = job_parts_;
            }
            if (fn && me < parts) {
                std::size_t b = chunk * me;
                std::size_t e = std::min(b + chunk, n);
                if (b < e) {
                    t_in_parallel = true;
                    (*fn)(b, e);
                    t_in_parallel = false;
                }
            }
            if (me < parts) {
                if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                    std::lock_guard lk(mu_);
                    done_cv_.notify_one();
                }
            }
        }
    }

    int size_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    bool stop_ = false;
    std::uint64_t epoch_ = 0;
    const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
    std::size_t job_n_ = 0, job_chunk_ = 0;
    int job_parts_ = 0;
    std::atomic<int> pending_{0};
};

std::unique_ptr<Pool> g_pool;
std::mutex g_pool_mu;

Pool& pool() {
    std::lock_guard lk(g_pool_mu);
    if (!g_pool) {
        unsigned hw = std::thread::hardware_concurrency();
        g_pool = std::make_unique<Pool>(hw ? static_cast<int>(hw) : 1);
    }
    return *g_pool;
}

} // namespace

void set_num_threads(int n) {
    if (n == 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    std::lock_guard lk(g_pool_mu);
    if (g_pool && g_pool->size() == n) return;
    g_pool.reset();
    g_pool = std::make_unique<Pool>(n);
}

int num_threads() { return pool().size(); }

void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    // nested calls degrade to a plain loop; the pool serves one job at a time
    if (t_in_parallel) {
        fn(0, n);
        return;
    }
    Pool& p = pool();
    if (p.size() == 1 || (grain > 0 && n <= grain)) {
        fn(0, n);
        return;
    }
    t_in_parallel = true;
    p.run(n, grain, fn);
    t_in_parallel = false;
}

} // namespace medkan
