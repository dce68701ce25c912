#include "synthrad/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace synthrad {

namespace {

int detect_thread_count() {
    if (const char* env = std::getenv("SYNTHRAD_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return std::min(n, 64);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
}

struct Job {
    const std::function<void(std::int64_t, std::int64_t)>* fn = nullptr;
    std::int64_t n = 0;
    std::int64_t chunks = 0;
    std::atomic<std::int64_t> next{0};
    std::atomic<std::int64_t> pending{0};
};

// Persistent pool. Each run() publishes a fresh Job; workers snapshot the
// current job and pull chunk indices from its counter, so a worker that wakes
// late simply finds the counter exhausted. Chunk boundaries depend only on
// (n, chunks), never on scheduling, and every chunk is executed by exactly
// one task: results match the serial path bit for bit.
class Pool {
  public:
    Pool() : threads_(detect_thread_count()) {
        for (int i = 0; i < threads_ - 1; ++i) workers_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    int threads() const { return threads_; }

    void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->n = n;
        job->chunks = std::min<std::int64_t>(threads_, n);
        job->pending.store(job->chunks, std::memory_order_relaxed);
        {
            std::lock_guard lock(mutex_);
            current_ = job;
            ++generation_;
        }
        cv_.notify_all();
        drain(*job);
        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [&] { return job->pending.load(std::memory_order_acquire) == 0; });
    }

  private:
    void drain(Job& job) {
        while (true) {
            const std::int64_t chunk = job.next.fetch_add(1, std::memory_order_relaxed);
            if (chunk >= job.chunks) break;
            const std::int64_t begin = chunk * job.n / job.chunks;
            const std::int64_t end = (chunk + 1) * job.n / job.chunks;
            if (begin < end) (*job.fn)(begin, end);
            if (job.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard lock(mutex_);
                done_cv_.notify_all();
            }
        }
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        while (true) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return stopping_ || generation_ != seen; });
                if (stopping_) return;
                seen = generation_;
                job = current_;
            }
            if (job) drain(*job);
        }
    }

    const int threads_;
    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::shared_ptr<Job> current_;
    std::uint64_t generation_ = 0;
    bool stopping_ = false;
};

Pool& pool() {
    static Pool p;
    return p;
}

constexpr std::int64_t kSerialThreshold = 2048;

}  // namespace

int thread_count() { return pool().threads(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    if (n < kSerialThreshold || pool().threads() == 1) {
        fn(0, n);
        return;
    }
    pool().run(n, fn);
}

}  // namespace synthrad
