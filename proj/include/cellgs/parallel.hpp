#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cellgs {

/// Fixed-size worker pool running index-space loops.
///
/// Work items are claimed dynamically, so callers that need deterministic
/// results write into per-item slots and reduce them in index order afterwards.
class ThreadPool {
public:
    explicit ThreadPool(unsigned threads = default_threads()) {
        threads = std::max(1u, threads);
        for (unsigned i = 1; i < threads; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    ~ThreadPool() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        wake_.notify_all();
        for (auto& w : workers_) w.join();
    }

    unsigned size() const noexcept { return static_cast<unsigned>(workers_.size()) + 1; }

    static unsigned default_threads() {
        return std::max(1u, std::thread::hardware_concurrency());
    }

    /// Calls fn(i) for i in [0, n). Rethrows the first exception raised by fn.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        if (workers_.empty() || n == 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::lock_guard lock(mutex_);
            job_ = &fn;
            job_size_ = n;
            next_ = 0;
            active_ = static_cast<unsigned>(workers_.size());
            error_ = nullptr;
            ++generation_;
        }
        wake_.notify_all();
        run_items();
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return active_ == 0; });
        job_ = nullptr;
        if (error_) std::rethrow_exception(error_);
    }

private:
    void run_items() {
        for (;;) {
            std::size_t i;
            const std::function<void(std::size_t)>* job;
            {
                std::lock_guard lock(mutex_);
                if (next_ >= job_size_) return;
                i = next_++;
                job = job_;
            }
            try {
                (*job)(i);
            } catch (...) {
                std::lock_guard lock(mutex_);
                if (!error_) error_ = std::current_exception();
                next_ = job_size_;
            }
        }
    }

    void worker_loop() {
        std::size_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
                if (stopping_) return;
                seen = generation_;
            }
            run_items();
            {
                std::lock_guard lock(mutex_);
                if (--active_ == 0) done_.notify_one();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t job_size_ = 0;
    std::size_t next_ = 0;
    std::size_t generation_ = 0;
    unsigned active_ = 0;
    bool stopping_ = false;
    std::exception_ptr error_;
};

}  // namespace cellgs
