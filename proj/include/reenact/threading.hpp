#pragma once

#include <condition_variable>
#include <exception>

#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "reenact/tensor.hpp"

namespace reenact {

namespace detail {

inline bool& in_worker_flag() {
  thread_local bool flag = false;
  return flag;
}

/// True while this thread is inside a parallel_for dispatch; nested regions
/// run serially instead of re-entering the pool.
inline bool& in_region_flag() {
  thread_local bool flag = false;
  return flag;
}

/// Persistent pool executing statically partitioned index ranges.
/// Every index writes only its own output slice, so results are identical
/// for any worker count.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int threads() const { return n_threads_; }

  void run(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    if (n <= 0) return;
    // Serial when nested, tiny, or single-threaded.
    if (n_threads_ <= 1 || n == 1 || in_worker_flag() || in_region_flag()) {
      for (std::int64_t i = 0; i < n; ++i) fn(i);
      return;
    }
    in_region_flag() = true;
    {
      std::unique_lock lock(mutex_);
      task_ = &fn;
      task_n_ = n;
      task_grad_mode_ = grad_mode();  // workers inherit the caller's mode
      pending_ = n_threads_ - 1;
      ++generation_;
      cv_start_.notify_all();
    }
    run_chunk(0);  // caller thread takes the first chunk
    std::exception_ptr err;
    {
      std::unique_lock lock(mutex_);
      cv_done_.wait(lock, [&] { return pending_ == 0; });
      task_ = nullptr;
      err = task_error_;
      task_error_ = nullptr;
    }
    in_region_flag() = false;
    if (err) std::rethrow_exception(err);
  }

  ~ThreadPool() {
    {
      std::unique_lock lock(mutex_);
      stopping_ = true;
      ++generation_;
      cv_start_.notify_all();
    }
    for (auto& t : workers_) t.join();
  }

 private:
  ThreadPool() {
#ifdef __GLIBC__
    // Activation and gradient buffers are multi-MB and recycled every batch;
    // keeping them inside the heap arena avoids per-batch page faults.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
#endif
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* cap = std::getenv("REENACT_THREADS")) {
      const int c = std::atoi(cap);
      if (c >= 1 && c < hw) hw = c;
    }
    n_threads_ = hw;
    for (int t = 1; t < n_threads_; ++t) {
      workers_.emplace_back([this, t] { worker_loop(t); });
    }
  }

  void run_chunk(int t) {
    const std::int64_t n = task_n_;
    const std::int64_t lo = n * t / n_threads_;
    const std::int64_t hi = n * (t + 1) / n_threads_;
    try {
      for (std::int64_t i = lo; i < hi; ++i) (*task_)(i);
    } catch (...) {
      std::unique_lock lock(mutex_);
      if (!task_error_) task_error_ = std::current_exception();
    }
  }

  void worker_loop(int t) {
    in_worker_flag() = true;
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        cv_start_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stopping_) return;
        grad_mode() = task_grad_mode_;
      }
      run_chunk(t);
      std::unique_lock lock(mutex_);
      if (--pending_ == 0) cv_done_.notify_all();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_start_;
  std::condition_variable cv_done_;
  const std::function<void(std::int64_t)>* task_ = nullptr;
  std::int64_t task_n_ = 0;
  bool task_grad_mode_ = true;
  std::exception_ptr task_error_;
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stopping_ = false;
  int n_threads_ = 1;
};

}  // namespace detail

/// fn(i) for i in [0,n), possibly on several threads. fn must only write
/// state owned by index i.
inline void parallel_for(std::int64_t n,
                         const std::function<void(std::int64_t)>& fn) {
  detail::ThreadPool::instance().run(n, fn);
}

inline int worker_count() { return detail::ThreadPool::instance().threads(); }

}  // namespace reenact
