#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sgs {

// Small fixed pool used for intra-op parallelism. Work is split into
// contiguous index ranges and every output element is written by exactly
// one task, so results are bitwise identical for any thread count.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  // 0 keeps the current size; otherwise resizes the pool (worker threads
  // beyond the calling thread; 1 means run everything inline).
  void set_threads(int n) {
    if (n <= 0) return;
    std::lock_guard<std::mutex> resize_lock(resize_mutex_);
    stop_workers();
    start_workers(n - 1);
    threads_ = n;
  }

  int threads() const { return threads_; }

  void parallel_for(std::int64_t count,
                    const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (count <= 0) return;
    const int nt = threads_;
    if (nt <= 1 || count == 1 || workers_.empty()) {
      fn(0, count);
      return;
    }
    std::lock_guard<std::mutex> run_lock(run_mutex_);
    const std::int64_t chunks = std::min<std::int64_t>(nt, count);
    const std::int64_t base = count / chunks;
    const std::int64_t rem = count % chunks;
    job_ = &fn;
    ranges_.clear();
    std::int64_t begin = 0;
    for (std::int64_t c = 0; c < chunks; ++c) {
      const std::int64_t len = base + (c < rem ? 1 : 0);
      ranges_.emplace_back(begin, begin + len);
      begin += len;
    }
    pending_.store(static_cast<int>(ranges_.size()) - 1);
    next_range_.store(1);
    {
      std::lock_guard<std::mutex> lk(mutex_);
      generation_++;
    }
    cv_.notify_all();
    // The calling thread takes the first chunk, then helps drain the rest.
    fn(ranges_[0].first, ranges_[0].second);
    drain();
    while (pending_.load(std::memory_order_acquire) > 0) {
      std::this_thread::yield();
    }
    job_ = nullptr;
  }

  ~ThreadPool() { stop_workers(); }

 private:
  ThreadPool() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    start_workers(static_cast<int>(hw) - 1);
    threads_ = static_cast<int>(hw);
  }

  void start_workers(int n) {
    stopping_ = false;
    for (int i = 0; i < n; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void stop_workers() {
    {
      std::lock_guard<std::mutex> lk(mutex_);
      stopping_ = true;
      generation_++;
    }
    cv_.notify_all();
    for (auto& w : workers_) {
      if (w.joinable()) w.join();
    }
    workers_.clear();
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_.wait(lk, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      drain();
    }
  }

  void drain() {
    const auto* job = job_;
    if (job == nullptr) return;
    for (;;) {
      const int idx = next_range_.fetch_add(1);
      if (idx >= static_cast<int>(ranges_.size())) return;
      (*job)(ranges_[static_cast<std::size_t>(idx)].first,
             ranges_[static_cast<std::size_t>(idx)].second);
      pending_.fetch_sub(1, std::memory_order_release);
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::mutex run_mutex_;
  std::mutex resize_mutex_;
  std::condition_variable cv_;
  std::uint64_t generation_ = 0;
  bool stopping_ = false;
  int threads_ = 1;

  const std::function<void(std::int64_t, std::int64_t)>* job_ = nullptr;
  std::vector<std::pair<std::int64_t, std::int64_t>> ranges_;
  std::atomic<int> next_range_{0};
  std::atomic<int> pending_{0};
};

inline void parallel_for(std::int64_t count,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
  ThreadPool::instance().parallel_for(count, fn);
}

}  // namespace sgs
