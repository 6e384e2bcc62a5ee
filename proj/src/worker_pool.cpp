#include "tsd/worker_pool.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>

namespace tsd {

WorkerPool::WorkerPool(int threads) : threads_(std::max(1, threads)) {
  for (int t = 1; t < threads_; ++t) workers_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& w : workers_) w.join();
}

void WorkerPool::worker_loop() {
  long seen = 0;
  std::unique_lock<std::mutex> lk(mu_);
  while (true) {
    wake_.wait(lk, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    while (job_ && next_ < total_) {
      const int i = next_++;
      ++running_;
      lk.unlock();
      try {
        (*job_)(i);
      } catch (...) {
        lk.lock();
        errors_[i] = std::current_exception();
        lk.unlock();
      }
      lk.lock();
      if (--running_ == 0 && next_ >= total_) done_.notify_all();
    }
  }
}

void WorkerPool::parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads_ == 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::unique_lock<std::mutex> lk(mu_);
  job_ = &fn;
  next_ = 0;
  total_ = n;
  running_ = 0;
  errors_.assign(n, nullptr);
  ++generation_;
  wake_.notify_all();
  // the caller works too
  while (next_ < total_) {
    const int i = next_++;
    ++running_;
    lk.unlock();
    try {
      fn(i);
    } catch (...) {
      lk.lock();
      errors_[i] = std::current_exception();
      lk.unlock();
    }
    lk.lock();
    --running_;
  }
  done_.wait(lk, [&] { return running_ == 0; });
  job_ = nullptr;
  total_ = 0;
  for (auto& e : errors_)
    if (e) std::rethrow_exception(e);
}

int default_thread_count() {
  if (const char* s = std::getenv("TWOSTAGE_THREADS")) {
    const int t = std::atoi(s);
    if (t > 0) return t;
  }
  return 1;
}

}  // namespace tsd
