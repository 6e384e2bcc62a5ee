#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace tsd {

/// Fixed set of threads running index ranges. With one thread every task runs
/// inline on the caller.
class WorkerPool {
 public:
  explicit WorkerPool(int threads = 1);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int threads() const { return threads_; }
  /// Runs fn(i) for i in [0, n) and waits. Exceptions are rethrown on the
  /// caller, lowest index first.
  void parallel_for(int n, const std::function<void(int)>& fn);

 private:
  void worker_loop();

  int threads_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable wake_, done_;
  const std::function<void(int)>* job_ = nullptr;
  int next_ = 0, total_ = 0, running_ = 0;
  long generation_ = 0;
  bool stop_ = false;
  std::vector<std::exception_ptr> errors_;
};

/// Thread count from TWOSTAGE_THREADS, else 1.
int default_thread_count();

}  // namespace tsd
