#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace itarray {

// Fixed set of worker threads. `run` hands the same task to every worker and
// blocks until all of them return; that return is the barrier.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const noexcept { return workers_; }

  // task(worker_id) on every worker. The first exception thrown by any
  // worker is rethrown here after the barrier.
  void run(const std::function<void(std::size_t)>& task);

  // fn(i) for i in [0, n), items dealt round-robin to workers.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

 private:
  void loop(std::size_t id);

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

}  // namespace itarray
