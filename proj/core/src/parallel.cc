#include "fmcb/parallel.h"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>

namespace fmcb {
namespace {

std::atomic<int> g_threads{0};
thread_local bool t_inside_pool = false;

int resolve(int threads) {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Persistent workers that pull chunk indices from a shared counter. The
// calling thread participates, so a pool of size n runs n - 1 workers.
class Pool {
 public:
  explicit Pool(int size) {
    for (int i = 1; i < size; ++i) workers_.emplace_back([this] { loop(); });
  }

  ~Pool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  void run(std::size_t chunks, const std::function<void(std::size_t)>& task) {
    {
      std::lock_guard lock(mu_);
      task_ = &task;
      chunks_ = chunks;
      next_.store(0);
      pending_ = workers_.size();
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    work();
    std::unique_lock lock(mu_);
    done_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void loop() {
    t_inside_pool = true;
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work();
      std::lock_guard lock(mu_);
      if (--pending_ == 0) done_.notify_one();
    }
  }

  void work() {
    for (;;) {
      const std::size_t c = next_.fetch_add(1);
      if (c >= chunks_) return;
      try {
        (*task_)(c);
      } catch (...) {
        std::lock_guard lock(mu_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t chunks_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  std::exception_ptr error_;
  bool stop_ = false;
};

std::mutex g_pool_mu;
std::unique_ptr<Pool> g_pool;

}  // namespace

void set_thread_count(int threads) { g_threads.store(threads); }

int thread_count() { return resolve(g_threads.load()); }

void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t chunks = chunk_count(n, chunk_size);
  auto task = [&](std::size_t c) {
    const std::size_t begin = c * chunk_size;
    fn(c, begin, std::min(n, begin + chunk_size));
  };
  const int threads = thread_count();
  if (threads <= 1 || chunks <= 1 || t_inside_pool) {
    for (std::size_t c = 0; c < chunks; ++c) task(c);
    return;
  }
  std::lock_guard lock(g_pool_mu);
  if (!g_pool || g_pool->size() != threads) {
    g_pool.reset();
    g_pool = std::make_unique<Pool>(threads);
  }
  t_inside_pool = true;
  try {
    g_pool->run(chunks, task);
  } catch (...) {
    t_inside_pool = false;
    throw;
  }
  t_inside_pool = false;
}

double ordered_sum(std::size_t n, std::size_t chunk_size,
                   const std::function<double(std::size_t, std::size_t)>& partial) {
  std::vector<double> parts(chunk_count(n, chunk_size), 0.0);
  parallel_chunks(n, chunk_size, [&](std::size_t c, std::size_t b, std::size_t e) {
    parts[c] = partial(b, e);
  });
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

}  // namespace fmcb
