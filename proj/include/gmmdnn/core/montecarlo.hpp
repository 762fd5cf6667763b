#pragma once

#include "gmmdnn/core/common.hpp"
#include "gmmdnn/core/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gmmdnn {

using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// Draws one point per call into a row of length `dim`.
struct Sampler {
  Eigen::Index dim = 0;
  std::function<void(Rng&, RowRef)> draw;

  Matrix draw_block(Rng& rng, Eigen::Index rows) const;
};

// Batch function: one value per row of `points`.
using BatchFn = std::function<void(const Matrix& points, Vector& out)>;

BatchFn batch_from_scalar(std::function<double(const Vector&)> fn);

// Streaming mean/variance with an order-dependent but deterministic merge.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  void merge(const Moments& o);
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double std_error() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

// Joint moments of (x, y), used for ratio estimates E[x] / E[y].
struct PairMoments {
  std::size_t n = 0;
  double mean_x = 0.0, mean_y = 0.0;
  double m2x = 0.0, m2y = 0.0, cxy = 0.0;

  void add(double x, double y) {
    ++n;
    const double dx = x - mean_x;
    const double dy = y - mean_y;
    mean_x += dx / static_cast<double>(n);
    mean_y += dy / static_cast<double>(n);
    m2x += dx * (x - mean_x);
    m2y += dy * (y - mean_y);
    cxy += dx * (y - mean_y);
  }
  void merge(const PairMoments& o);
  Moments x() const { return {n, mean_x, m2x}; }
  Moments y() const { return {n, mean_y, m2y}; }
  // Delta-method standard error of mean_x / mean_y.
  double ratio_std_error() const;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

inline Estimate to_estimate(const Moments& m) { return {m.mean, m.std_error(), m.n}; }

// Fraction estimate with binomial standard error.
Estimate proportion(std::size_t hits, std::size_t count);

inline constexpr std::size_t kBlockSize = 4096;

std::size_t worker_count();

// Splits [0, count) into fixed blocks of kBlockSize and calls
// fn(rng, begin, end) once per block, each block with its own generator
// Rng(seed, stream, block). Results come back in block order so any reduction
// over them is independent of thread scheduling.
template <class Result, class Fn>
std::vector<Result> run_blocks(std::size_t count, std::uint64_t seed, std::uint64_t stream,
                               Fn&& fn) {
  const std::size_t blocks = (count + kBlockSize - 1) / kBlockSize;
  std::vector<Result> results(blocks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        Rng rng(seed, stream, b);
        const std::size_t begin = b * kBlockSize;
        const std::size_t end = std::min(count, begin + kBlockSize);
        results[b] = fn(rng, begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(blocks);
        return;
      }
    }
  };

  const std::size_t threads = std::min(worker_count(), blocks);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

// Monte Carlo mean of fn(points) over `count` draws from `sampler`.
Estimate estimate_mean(const BatchFn& fn, const Sampler& sampler, std::size_t count,
                       std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace gmmdnn
