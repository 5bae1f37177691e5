#pragma once
// Shared types for the compressed-domain density estimation library: matrix
// aliases, error types, seeded substreams and a small deterministic
// parallel-for.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cde {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Raised for violated preconditions, shape mismatches and malformed input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline int& thread_limit() {
  static int n = 1;
  return n;
}

}  // namespace detail

/// Random engine for one named substream of a run seed.  Every consumer of
/// randomness (data, init, batching, sampling, ...) gets its own stream so
/// they can be re-seeded independently.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::string_view stream = "", std::uint64_t index = 0) {
    const std::uint64_t tag = detail::fnv1a(stream);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Uniform on the open interval (0, 1).
  double open_unit() {
    double u = 0.0;
    while (u == 0.0) u = uniform();
    return u;
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Caps the worker count used by parallel_for (CLI --threads).
inline void set_thread_limit(int n) { detail::thread_limit() = std::max(1, n); }
inline int thread_limit() { return detail::thread_limit(); }

/// Runs body(i) for i in [0, n).  Work items must write disjoint outputs;
/// results are then independent of the thread count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const auto workers = static_cast<std::size_t>(std::min<long>(thread_limit(), static_cast<long>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace cde
