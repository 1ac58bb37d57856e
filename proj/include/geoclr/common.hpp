#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace geoclr {

/// Malformed input data, missing files, bad manifests. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument combination. CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite losses, gradients or activations. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Derives a sub-stream seed from a base seed and a path of integers, e.g.
/// derive_seed(seed, {kAugmentStream, epoch, step, slot}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(base, path));
}

/// Uniform double in [lo, hi).
double uniform(Rng& rng, double lo, double hi);

/// Uniform integer in [0, n). n must be > 0.
std::size_t uniform_index(Rng& rng, std::size_t n);

double standard_normal(Rng& rng);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is visited
/// exactly once; callers write to disjoint slots so results do not depend on
/// scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Worker count used when a caller passes jobs <= 0.
int default_jobs();
void set_default_jobs(int jobs);

/// Formats a double with fixed precision, no locale dependence.
std::string format_double(double v, int precision = 6);

}  // namespace geoclr
