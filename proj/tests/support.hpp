#pragma once

#include <random>
#include <vector>

#include "tractor/tensor.hpp"

namespace testing {

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20261015);
  return gen;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

inline std::vector<double> random_vec(int n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = uniform(lo, hi);
  return v;
}

inline tractor::DenseTensor random_tensor(int dim, int rank, tractor::Valence v = tractor::Valence::Lower) {
  tractor::DenseTensor t(dim, rank, v);
  for (auto& x : t.data()) x = uniform(-1.0, 1.0);
  return t;
}

}  // namespace testing
