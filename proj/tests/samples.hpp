#pragma once

#include <string>
#include <vector>

#include "support.hpp"
#include "tractor/metric.hpp"

namespace testing {

struct Sample {
  tractor::MetricSpec metric;
  double radius;  // sample points drawn from the cube [-radius, radius]^n
};

// Catalog entries plus two curved expression metrics with nonzero Weyl tensor.
inline std::vector<Sample> catalog_samples() {
  using namespace tractor;
  return {
      {euclidean(3), 2.0},
      {minkowski(3, 1), 2.0},
      {sphere_stereographic(3, 1.0), 1.5},
      {sphere_stereographic(4, 2.0), 1.5},
      {poincare_ball(3), 0.5},
      {poincare_ball(4), 0.35},
      {expression_matrix(3, {"1", "0.3*sin(x2)", "0", "1+x1^2", "x1*x3/4", "exp(x3/3)"}, {1, 1, 1}), 0.8},
      {expression_matrix(4, {"-(1+x2^2/5)", "1", "1+sin(x1)^2/3", "exp(x4/4)"}, {-1, 1, 1, 1}), 0.8},
  };
}

inline std::vector<double> sample_point(const Sample& s) { return random_vec(s.metric.dim(), -s.radius, s.radius); }

}  // namespace testing
