#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tractor/tensor.hpp"

namespace tractor {

using Vec = std::vector<double>;

enum class Causal { Spacelike, Timelike, Null };

inline const char* causal_name(Causal c) {
  switch (c) {
    case Causal::Spacelike: return "spacelike";
    case Causal::Timelike: return "timelike";
    case Causal::Null: return "null";
  }
  return "?";
}

// Upper sign of the ± convention for spacelike curves.
inline double causal_sign(Causal c) { return c == Causal::Timelike ? -1.0 : 1.0; }

// Position, velocity and covariant acceleration ∇_u u at parameter t.
struct CurveState {
  double t = 0.0;
  Vec x, u, a;
  Causal causal = Causal::Spacelike;
};

enum class CurveKind { Geodesic, NullGeodesic, ConformalCircle, ConformalCircleProjective, Given };

inline const char* curve_kind_name(CurveKind k) {
  switch (k) {
    case CurveKind::Geodesic: return "geodesic";
    case CurveKind::NullGeodesic: return "null-geodesic";
    case CurveKind::ConformalCircle: return "conformal-circle";
    case CurveKind::ConformalCircleProjective: return "conformal-circle-projective";
    case CurveKind::Given: return "given";
  }
  return "?";
}

struct CurveSamples {
  CurveKind kind = CurveKind::Given;
  double h = 0.0;
  std::vector<CurveState> states;
  std::string stop_reason;  // empty when all requested steps completed
};

inline double dot(const DenseTensor& g, const Vec& a, const Vec& b) {
  double s = 0.0;
  const int n = g.dim();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += g(i, j) * a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];
  return s;
}

inline Vec lower(const DenseTensor& g, const Vec& v) {
  const int n = g.dim();
  Vec out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i)] += g(i, j) * v[static_cast<std::size_t>(j)];
  return out;
}

inline Vec raise(const DenseTensor& ginv, const Vec& w) { return lower(ginv, w); }

inline Vec axpy(double s, const Vec& x, Vec y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
  return y;
}

inline double euclid_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace tractor
