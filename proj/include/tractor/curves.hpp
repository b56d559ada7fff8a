#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tractor/curvature.hpp"
#include "tractor/state.hpp"
#include "tractor/tractor.hpp"

namespace tractor {

struct IntegrateOptions {
  bool renormalize = false;           // re-impose u·u = ±1, u·a = 0 after every step
  std::vector<std::pair<double, double>> box;  // optional chart box, one interval per coordinate
};

namespace detail {

inline double norm2(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline Vec gamma_uv(const DenseTensor& G, const Vec& u, const Vec& v) {
  const int n = G.dim();
  Vec out(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) out[static_cast<std::size_t>(c)] += G(c, a, b) * u[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
  return out;
}

inline void require_velocity(const Vec& u, int n) {
  if (static_cast<int>(u.size()) != n) throw bad_input("velocity dimension mismatch");
  if (norm2(u) == 0.0) throw precondition("zero velocity");
}

inline void near_null_guard(const DenseTensor& g, const Vec& u, double t) {
  const double r = std::abs(dot(g, u, u)) / norm2(u);
  if (!(r >= 1e-8))
    throw precondition("near-null velocity (|g(u,u)|/|u|^2 = " + shortest(r) + " < 1e-8) at t = " + shortest(t));
}

inline void check_box(const IntegrateOptions& opt, const Vec& x, double t) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw Error(ErrorKind::ChartExit, "solution left every chart (non-finite) at t = " + shortest(t));
    if (i < opt.box.size() && (x[i] < opt.box[i].first || x[i] > opt.box[i].second))
      throw Error(ErrorKind::ChartExit, "curve left the chart box at t = " + shortest(t));
  }
}

// Classical RK4 on a flat state vector made of blocks of length n.
template <class F, class Post>
std::vector<Vec> rk4(F&& f, Vec y, double h, int steps, Post&& post) {
  std::vector<Vec> out{y};
  out.reserve(static_cast<std::size_t>(steps) + 1);
  auto add = [](const Vec& a, double s, const Vec& b) {
    Vec r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += s * b[i];
    return r;
  };
  for (int i = 0; i < steps; ++i) {
    const double t = i * h;
    const Vec k1 = f(t, y);
    const Vec k2 = f(t + h / 2, add(y, h / 2, k1));
    const Vec k3 = f(t + h / 2, add(y, h / 2, k2));
    const Vec k4 = f(t + h, add(y, h, k3));
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    post(t + h, y);
    out.push_back(y);
  }
  return out;
}

inline Vec block(const Vec& y, int k, int n) {
  return Vec(y.begin() + k * n, y.begin() + (k + 1) * n);
}

inline void check_steps(double h, int steps) {
  if (!(h > 0) || !std::isfinite(h)) throw bad_input("step h must be positive");
  if (steps < 0) throw bad_input("step count must be non-negative");
}

}  // namespace detail

// ∇_u a for the unit-speed conformal circle equation.
inline Vec conformal_circle_jerk(const GeometryAt& G, const Vec& u, const Vec& a, double eps) {
  const int n = G.n;
  const DenseTensor Pm = G.schouten_conf_mixed();
  const DenseTensor& P = G.schouten_conf();
  double Puu = 0.0;
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < n; ++c) Puu += P(b, c) * u[static_cast<std::size_t>(b)] * u[static_cast<std::size_t>(c)];
  const double aa = dot(G.g, a, a);
  Vec j(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c) {
    double s = 0.0;
    for (int b = 0; b < n; ++b) s += u[static_cast<std::size_t>(b)] * Pm(b, c);
    j[static_cast<std::size_t>(c)] = eps * s - (Puu + eps * aa) * u[static_cast<std::size_t>(c)];
  }
  return j;
}

// ∇_u a for the projectively parametrised conformal circle equation.
inline Vec projective_circle_jerk(const GeometryAt& G, const Vec& u, const Vec& a) {
  const int n = G.n;
  const DenseTensor Pm = G.schouten_conf_mixed();
  const DenseTensor& P = G.schouten_conf();
  double Puu = 0.0;
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < n; ++c) Puu += P(b, c) * u[static_cast<std::size_t>(b)] * u[static_cast<std::size_t>(c)];
  const double uu = dot(G.g, u, u), ua = dot(G.g, u, a), aa = dot(G.g, a, a);
  Vec j(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c) {
    double s = 0.0;
    for (int b = 0; b < n; ++b) s += u[static_cast<std::size_t>(b)] * Pm(b, c);
    const auto uc = static_cast<std::size_t>(c);
    j[uc] = 3 * ua / uu * a[uc] - 1.5 * aa / uu * u[uc] + uu * s - 2 * Puu * u[uc];
  }
  return j;
}

inline Causal causal_of(const DenseTensor& g, const Vec& u) {
  return dot(g, u, u) < 0 ? Causal::Timelike : Causal::Spacelike;
}

inline CurveSamples integrate_geodesic(const AffineSpec& aff, const Vec& x0, const Vec& u0, double h, int steps,
                                       const IntegrateOptions& opt = {}) {
  const int n = aff.dim();
  if (static_cast<int>(x0.size()) != n) throw bad_input("x0 dimension mismatch");
  detail::require_velocity(u0, n);
  detail::check_steps(h, steps);
  detail::check_box(opt, x0, 0.0);
  const DenseTensor g0 = aff.metric().metric_at(x0);
  auto f = [&](double t, const Vec& y) {
    Vec x = detail::block(y, 0, n), u = detail::block(y, 1, n);
    detail::check_box(opt, x, t);
    const Vec gu = detail::gamma_uv(aff.at(x, 1).gamma, u, u);
    Vec d(y.size());
    for (int i = 0; i < n; ++i) {
      d[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)];
      d[static_cast<std::size_t>(n + i)] = -gu[static_cast<std::size_t>(i)];
    }
    return d;
  };
  Vec y = x0;
  y.insert(y.end(), u0.begin(), u0.end());
  auto ys = detail::rk4(f, y, h, steps, [&](double t, const Vec& s) { detail::check_box(opt, detail::block(s, 0, n), t); });
  CurveSamples c;
  c.kind = CurveKind::Geodesic;
  c.h = h;
  const Causal cz = dot(g0, u0, u0) == 0.0 ? Causal::Null : causal_of(g0, u0);
  for (std::size_t i = 0; i < ys.size(); ++i)
    c.states.push_back({static_cast<double>(i) * h, detail::block(ys[i], 0, n), detail::block(ys[i], 1, n),
                        Vec(static_cast<std::size_t>(n), 0.0), cz});
  return c;
}

inline CurveSamples integrate_geodesic(const MetricSpec& m, const Vec& x0, const Vec& u0, double h, int steps,
                                       const IntegrateOptions& opt = {}) {
  return integrate_geodesic(AffineSpec(m), x0, u0, h, steps, opt);
}

inline CurveSamples integrate_null_geodesic(const MetricSpec& m, const Vec& x0, const Vec& u0, double h, int steps,
                                            const IntegrateOptions& opt = {}) {
  if (m.definite()) throw precondition("null geodesics need an indefinite metric");
  detail::require_velocity(u0, m.dim());
  const DenseTensor g0 = m.metric_at(x0);
  const double uu = dot(g0, u0, u0);
  if (std::abs(uu) > 1e-10 * std::max(1.0, detail::norm2(u0)))
    throw precondition("initial velocity is not null (|u.u| = " + shortest(std::abs(uu)) + ")");
  CurveSamples c = integrate_geodesic(m, x0, u0, h, steps, opt);
  c.kind = CurveKind::NullGeodesic;
  for (auto& s : c.states) s.causal = Causal::Null;
  return c;
}

namespace detail {

// Replaces (u, a) by the weighted pair: same trace, unit speed.
inline void normalise_unit(const DenseTensor& g, Vec& u, Vec& a) {
  const double uu = dot(g, u, u), ua = dot(g, u, a);
  const double eps = uu < 0 ? -1.0 : 1.0;
  const double s2 = 1.0 / std::abs(uu), s = std::sqrt(s2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = a[i] * s2 - eps * ua * u[i] * s2 * s2;
    u[i] *= s;
  }
}

template <class Jerk>
CurveSamples integrate_third_order(const MetricSpec& m, const Vec& x0, Vec u0, Vec a0, double h, int steps,
                                   const IntegrateOptions& opt, CurveKind kind, bool unit, Jerk jerk) {
  const int n = m.dim();
  if (static_cast<int>(x0.size()) != n) throw bad_input("x0 dimension mismatch");
  if (static_cast<int>(a0.size()) != n) throw bad_input("a0 dimension mismatch");
  require_velocity(u0, n);
  check_steps(h, steps);
  check_box(opt, x0, 0.0);
  const GeometryAt G0 = curvature_at(m, x0, 2);
  G0.schouten_conf();
  near_null_guard(G0.g, u0, 0.0);
  const double eps = dot(G0.g, u0, u0) < 0 ? -1.0 : 1.0;
  if (unit) normalise_unit(G0.g, u0, a0);
  auto f = [&](double t, const Vec& y) {
    const Vec x = block(y, 0, n), u = block(y, 1, n), a = block(y, 2, n);
    check_box(opt, x, t);
    const GeometryAt G = curvature_at(m, x, 2);
    const Vec j = jerk(G, u, a, eps);
    const Vec gu = gamma_uv(G.gamma, u, u), ga = gamma_uv(G.gamma, u, a);
    Vec d(y.size());
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
      d[i] = u[i];
      d[static_cast<std::size_t>(n) + i] = a[i] - gu[i];
      d[2 * static_cast<std::size_t>(n) + i] = j[i] - ga[i];
    }
    return d;
  };
  Vec y = x0;
  y.insert(y.end(), u0.begin(), u0.end());
  y.insert(y.end(), a0.begin(), a0.end());
  auto post = [&](double t, Vec& s) {
    const Vec x = block(s, 0, n);
    check_box(opt, x, t);
    Vec u = block(s, 1, n), a = block(s, 2, n);
    const DenseTensor g = m.metric_at(x);
    near_null_guard(g, u, t);
    if (dot(g, u, u) * eps < 0) throw precondition("curve changed causal type at t = " + shortest(t));
    if (unit && opt.renormalize) {
      normalise_unit(g, u, a);
      std::copy(u.begin(), u.end(), s.begin() + n);
      std::copy(a.begin(), a.end(), s.begin() + 2 * n);
    }
  };
  auto ys = rk4(f, y, h, steps, post);
  CurveSamples c;
  c.kind = kind;
  c.h = h;
  const Causal cz = eps < 0 ? Causal::Timelike : Causal::Spacelike;
  for (std::size_t i = 0; i < ys.size(); ++i)
    c.states.push_back({static_cast<double>(i) * h, block(ys[i], 0, n), block(ys[i], 1, n), block(ys[i], 2, n), cz});
  return c;
}

}  // namespace detail

// Unit-speed conformal circle; (u0, a0) is replaced by its weighted pair before starting.
inline CurveSamples integrate_conformal_circle(const MetricSpec& m, const Vec& x0, const Vec& u0, const Vec& a0,
                                               double h, int steps, const IntegrateOptions& opt = {}) {
  return detail::integrate_third_order(m, x0, u0, a0, h, steps, opt, CurveKind::ConformalCircle, true,
                                       [](const GeometryAt& G, const Vec& u, const Vec& a, double eps) {
                                         return conformal_circle_jerk(G, u, a, eps);
                                       });
}

inline CurveSamples integrate_conformal_circle_projective_param(const MetricSpec& m, const Vec& x0, const Vec& u0,
                                                                const Vec& a0, double h, int steps,
                                                                const IntegrateOptions& opt = {}) {
  IntegrateOptions o = opt;
  o.renormalize = false;
  return detail::integrate_third_order(m, x0, u0, a0, h, steps, o, CurveKind::ConformalCircleProjective, false,
                                       [](const GeometryAt& G, const Vec& u, const Vec& a, double) {
                                         return projective_circle_jerk(G, u, a);
                                       });
}

// State from an explicitly parametrised curve: a = ẍ + Γ(ẋ, ẋ).
inline CurveState make_state(const AffineSpec& aff, double t, const Vec& x, const Vec& xd, const Vec& xdd) {
  const DenseTensor Gm = aff.at(x, 1).gamma;
  const Vec gu = detail::gamma_uv(Gm, xd, xd);
  CurveState s;
  s.t = t;
  s.x = x;
  s.u = xd;
  s.a = xdd;
  for (std::size_t i = 0; i < s.a.size(); ++i) s.a[i] += gu[i];
  const DenseTensor g = aff.metric().metric_at(x);
  s.causal = std::abs(dot(g, xd, xd)) <= 1e-12 * detail::norm2(xd) ? Causal::Null : causal_of(g, xd);
  return s;
}

inline CurveState make_state(const MetricSpec& m, double t, const Vec& x, const Vec& xd, const Vec& xdd) {
  return make_state(AffineSpec(m), t, x, xd, xdd);
}

inline CurveSamples sample_curve(const AffineSpec& aff, CurveKind kind, double h, int steps,
                                 const std::function<void(double, Vec&, Vec&, Vec&)>& xfun) {
  CurveSamples c;
  c.kind = kind;
  c.h = h;
  Vec x, xd, xdd;
  for (int i = 0; i <= steps; ++i) {
    xfun(i * h, x, xd, xdd);
    c.states.push_back(make_state(aff, i * h, x, xd, xdd));
  }
  return c;
}

// Weighted velocity and acceleration trivialised in the current scale (𝐮·𝐮 = ±1).
struct WeightedState {
  Vec u, a;
  double eps = 1.0;
  double sigma = 1.0;  // sqrt|u·u| of the raw state
  Causal causal = Causal::Spacelike;
};

inline WeightedState weighted_state(const DenseTensor& g, const CurveState& s) {
  if (detail::norm2(s.u) == 0.0) throw precondition("zero velocity");
  detail::near_null_guard(g, s.u, s.t);
  const double uu = dot(g, s.u, s.u), ua = dot(g, s.u, s.a);
  WeightedState w;
  w.eps = uu < 0 ? -1.0 : 1.0;
  w.causal = uu < 0 ? Causal::Timelike : Causal::Spacelike;
  w.sigma = std::sqrt(std::abs(uu));
  const double s1 = 1 / w.sigma, s2 = s1 * s1;
  w.u = s.u;
  w.a = s.a;
  for (std::size_t i = 0; i < w.u.size(); ++i) {
    w.u[i] *= s1;
    w.a[i] = s.a[i] * s2 - w.eps * ua * s.u[i] * s2 * s2;
  }
  return w;
}

// Weighted (𝐮, 𝐚) in the scale e^{2φ}g from those in g, with Υ = dφ.
inline WeightedState rescale_weighted(const DenseTensor& g_inv, double phi, const Vec& Ups, const WeightedState& w) {
  const Vec Us = raise(g_inv, Ups);
  double uU = 0.0;
  for (std::size_t i = 0; i < Ups.size(); ++i) uU += w.u[i] * Ups[i];
  WeightedState r = w;
  const double e1 = std::exp(-phi), e2 = e1 * e1;
  for (std::size_t i = 0; i < w.u.size(); ++i) {
    r.u[i] = e1 * w.u[i];
    r.a[i] = e2 * (w.a[i] + uU * w.u[i] - w.eps * Us[i]);
  }
  r.sigma = w.sigma * e1;
  return r;
}

inline DenseTensor sigma_projective(const CurveState& s) {
  const int n = static_cast<int>(s.u.size());
  if (detail::norm2(s.u) == 0.0) throw precondition("zero velocity");
  DenseTensor S(n + 1, 2, Valence::Upper);
  for (int b = 0; b < n; ++b) {
    S(n, b) = s.u[static_cast<std::size_t>(b)];
    S(b, n) = -s.u[static_cast<std::size_t>(b)];
  }
  return S;
}

inline DenseTensor sigma_null(const DenseTensor& g, const CurveState& s) {
  const int n = static_cast<int>(s.u.size());
  if (detail::norm2(s.u) == 0.0) throw precondition("zero velocity");
  const double uu = dot(g, s.u, s.u);
  if (std::abs(uu) > 1e-9 * detail::norm2(s.u)) throw precondition("velocity is not null (|u.u| = " + shortest(std::abs(uu)) + ")");
  DenseTensor S(n + 2, 2, Valence::Upper);
  for (int b = 0; b < n; ++b) {
    S(n + 1, 1 + b) = s.u[static_cast<std::size_t>(b)];
    S(1 + b, n + 1) = -s.u[static_cast<std::size_t>(b)];
  }
  return S;
}

// Σ from weighted data; ±𝐮 X∧Y∧Z + 𝐮𝐚 X∧Z∧Z with unit-coefficient wedges.
inline DenseTensor sigma_conformal(const WeightedState& w) {
  const int n = static_cast<int>(w.u.size());
  const int N = n + 2;
  DenseTensor S(N, 3, Valence::Upper);
  auto put = [&](int i, int j, int k, double v) {
    S(i, j, k) += v; S(j, k, i) += v; S(k, i, j) += v;
    S(j, i, k) -= v; S(i, k, j) -= v; S(k, j, i) -= v;
  };
  const int X = n + 1;
  for (int c = 0; c < n; ++c) put(X, 0, 1 + c, w.eps * w.u[static_cast<std::size_t>(c)]);
  for (int b = 0; b < n; ++b)
    for (int c = b + 1; c < n; ++c) {
      const auto ub = static_cast<std::size_t>(b), uc = static_cast<std::size_t>(c);
      put(X, 1 + b, 1 + c, w.u[ub] * w.a[uc] - w.u[uc] * w.a[ub]);
    }
  return S;
}

inline DenseTensor sigma_conformal(const DenseTensor& g, const CurveState& s) {
  return sigma_conformal(weighted_state(g, s));
}

// σ, 𝐮^a∇_aσ, 𝐮^a𝐮^b∇_a∇_bσ and 𝐚^a∇_aσ. A scale known only along the curve
// puts its second derivative along the curve into uu and leaves ua = 0.
struct CurveScaleJet {
  double sigma = 1.0;
  double u = 0.0;
  double uu = 0.0;
  double a = 0.0;
};

struct VelocityAcceleration {
  DenseTensor U, A;
};

inline VelocityAcceleration velocity_acceleration_tractors(const GeometryAt& G, const WeightedState& w,
                                                           const CurveScaleJet& s) {
  const int n = G.n;
  if (!(s.sigma > 0)) throw precondition("scale must be positive");
  const DenseTensor& P = G.schouten_conf();
  double Puu = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) Puu += P(a, b) * w.u[static_cast<std::size_t>(a)] * w.u[static_cast<std::size_t>(b)];
  VelocityAcceleration r{DenseTensor(n + 2, 1, Valence::Upper), DenseTensor(n + 2, 1, Valence::Upper)};
  r.U(n + 1) = -s.u / s.sigma;
  r.A(n + 1) = s.u * s.u / s.sigma - s.a - s.uu - Puu * s.sigma;
  r.A(0) = -w.eps * s.sigma;
  for (int a = 0; a < n; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    r.U(1 + a) = w.u[ua];
    r.A(1 + a) = w.a[ua] * s.sigma - s.u * w.u[ua];
  }
  return r;
}

// The scale σ = sqrt|u·u| fixed by the parametrisation of a state, given ∇_u a.
inline CurveScaleJet parametrisation_scale(const DenseTensor& g, const CurveState& st, const Vec& jerk) {
  const double uu = dot(g, st.u, st.u), ua = dot(g, st.u, st.a), aa = dot(g, st.a, st.a), uj = dot(g, st.u, jerk);
  const double eps = uu < 0 ? -1.0 : 1.0;
  const double sig = std::sqrt(std::abs(uu));
  const double d1 = eps * ua / sig;
  const double d2 = eps * (aa + uj) / sig - d1 * d1 / sig;
  CurveScaleJet s;
  s.sigma = sig;
  s.u = d1 / sig;
  s.uu = (d2 / sig - d1 * d1 / (sig * sig)) / sig;
  return s;
}

inline double incidence_residual(const DenseTensor& X, const DenseTensor& Sigma) {
  if (X.dim() != Sigma.dim()) throw bad_input("incidence: dimension mismatch");
  DenseTensor t = outer(X, Sigma);
  return antisymmetrize(t, all_slots(t)).norm();
}

enum class SigmaBuilder { Projective, Null, Conformal };

inline const char* builder_name(SigmaBuilder b) {
  switch (b) {
    case SigmaBuilder::Projective: return "projective";
    case SigmaBuilder::Null: return "null";
    case SigmaBuilder::Conformal: return "conformal";
  }
  return "?";
}

// max_i ‖∇_𝐮Σ‖ at interior samples, with d/dt from a five-point stencil on Σ samples.
inline double parallel_residual(const AffineSpec& aff, const CurveSamples& curve, SigmaBuilder b) {
  if (b == SigmaBuilder::Null && curve.kind != CurveKind::NullGeodesic && curve.kind != CurveKind::Given)
    throw bad_input("null builder needs a null curve");
  if (b == SigmaBuilder::Projective && curve.kind == CurveKind::NullGeodesic)
    throw bad_input("projective builder on a null-geodesic curve");
  if (b == SigmaBuilder::Conformal && curve.kind == CurveKind::NullGeodesic)
    throw bad_input("conformal builder needs a nowhere-null curve");
  if (b != SigmaBuilder::Projective && aff.projective_phi())
    throw bad_input("conformal builders need a Levi-Civita connection");
  const auto& st = curve.states;
  if (st.size() < 5) throw bad_input("parallel residual needs at least 5 samples");
  const double h = curve.h;
  const MetricSpec& m = aff.metric();
  std::vector<DenseTensor> S;
  std::vector<double> speed;
  S.reserve(st.size());
  for (const auto& s : st) {
    const DenseTensor g = m.metric_at(s.x);
    switch (b) {
      case SigmaBuilder::Projective: S.push_back(sigma_projective(s)); speed.push_back(1.0); break;
      case SigmaBuilder::Null: S.push_back(sigma_null(g, s)); speed.push_back(1.0); break;
      case SigmaBuilder::Conformal: {
        const WeightedState w = weighted_state(g, s);
        S.push_back(sigma_conformal(w));
        speed.push_back(w.sigma);
        break;
      }
    }
  }
  double worst = 0.0;
  for (std::size_t i = 2; i + 2 < st.size(); ++i) {
    DenseTensor d = (S[i - 2] - S[i + 2] + (S[i + 1] - S[i - 1]) * 8.0) * (1.0 / (12.0 * h));
    const ConnectionMatrices C = b == SigmaBuilder::Projective ? proj::connection(aff.at(st[i].x, 2))
                                                               : conf::connection(curvature_at(m, st[i].x, 2));
    d += connection_action(along(C, st[i].u), S[i]);
    worst = std::max(worst, d.norm() / speed[i]);
  }
  return worst;
}

inline double parallel_residual(const MetricSpec& m, const CurveSamples& curve, SigmaBuilder b) {
  return parallel_residual(AffineSpec(m), curve, b);
}

// Norm of (∇_u a)^[a u^b] − 3(u·a)/(u·u) a^[a u^b] − (u·u) u^cΡ_c^[a u^b] over interior
// samples, with ∇_u a from a five-point stencil on a.
inline double conformal_circle_residual(const MetricSpec& m, const CurveSamples& curve) {
  const auto& st = curve.states;
  if (st.size() < 5) throw bad_input("conformal circle residual needs at least 5 samples");
  const int n = m.dim();
  const double h = curve.h;
  double worst = 0.0;
  for (std::size_t i = 2; i + 2 < st.size(); ++i) {
    const GeometryAt G = curvature_at(m, st[i].x, 2);
    const Vec& u = st[i].u;
    const Vec& a = st[i].a;
    Vec j = detail::gamma_uv(G.gamma, u, a);
    for (std::size_t k = 0; k < j.size(); ++k)
      j[k] += (st[i - 2].a[k] - st[i + 2].a[k] + 8.0 * (st[i + 1].a[k] - st[i - 1].a[k])) / (12.0 * h);
    const DenseTensor Pm = G.schouten_conf_mixed();
    const double uu = dot(G.g, u, u), ua = dot(G.g, u, a);
    Vec v(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) s += u[static_cast<std::size_t>(b)] * Pm(b, c);
      v[static_cast<std::size_t>(c)] = j[static_cast<std::size_t>(c)] - 3 * ua / uu * a[static_cast<std::size_t>(c)] - uu * s;
    }
    double r = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) {
        const double e = v[static_cast<std::size_t>(p)] * u[static_cast<std::size_t>(q)] - v[static_cast<std::size_t>(q)] * u[static_cast<std::size_t>(p)];
        r += e * e;
      }
    worst = std::max(worst, std::sqrt(r) / std::pow(std::abs(uu), 2.5));
  }
  return worst;
}

struct InitialData {
  Vec u, a;
  Causal causal = Causal::Spacelike;
};

namespace detail {

// Support of a skew tensor: left singular vectors of its first-slot unfolding.
struct Support {
  Eigen::MatrixXd basis;
  Eigen::VectorXd singular;
};

inline Support support_of(const DenseTensor& S) {
  const int N = S.dim();
  const int cols = static_cast<int>(S.size()) / N;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(S.data().data(), N, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(M), Eigen::ComputeFullU);
  return {svd.matrixU(), svd.singularValues()};
}

inline void require_simple(const Support& sp, int k) {
  const double top = sp.singular(0);
  const double resid = sp.singular.size() > k ? sp.singular(k) / top : 0.0;
  if (!(resid < 1e-9)) throw precondition("tractor is not simple (Pluecker residual " + shortest(resid) + ")");
}

inline void require_incidence(const DenseTensor& X, const DenseTensor& S) {
  const double r = incidence_residual(X, S) / S.norm();
  if (!(r < 1e-9)) throw precondition("incidence X^Sigma = 0 fails (residual " + shortest(r) + ")");
}

}  // namespace detail

// Recovers (𝐮, 𝐚) from a conformal 3-tractor at x.
inline InitialData ic_from_tractor_conformal(const DenseTensor& g, const DenseTensor& S) {
  const int n = g.dim(), N = n + 2;
  if (S.dim() != N || S.rank() != 3) throw bad_input("expected a rank-3 tractor of dimension n+2");
  if (!(S.norm() > 0)) throw precondition("zero tractor");
  const detail::Support sp = detail::support_of(S);
  detail::require_simple(sp, 3);
  const Eigen::MatrixXd V = sp.basis.leftCols(3);
  const Eigen::MatrixXd hr = V.transpose() * to_matrix(conf::metric(g)) * V;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hr);
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  int pos = 0, neg = 0;
  for (int i = 0; i < 3; ++i) {
    const double e = es.eigenvalues()(i);
    if (std::abs(e) <= 1e-10 * scale) continue;
    (e > 0 ? pos : neg)++;
  }
  if (!((pos == 2 && neg == 1) || (pos == 1 && neg == 2))) throw precondition("not a conformal-circle tractor (signature must be (+,+,-) or (+,-,-))");
  detail::require_incidence(conf::X_up(n), S);
  Vec s(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) s[static_cast<std::size_t>(c)] = S(n + 1, 0, 1 + c);
  const double ss = dot(g, s, s);
  if (!(std::abs(ss) > 0)) throw precondition("not a conformal-circle tractor (null velocity slot)");
  const double lam = std::sqrt(std::abs(ss)), eps = ss < 0 ? -1.0 : 1.0;
  InitialData ic;
  ic.causal = eps < 0 ? Causal::Timelike : Causal::Spacelike;
  ic.u = s;
  for (double& v : ic.u) v *= eps / lam;
  const Vec ul = lower(g, ic.u);
  ic.a.assign(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c) {
    double t = 0.0;
    for (int b = 0; b < n; ++b) t += ul[static_cast<std::size_t>(b)] * S(n + 1, 1 + b, 1 + c);
    ic.a[static_cast<std::size_t>(c)] = eps * t / lam;
  }
  return ic;
}

// Rank-2 cases recover 𝐮 up to the positive scale of Σ.
inline InitialData ic_from_tractor_null(const DenseTensor& g, const DenseTensor& S) {
  const int n = g.dim(), N = n + 2;
  if (S.dim() != N || S.rank() != 2) throw bad_input("expected a rank-2 tractor of dimension n+2");
  if (!(S.norm() > 0)) throw precondition("zero tractor");
  const detail::Support sp = detail::support_of(S);
  detail::require_simple(sp, 2);
  const Eigen::MatrixXd V = sp.basis.leftCols(2);
  const Eigen::MatrixXd hr = V.transpose() * to_matrix(conf::metric(g)) * V;
  if (!(hr.cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, to_matrix(g).cwiseAbs().maxCoeff())))
    throw precondition("tractor is not totally null");
  detail::require_incidence(conf::X_up(n), S);
  InitialData ic;
  ic.causal = Causal::Null;
  ic.u.resize(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) ic.u[static_cast<std::size_t>(b)] = S(n + 1, 1 + b);
  ic.a.assign(static_cast<std::size_t>(n), 0.0);
  return ic;
}

inline InitialData ic_from_tractor_projective(int n, const DenseTensor& S) {
  if (S.dim() != n + 1 || S.rank() != 2) throw bad_input("expected a rank-2 tractor of dimension n+1");
  if (!(S.norm() > 0)) throw precondition("zero tractor");
  detail::require_simple(detail::support_of(S), 2);
  detail::require_incidence(proj::X_up(n), S);
  InitialData ic;
  ic.u.resize(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) ic.u[static_cast<std::size_t>(b)] = S(n, b);
  ic.a.assign(static_cast<std::size_t>(n), 0.0);
  return ic;
}

inline InitialData ic_from_tractor(const MetricSpec& m, const Vec& x, const DenseTensor& S) {
  const int n = m.dim();
  const DenseTensor g = m.metric_at(x);
  if (S.dim() == n + 1) return ic_from_tractor_projective(n, S);
  if (S.rank() == 3) return ic_from_tractor_conformal(g, S);
  return ic_from_tractor_null(g, S);
}

}  // namespace tractor
