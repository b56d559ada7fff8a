#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tractor/bgg.hpp"
#include "tractor/curves.hpp"

namespace tractor {

using TractorField = std::function<DenseTensor(std::span<const double>)>;

namespace detail {

inline void require_lower(const FieldJet& f, const char* what) {
  for (Valence v : f.valence())
    if (v != Valence::Lower) throw bad_input(std::string(what) + ": expected a covariant field");
}

inline double contract_u(const DenseTensor& k, const Vec& u) {
  // k(u, ..., u)
  double s = 0.0;
  std::vector<int> idx(static_cast<std::size_t>(k.rank()));
  for (std::size_t f = 0; f < k.size(); ++f) {
    k.decode(f, idx);
    double p = k[f];
    for (int i : idx) p *= u[static_cast<std::size_t>(i)];
    s += p;
  }
  return s;
}

inline void require_null(const DenseTensor& g, const CurveState& s) {
  const double uu = dot(g, s.u, s.u);
  if (std::abs(uu) > 1e-9 * norm2(s.u)) throw precondition("state is not null (|u.u| = " + shortest(std::abs(uu)) + ")");
}

}  // namespace detail

// 𝐮...𝐮 k along an affinely parametrised geodesic.
inline double fi_killing(const AffineSpec& aff, const CurveState& s, const FieldJet& k) {
  detail::require_lower(k, "killing integral");
  return detail::contract_u(k.value(aff.at(s.x, 1)), s.u);
}

inline double fi_conformal_killing_null(const MetricSpec& m, const CurveState& s, const FieldJet& k) {
  detail::require_lower(k, "conformal killing integral");
  const GeometryAt G = curvature_at(m, s.x, 1);
  detail::require_null(G.g, s);
  return detail::contract_u(k.value(G), s.u);
}

// η = τ uu∇∇τ + 2uuΡτ² − ½(u∇τ)².
inline double fi_tau_projective(const AffineSpec& aff, const CurveState& s, const FieldJet& tau) {
  if (tau.rank() != 0) throw bad_input("tau integral: expected a scalar");
  const GeometryAt G = aff.at(s.x, 2);
  const auto t = tau.jets(G, 2);
  const DenseTensor P = detail::sym_schouten_proj(G);
  const double tv = t[0][0];
  double uHu = 0.0, uPu = 0.0, ud = 0.0;
  for (int a = 0; a < G.n; ++a) {
    const double ua = s.u[static_cast<std::size_t>(a)];
    ud += ua * t[1](a);
    for (int b = 0; b < G.n; ++b) {
      uHu += ua * s.u[static_cast<std::size_t>(b)] * t[2](a, b);
      uPu += ua * s.u[static_cast<std::size_t>(b)] * P(a, b);
    }
  }
  return tv * uHu + 2 * uPu * tv * tv - 0.5 * ud * ud;
}

// 𝐮^a𝐚^b k_ab ∓ (1/(n−1)) 𝐮^a ∇^p k_pa.
inline double fi_cky_tod(const MetricSpec& m, const CurveState& s, const FieldJet& k) {
  const GeometryAt G = curvature_at(m, s.x, 1);
  const int n = G.n;
  const auto j = k.jets(G, 1);
  detail::require_skew2(j[0], "Tod integral");
  const WeightedState w = weighted_state(G.g, s);
  const Vec div = detail::divergence2(G, j[1]);  // ∇^p k_cp
  double uak = 0.0, ud = 0.0;
  for (int a = 0; a < n; ++a) {
    ud -= w.u[static_cast<std::size_t>(a)] * div[static_cast<std::size_t>(a)];
    for (int b = 0; b < n; ++b) uak += w.u[static_cast<std::size_t>(a)] * w.a[static_cast<std::size_t>(b)] * j[0](a, b);
  }
  return uak - w.eps * ud / (n - 1);
}

// ½𝐮𝐮(∇∇τ + 2Ρτ − g(Δτ+2Jτ)/(n+2)) ∓ (Δτ+2Jτ)/(n+2) − 𝐚·∇τ ∓ (𝐚·𝐚)τ
inline double fi_tau_conformal(const MetricSpec& m, const CurveState& s, const FieldJet& tau) {
  if (tau.rank() != 0) throw bad_input("tau integral: expected a scalar");
  const GeometryAt G = curvature_at(m, s.x, 2);
  const int n = G.n;
  const auto t = tau.jets(G, 2);
  const WeightedState w = weighted_state(G.g, s);
  const DenseTensor& P = G.schouten_conf();
  const double tv = t[0][0];
  double lap = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) lap += G.g_inv(a, b) * t[2](a, b);
  const double B = (lap + 2 * G.J() * tv) / (n + 2);
  double uu = 0.0, ad = 0.0;
  for (int a = 0; a < n; ++a) {
    ad += w.a[static_cast<std::size_t>(a)] * t[1](a);
    for (int b = 0; b < n; ++b)
      uu += w.u[static_cast<std::size_t>(a)] * w.u[static_cast<std::size_t>(b)] *
            (t[2](a, b) + 2 * P(a, b) * tv - G.g(a, b) * B);
  }
  return 0.5 * uu - w.eps * B - ad - w.eps * dot(G.g, w.a, w.a) * tv;
}

// S^{AB} = 𝐮𝐮ZZ ± 2X(Y) − 2𝐚X(Z) ∓ (𝐚·𝐚)XX, upper components.
inline DenseTensor s_tractor(const WeightedState& w, const DenseTensor& g) {
  const int n = static_cast<int>(w.u.size()), X = n + 1;
  DenseTensor S(n + 2, 2, Valence::Upper);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) S(1 + a, 1 + b) = w.u[static_cast<std::size_t>(a)] * w.u[static_cast<std::size_t>(b)];
    S(X, 1 + a) = S(1 + a, X) = -w.a[static_cast<std::size_t>(a)];
  }
  S(X, 0) = S(0, X) = w.eps;
  S(X, X) = -w.eps * dot(g, w.a, w.a);
  return S;
}

inline DenseTensor s_tractor(const MetricSpec& m, const CurveState& s) {
  const DenseTensor g = m.metric_at(s.x);
  return s_tractor(weighted_state(g, s), g);
}

// Symmetric power of Σ; only m0 ≤ 2 is supported.
inline DenseTensor sym_power_sigma(const DenseTensor& Sigma, int m0) {
  if (m0 < 1) throw bad_input("symmetric power must be >= 1");
  if (m0 > 2) throw bad_input("symmetric powers above 2 are not supported");
  return m0 == 1 ? Sigma : outer(Sigma, Sigma);
}

// 𝕊^{ABCD} = Σ^{ABE}Σ^{CD}_E.
inline DenseTensor double_sigma(const DenseTensor& Sigma, const DenseTensor& h) {
  if (Sigma.rank() != 3) throw bad_input("double_sigma: expected a rank-3 tractor");
  const int N = Sigma.dim();
  DenseTensor out(N, 4, Valence::Upper);
  for (int A = 0; A < N; ++A)
    for (int B = 0; B < N; ++B)
      for (int C = 0; C < N; ++C)
        for (int D = 0; D < N; ++D) {
          double s = 0.0;
          for (int E = 0; E < N; ++E)
            for (int F = 0; F < N; ++F) s += Sigma(A, B, E) * h(E, F) * Sigma(C, D, F);
          out(A, B, C, D) = s;
        }
  return out;
}

// Σ for the given curve class.
inline DenseTensor curve_sigma(const MetricSpec& m, SigmaBuilder b, const CurveState& s) {
  switch (b) {
    case SigmaBuilder::Projective: return sigma_projective(s);
    case SigmaBuilder::Null: return sigma_null(m.metric_at(s.x), s);
    case SigmaBuilder::Conformal: return sigma_conformal(m.metric_at(s.x), s);
  }
  throw bad_input("unknown builder");
}

// Full contraction of ⊙^{m0}Σ with a lower tractor T.
inline double fi_generic_pairing(const DenseTensor& SigmaPower, const DenseTensor& T) {
  if (SigmaPower.rank() != T.rank() || SigmaPower.dim() != T.dim())
    throw bad_input("pairing: Σ power has rank " + std::to_string(SigmaPower.rank()) + ", T has rank " +
                    std::to_string(T.rank()));
  for (Valence v : T.valence())
    if (v != Valence::Lower) throw bad_input("pairing: T must have lower tractor indices");
  return pair_known(SigmaPower, T);
}

enum class IntegralKind { Killing, ConformalKillingNull, TauProjective, CkyTod, TauConformal, SPairH, GenericPairing };

inline const char* integral_kind_name(IntegralKind k) {
  switch (k) {
    case IntegralKind::Killing: return "killing_contraction";
    case IntegralKind::ConformalKillingNull: return "conformal_killing_null";
    case IntegralKind::TauProjective: return "tau_projective";
    case IntegralKind::CkyTod: return "cky_tod";
    case IntegralKind::TauConformal: return "tau_conformal";
    case IntegralKind::SPairH: return "S_pair_H";
    case IntegralKind::GenericPairing: return "generic_pairing";
  }
  return "?";
}

inline std::optional<IntegralKind> integral_kind_from(const std::string& s) {
  for (IntegralKind k : {IntegralKind::Killing, IntegralKind::ConformalKillingNull, IntegralKind::TauProjective,
                         IntegralKind::CkyTod, IntegralKind::TauConformal, IntegralKind::SPairH, IntegralKind::GenericPairing})
    if (s == integral_kind_name(k)) return k;
  return std::nullopt;
}

struct FirstIntegralSpec {
  IntegralKind kind = IntegralKind::Killing;
  std::optional<FieldJet> field;
  TractorField tractor;  // lower components, for generic pairings
  TractorKind tractor_kind = TractorKind::Conformal;
  SigmaBuilder builder = SigmaBuilder::Conformal;
  int m0 = 1;
};

namespace detail {

inline const FieldJet& field_of(const FirstIntegralSpec& spec) {
  if (!spec.field) throw bad_input(std::string(integral_kind_name(spec.kind)) + " needs a field");
  return *spec.field;
}

inline ConnectionProvider connection_for(const AffineSpec& aff, TractorKind k) {
  if (k == TractorKind::Projective) return projective_connection(aff);
  return conformal_connection(aff.metric());
}

}  // namespace detail

inline double evaluate_integral(const AffineSpec& aff, const FirstIntegralSpec& spec, const CurveState& s) {
  const MetricSpec& m = aff.metric();
  switch (spec.kind) {
    case IntegralKind::Killing: return fi_killing(aff, s, detail::field_of(spec));
    case IntegralKind::ConformalKillingNull: return fi_conformal_killing_null(m, s, detail::field_of(spec));
    case IntegralKind::TauProjective: return fi_tau_projective(aff, s, detail::field_of(spec));
    case IntegralKind::CkyTod: return fi_cky_tod(m, s, detail::field_of(spec));
    case IntegralKind::TauConformal: return fi_tau_conformal(m, s, detail::field_of(spec));
    case IntegralKind::SPairH: return pair_known(s_tractor(m, s), L_tau_conformal(m, detail::field_of(spec), s.x));
    case IntegralKind::GenericPairing: {
      if (!spec.tractor) throw bad_input("generic pairing needs a tractor");
      return fi_generic_pairing(sym_power_sigma(curve_sigma(m, spec.builder, s), spec.m0), spec.tractor(s.x));
    }
  }
  throw bad_input("unknown integral kind");
}

// Throws unless T is parallel along the velocities at a few samples.
inline void check_parallel(const AffineSpec& aff, const FirstIntegralSpec& spec, const CurveSamples& curve,
                           double tol = 1e-6) {
  if (!spec.tractor) throw bad_input("generic pairing needs a tractor");
  const ConnectionProvider conn = detail::connection_for(aff, spec.tractor_kind);
  const auto& st = curve.states;
  for (std::size_t i : {std::size_t{0}, st.size() / 2, st.size() - 1}) {
    const double scale = std::max(1.0, spec.tractor(st[i].x).max_abs()) * std::max(1.0, euclid_norm(st[i].u));
    const double r = normality_residual(conn, spec.tractor, st[i].x, st[i].u);
    if (!(r < tol * scale)) throw precondition("pairing tractor is not parallel (residual " + shortest(r) + ")");
  }
}

struct ConservationReport {
  std::string kind;
  std::vector<double> values;
  double Q0 = 0.0;
  double abs_drift = 0.0;
  double rel_drift = 0.0;
  std::size_t n_samples = 0;
  double h = 0.0;
  double tol = 1e-6;
  bool pass = true;
};

inline ConservationReport verify_conservation(const AffineSpec& aff, const CurveSamples& curve,
                                              const FirstIntegralSpec& spec, double tol = 1e-6) {
  if (curve.states.empty()) throw bad_input("conservation: empty curve");
  if (spec.kind == IntegralKind::GenericPairing) check_parallel(aff, spec, curve);
  ConservationReport r;
  r.kind = integral_kind_name(spec.kind);
  r.h = curve.h;
  r.tol = tol;
  r.values.reserve(curve.states.size());
  for (const auto& s : curve.states) r.values.push_back(evaluate_integral(aff, spec, s));
  r.n_samples = r.values.size();
  r.Q0 = r.values.front();
  for (double v : r.values) r.abs_drift = std::max(r.abs_drift, std::abs(v - r.Q0));
  if (std::any_of(r.values.begin(), r.values.end(), [](double v) { return !std::isfinite(v); }))
    r.abs_drift = std::numeric_limits<double>::infinity();
  r.rel_drift = r.abs_drift / std::max(std::abs(r.Q0), 1e-12);
  r.pass = r.rel_drift < tol;
  return r;
}

inline ConservationReport verify_conservation(const MetricSpec& m, const CurveSamples& curve,
                                              const FirstIntegralSpec& spec, double tol = 1e-6) {
  return verify_conservation(AffineSpec(m), curve, spec, tol);
}

// Axis-aligned grid of cells; an axis with lo == hi has a single cell at lo.
struct ScanGrid {
  Vec lo, hi;
  std::vector<int> res;

  int dim() const { return static_cast<int>(lo.size()); }
  std::size_t cells() const {
    std::size_t c = 1;
    for (int r : res) c *= static_cast<std::size_t>(r);
    return c;
  }
  double spacing(int i) const {
    const auto k = static_cast<std::size_t>(i);
    return res[k] > 0 ? (hi[k] - lo[k]) / res[k] : 0.0;
  }
  Vec centre(std::size_t cell) const {
    Vec x(lo.size());
    for (std::size_t k = 0; k < lo.size(); ++k) {
      const std::size_t i = cell % static_cast<std::size_t>(res[k]);
      cell /= static_cast<std::size_t>(res[k]);
      x[k] = lo[k] == hi[k] ? lo[k] : lo[k] + (static_cast<double>(i) + 0.5) * spacing(static_cast<int>(k));
    }
    return x;
  }
  std::size_t index(const std::vector<int>& i) const {
    std::size_t c = 0, stride = 1;
    for (std::size_t k = 0; k < lo.size(); ++k) {
      c += static_cast<std::size_t>(i[k]) * stride;
      stride *= static_cast<std::size_t>(res[k]);
    }
    return c;
  }
  void validate() const {
    if (lo.size() != hi.size() || lo.size() != res.size() || lo.empty()) throw bad_input("scan grid: inconsistent box");
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (!(hi[k] >= lo[k])) throw bad_input("scan grid: empty interval");
      if (res[k] < 1 || (lo[k] == hi[k] && res[k] != 1)) throw bad_input("scan grid: bad resolution");
    }
    if (cells() > 50'000'000) throw bad_input("scan grid: too many cells");
  }
};

// Norm of a field's jets at a grid cell.
using CellPredicate = std::function<double(std::size_t cell, const Vec& x)>;

// Cell centres where every predicate is below tol, in grid order.
inline std::vector<Vec> zero_locus_scan(const ScanGrid& grid, const std::vector<CellPredicate>& preds, double tol) {
  grid.validate();
  if (preds.empty()) throw bad_input("scan: no fields");
  std::vector<Vec> hits;
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    const Vec x = grid.centre(c);
    if (std::all_of(preds.begin(), preds.end(), [&](const CellPredicate& p) { return p(c, x) < tol; }))
      hits.push_back(x);
  }
  return hits;
}

// (k_bc, ∇_[a k_bc]) for a 2-form field.
inline CellPredicate cky_zero_predicate(const MetricSpec& m, const FieldJet& k) {
  return [m, k](std::size_t, const Vec& x) {
    const auto j = k.jets(curvature_at(m, x, 1), 1);
    const double a = j[0].norm(), b = antisymmetrize(j[1], {0, 1, 2}).norm();
    return std::sqrt(a * a + b * b);
  };
}

// (k_b, ∇_[a k_b]) for a 1-form field.
inline CellPredicate ck_zero_predicate(const MetricSpec& m, const FieldJet& k) {
  return [m, k](std::size_t, const Vec& x) {
    const auto j = k.jets(curvature_at(m, x, 1), 1);
    const double a = j[0].norm(), b = antisymmetrize(j[1], {0, 1}).norm();
    return std::sqrt(a * a + b * b);
  };
}

inline CellPredicate bivector_zero_predicate(const AffineSpec& aff, const FieldJet& sigma) {
  return [aff, sigma](std::size_t, const Vec& x) { return sigma.value(aff.at(x, 1)).norm(); };
}

namespace detail {

inline CurveSamples segment(const Vec& a, const Vec& b, int steps) {
  CurveSamples c;
  c.h = 1.0 / steps;
  Vec u(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) u[i] = b[i] - a[i];
  for (int s = 0; s <= steps; ++s) {
    CurveState st;
    st.t = s * c.h;
    st.x = axpy(st.t, u, a);
    st.u = u;
    st.a.assign(a.size(), 0.0);
    c.states.push_back(std::move(st));
  }
  return c;
}

}  // namespace detail

// Parallel transport of a seed to every cell of a grid with at most two varying
// axes: seed to the first cell, along the first varying axis, then up the second.
inline std::vector<DenseTensor> transport_to_grid(const ConnectionProvider& conn, const ScanGrid& grid, const Vec& seed_x,
                                                  const DenseTensor& seed, int substeps = 2) {
  grid.validate();
  std::vector<int> axes;
  for (int k = 0; k < grid.dim(); ++k)
    if (grid.res[static_cast<std::size_t>(k)] > 1) axes.push_back(k);
  if (axes.size() > 2) throw bad_input("grid transport supports at most two varying axes");
  while (axes.size() < 2) axes.push_back(-1);
  std::vector<DenseTensor> out(grid.cells());
  std::vector<int> idx(static_cast<std::size_t>(grid.dim()), 0);
  auto advance = [&](const Vec& from, const Vec& to, const DenseTensor& v) {
    const double len = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < from.size(); ++i) s += (to[i] - from[i]) * (to[i] - from[i]);
      return std::sqrt(s);
    }();
    const double cell = std::max({grid.spacing(std::max(axes[0], 0)), axes[1] >= 0 ? grid.spacing(axes[1]) : 0.0, 1e-300});
    const int steps = std::max(substeps, static_cast<int>(std::ceil(substeps * len / cell)));
    return tractor_transport(conn, detail::segment(from, to, steps), v).back();
  };
  const std::size_t c0 = grid.index(idx);
  out[c0] = advance(seed_x, grid.centre(c0), seed);
  const int r0 = axes[0] >= 0 ? grid.res[static_cast<std::size_t>(axes[0])] : 1;
  const int r1 = axes[1] >= 0 ? grid.res[static_cast<std::size_t>(axes[1])] : 1;
  for (int i = 1; i < r0; ++i) {
    auto prev = idx;
    idx[static_cast<std::size_t>(axes[0])] = i;
    prev[static_cast<std::size_t>(axes[0])] = i - 1;
    out[grid.index(idx)] = advance(grid.centre(grid.index(prev)), grid.centre(grid.index(idx)), out[grid.index(prev)]);
  }
  for (int i = 0; i < r0; ++i) {
    if (axes[0] >= 0) idx[static_cast<std::size_t>(axes[0])] = i;
    for (int j = 1; j < r1; ++j) {
      auto prev = idx;
      idx[static_cast<std::size_t>(axes[1])] = j;
      prev[static_cast<std::size_t>(axes[1])] = j - 1;
      out[grid.index(idx)] = advance(grid.centre(grid.index(prev)), grid.centre(grid.index(idx)), out[grid.index(prev)]);
    }
    if (axes[1] >= 0) idx[static_cast<std::size_t>(axes[1])] = 0;
  }
  return out;
}

// Zero-locus predicate for a parallel conformal 3-cotractor K = L(k) known on the grid:
// (3K_{Ybc}, K_{abc}) = (k_bc, ∇_[a k_bc]).
inline CellPredicate cky_tractor_predicate(std::vector<DenseTensor> K) {
  auto shared = std::make_shared<std::vector<DenseTensor>>(std::move(K));
  return [shared](std::size_t cell, const Vec&) {
    const DenseTensor& T = (*shared)[cell];
    const int N = T.dim(), n = N - 2, Y = N - 1;
    double s = 0.0;
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        s += 9 * T(Y, 1 + b, 1 + c) * T(Y, 1 + b, 1 + c);
        for (int a = 0; a < n; ++a) s += T(1 + a, 1 + b, 1 + c) * T(1 + a, 1 + b, 1 + c);
      }
    return std::sqrt(s);
  };
}

}  // namespace tractor
