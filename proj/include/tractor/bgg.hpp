#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tractor/curvature.hpp"
#include "tractor/expression.hpp"
#include "tractor/metric.hpp"
#include "tractor/tractor.hpp"

namespace tractor {

enum class Symmetry { None, Symmetric, Skew };

inline const char* symmetry_name(Symmetry s) {
  switch (s) {
    case Symmetry::None: return "none";
    case Symmetry::Symmetric: return "symmetric";
    case Symmetry::Skew: return "skew";
  }
  return "?";
}

namespace detail {

inline constexpr double kUnknown = std::numeric_limits<double>::quiet_NaN();

// ∇T from ∂T for any valence; the derivative slot comes first.
inline DenseTensor covariant_first(const DenseTensor& T, const DenseTensor& dT, const DenseTensor& gamma) {
  const int n = T.dim(), r = T.rank();
  std::vector<Valence> val{Valence::Lower};
  val.insert(val.end(), T.valence().begin(), T.valence().end());
  DenseTensor out(n, val);
  std::vector<int> idx(static_cast<std::size_t>(r) + 1), j(static_cast<std::size_t>(r));
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    out.decode(flat, idx);
    const int a = idx[0];
    for (int s = 0; s < r; ++s) j[static_cast<std::size_t>(s)] = idx[static_cast<std::size_t>(s) + 1];
    double v = dT[flat];
    for (int s = 0; s < r; ++s) {
      const auto us = static_cast<std::size_t>(s);
      const int keep = j[us];
      for (int m = 0; m < n; ++m) {
        j[us] = m;
        const double t = T.at(j);
        if (t == 0.0) continue;
        v += T.valence(s) == Valence::Upper ? gamma(keep, a, m) * t : -gamma(m, a, keep) * t;
      }
      j[us] = keep;
    }
    out[flat] = v;
  }
  return out;
}

// Norm ignoring unknown (NaN) entries.
inline double known_norm(const DenseTensor& t) {
  double s = 0.0;
  for (double v : t.data())
    if (!std::isnan(v)) s += v * v;
  return std::sqrt(s);
}

}  // namespace detail

// A tensor field with covariant derivatives, trivialised in the active scale.
// jets(G, k) returns {T, ∇T, ..., ∇^k T} with derivative slots first.
class FieldJet {
 public:
  using Provider = std::function<std::vector<DenseTensor>(const GeometryAt&, int)>;

  FieldJet(int n, std::vector<Valence> valence, double weight, Symmetry sym, int max_order, Provider p)
      : n_(n), valence_(std::move(valence)), weight_(weight), sym_(sym), max_order_(max_order), p_(std::move(p)) {}

  // Components are row-major (slot 0 slowest), n^r of them; rank-2 fields may also
  // give the n(n+1)/2 (symmetric) or n(n-1)/2 (skew) upper-triangle entries.
  static FieldJet expressions(int n, const std::vector<std::string>& comps, std::vector<Valence> valence,
                              double weight = 0.0, Symmetry sym = Symmetry::None) {
    std::vector<Expression> ex;
    for (const auto& c : comps) ex.push_back(parse_expression(c, n));
    return from_ast(n, std::move(ex), std::move(valence), weight, sym);
  }

  static FieldJet from_ast(int n, std::vector<Expression> comps, std::vector<Valence> valence,
                              double weight = 0.0, Symmetry sym = Symmetry::None) {
    const int r = static_cast<int>(valence.size());
    std::size_t full = 1;
    for (int i = 0; i < r; ++i) full *= static_cast<std::size_t>(n);
    const auto un = static_cast<std::size_t>(n);
    if (r == 2 && comps.size() != full) {
      std::vector<Expression> ex(full, Expression::constant(0.0));
      std::size_t k = 0;
      if (sym == Symmetry::Symmetric && comps.size() == un * (un + 1) / 2) {
        for (std::size_t a = 0; a < un; ++a)
          for (std::size_t b = a; b < un; ++b, ++k) ex[a * un + b] = ex[b * un + a] = comps[k];
      } else if (sym == Symmetry::Skew && comps.size() == un * (un - 1) / 2) {
        for (std::size_t a = 0; a < un; ++a)
          for (std::size_t b = a + 1; b < un; ++b, ++k) {
            ex[a * un + b] = comps[k];
            ex[b * un + a] = -comps[k];
          }
      } else {
        throw bad_input("field: wrong number of components for rank 2");
      }
      comps = std::move(ex);
    }
    if (comps.size() != full) throw bad_input("field: expected " + std::to_string(full) + " components");
    for (const auto& e : comps)
      if (e.arity() > n) throw bad_input("field component uses coordinates beyond n");
    FieldJet f(n, valence, weight, sym, r == 0 ? 3 : 1, nullptr);
    f.exprs_ = comps;
    f.p_ = [n, comps, valence](const GeometryAt& G, int order) {
      const int nout = static_cast<int>(comps.size());
      Partials p([&comps](std::span<const Jet3> x, std::span<Jet3> out) {
        for (std::size_t k = 0; k < comps.size(); ++k) out[k] = comps[k].eval<Jet3>(x);
      }, n, nout, G.point, order);
      std::vector<DenseTensor> out;
      DenseTensor T(n, valence);
      for (int k = 0; k < nout; ++k) T[static_cast<std::size_t>(k)] = p.value(k);
      out.push_back(T);
      if (order == 0) return out;
      std::vector<Valence> dv{Valence::Lower};
      dv.insert(dv.end(), valence.begin(), valence.end());
      DenseTensor dT(n, dv);
      for (int a = 0; a < n; ++a)
        for (int k = 0; k < nout; ++k) dT[static_cast<std::size_t>(a * nout + k)] = p.d1(a, k);
      out.push_back(detail::covariant_first(T, dT, G.gamma));
      if (order == 1) return out;
      // scalars only from here on
      const DenseTensor& Gm = G.gamma;
      DenseTensor H(n, 2, Valence::Lower);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          double v = p.d2(a, b, 0);
          for (int c = 0; c < n; ++c) v -= Gm(c, a, b) * p.d1(c, 0);
          H(a, b) = v;
        }
      out.push_back(H);
      if (order == 2) return out;
      DenseTensor T3(n, 3, Valence::Lower);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) {
            double v = p.d3(a, b, c, 0);
            for (int d = 0; d < n; ++d)
              v -= G.dgamma(a, d, b, c) * p.d1(d, 0) + Gm(d, b, c) * p.d2(a, d, 0) + Gm(d, a, b) * H(d, c) +
                   Gm(d, a, c) * H(b, d);
            T3(a, b, c) = v;
          }
      out.push_back(T3);
      return out;
    };
    return f;
  }

  // A field known only through point values; first derivatives by a five-point stencil.
  static FieldJet sampled(int n, std::vector<Valence> valence, double weight, Symmetry sym,
                          std::function<DenseTensor(std::span<const double>)> fn, double h = 1e-3) {
    FieldJet f(n, valence, weight, sym, 1, nullptr);
    f.p_ = [n, valence, fn, h](const GeometryAt& G, int order) {
      std::vector<DenseTensor> out{fn(G.point)};
      if (order == 0) return out;
      std::vector<Valence> dv{Valence::Lower};
      dv.insert(dv.end(), valence.begin(), valence.end());
      DenseTensor dT(n, dv);
      const std::size_t m = out[0].size();
      for (int a = 0; a < n; ++a) {
        auto at = [&](double s) {
          Vec y = G.point;
          y[static_cast<std::size_t>(a)] += s;
          return fn(y);
        };
        const DenseTensor d = (at(-2 * h) - at(2 * h) + (at(h) - at(-h)) * 8.0) * (1.0 / (12 * h));
        for (std::size_t k = 0; k < m; ++k) dT[static_cast<std::size_t>(a) * m + k] = d[k];
      }
      out.push_back(detail::covariant_first(out[0], dT, G.gamma));
      return out;
    };
    return f;
  }

  int dim() const { return n_; }
  int rank() const { return static_cast<int>(valence_.size()); }
  const std::vector<Valence>& valence() const { return valence_; }
  double weight() const { return weight_; }
  Symmetry symmetry() const { return sym_; }
  int max_order() const { return max_order_; }
  bool has_expressions() const { return !exprs_.empty(); }

  std::vector<DenseTensor> jets(const GeometryAt& G, int order) const {
    if (G.n != n_) throw bad_input("field dimension does not match geometry");
    if (order > max_order_)
      throw precondition("field supports covariant derivatives up to order " + std::to_string(max_order_));
    if (order >= 3 && G.order < 2) throw precondition("third derivatives need order-2 geometry");
    return p_(G, order);
  }

  DenseTensor value(const GeometryAt& G) const { return jets(G, 0)[0]; }

  // The same weighted field trivialised in the scale e^{2φ}g: components times e^{wφ}.
  FieldJet rescaled(const Expression& phi) const {
    if (exprs_.empty()) throw precondition("only expression fields can be rescaled");
    std::vector<Expression> ex;
    const Expression f = exp(Expression::constant(weight_) * phi);
    for (const auto& e : exprs_) ex.push_back(f * e);
    return from_ast(n_, std::move(ex), valence_, weight_, sym_);
  }

 private:
  int n_;
  std::vector<Valence> valence_;
  double weight_;
  Symmetry sym_;
  int max_order_;
  Provider p_;
  std::vector<Expression> exprs_;
};

inline FieldJet scalar_field(int n, const std::string& expr, double weight) {
  return FieldJet::expressions(n, std::vector<std::string>{expr}, {}, weight);
}

namespace detail {

inline void require_symmetric(const DenseTensor& k, const char* what) {
  const int r = k.rank();
  for (int i = 0; i + 1 < r; ++i) {
    std::vector<int> perm(static_cast<std::size_t>(r));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(i) + 1]);
    if (symmetry_defect(k, perm, 1.0) > 1e-10) throw bad_input(std::string(what) + ": field is not symmetric");
  }
}

inline void require_skew2(const DenseTensor& k, const char* what) {
  if (k.rank() != 2) throw bad_input(std::string(what) + ": expected a rank-2 field");
  if (symmetry_defect(k, std::vector<int>{1, 0}, -1.0) > 1e-10)
    throw bad_input(std::string(what) + ": field is not skew");
}

inline DenseTensor sym_schouten_proj(const GeometryAt& G) { return symmetrize(G.schouten_proj, {0, 1}); }

// ∇_(a∇_b∇_c)τ + 4Ρ_(ab∇_c)τ + 2τ∇_(aΡ_bc) with the given Schouten jets.
inline DenseTensor bgg3_tensor(const std::vector<DenseTensor>& t, const DenseTensor& P, const DenseTensor& dP) {
  const int n = P.dim();
  DenseTensor E(n, 3, Valence::Lower);
  const double tau = t[0][0];
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) E(a, b, c) = t[3](a, b, c) + 4 * P(a, b) * t[1](c) + 2 * tau * dP(a, b, c);
  return symmetrize(E, {0, 1, 2});
}

}  // namespace detail

inline double residual_killing(const AffineSpec& aff, const FieldJet& k, std::span<const double> x) {
  const GeometryAt G = aff.at(x, 3);
  const auto j = k.jets(G, 1);
  if (k.rank() < 1) throw bad_input("killing: expected a tensor of rank >= 1");
  for (Valence v : k.valence())
    if (v != Valence::Lower) throw bad_input("killing: expected a covariant tensor");
  detail::require_symmetric(j[0], "killing");
  return symmetrize(j[1], all_slots(j[1])).norm();
}

inline double residual_killing(const MetricSpec& m, const FieldJet& k, std::span<const double> x) {
  return residual_killing(AffineSpec(m), k, x);
}

inline double residual_conformal_killing(const MetricSpec& m, const FieldJet& k, std::span<const double> x) {
  const GeometryAt G = curvature_at(m, x, 3);
  const auto j = k.jets(G, 1);
  if (k.rank() < 1 || k.rank() > 2) throw bad_input("conformal killing: rank 1 or 2 supported");
  for (Valence v : k.valence())
    if (v != Valence::Lower) throw bad_input("conformal killing: expected a covariant tensor");
  detail::require_symmetric(j[0], "conformal killing");
  if (k.rank() == 1) return tracefree_sym2(symmetrize(j[1], {0, 1}), G.g).norm();
  return tracefree_sym3(symmetrize(j[1], {0, 1, 2}), G.g).norm();
}

namespace detail {

// ∇^p k_{cp}.
inline Vec divergence2(const GeometryAt& G, const DenseTensor& dk) {
  const int n = G.n;
  Vec d(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) d[static_cast<std::size_t>(c)] += G.g_inv(p, q) * dk(q, c, p);
  return d;
}

}  // namespace detail

// ‖∇_a k_bc − ∇_[a k_bc] + (2/(n−1)) g_a[b ∇^p k_c]p‖; with ky the last term is dropped.
inline double residual_cky2(const MetricSpec& m, const FieldJet& k, std::span<const double> x, bool ky = false) {
  const GeometryAt G = curvature_at(m, x, 1);
  const int n = G.n;
  const auto j = k.jets(G, 1);
  detail::require_skew2(j[0], "cky2");
  const DenseTensor& dk = j[1];
  DenseTensor R = dk - antisymmetrize(dk, {0, 1, 2});
  if (!ky) {
    const Vec div = detail::divergence2(G, dk);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          R(a, b, c) += (G.g(a, b) * div[static_cast<std::size_t>(c)] - G.g(a, c) * div[static_cast<std::size_t>(b)]) / (n - 1);
  }
  return R.norm();
}

inline DenseTensor bgg3_projective_tensor(const AffineSpec& aff, const FieldJet& tau, std::span<const double> x) {
  const GeometryAt G = aff.at(x, 3);
  if (tau.rank() != 0) throw bad_input("bgg3: expected a scalar density");
  return detail::bgg3_tensor(tau.jets(G, 3), detail::sym_schouten_proj(G), G.nabla_schouten_proj);
}

inline double residual_bgg3_projective(const AffineSpec& aff, const FieldJet& tau, std::span<const double> x) {
  return bgg3_projective_tensor(aff, tau, x).norm();
}

inline DenseTensor bgg3_conformal_tensor(const MetricSpec& m, const FieldJet& tau, std::span<const double> x) {
  const GeometryAt G = curvature_at(m, x, 3);
  if (tau.rank() != 0) throw bad_input("bgg3: expected a scalar density");
  return tracefree_sym3(detail::bgg3_tensor(tau.jets(G, 3), G.schouten_conf(), G.nabla_schouten_conf()), G.g);
}

inline double residual_bgg3_conformal(const MetricSpec& m, const FieldJet& tau, std::span<const double> x) {
  return bgg3_conformal_tensor(m, tau, x).norm();
}

// ∇_aσ^{bc} − 2δ^{[b}_a τ^{c]} with τ^a = ∇_bσ^{ba}/(n−1).
inline double residual_proj_bivector(const AffineSpec& aff, const FieldJet& sigma, std::span<const double> x) {
  const GeometryAt G = aff.at(x, 1);
  const int n = G.n;
  if (sigma.valence() != std::vector<Valence>{Valence::Upper, Valence::Upper})
    throw bad_input("weighted bivector: expected a contravariant rank-2 field");
  const auto j = sigma.jets(G, 1);
  detail::require_skew2(j[0], "weighted bivector");
  Vec tau(static_cast<std::size_t>(n), 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) tau[static_cast<std::size_t>(a)] += j[1](b, b, a) / (n - 1);
  DenseTensor R = j[1];
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        R(a, b, c) -= (a == b ? tau[static_cast<std::size_t>(c)] : 0.0) - (a == c ? tau[static_cast<std::size_t>(b)] : 0.0);
  return R.norm();
}

// H = ½D_αD_βτ: τYY + ∇_cτ Y_(α Z_β)^c + ZZ(½∇∇τ + Ρτ), lower components.
inline DenseTensor L_tau_projective(const AffineSpec& aff, const FieldJet& tau, std::span<const double> x) {
  const GeometryAt G = aff.at(x, 2);
  const int n = G.n;
  const auto t = tau.jets(G, 2);
  const DenseTensor P = detail::sym_schouten_proj(G);
  DenseTensor H(n + 1, 2, Valence::Lower);
  const double tv = t[0][0];
  H(n, n) = tv;
  for (int b = 0; b < n; ++b) {
    H(n, b) = H(b, n) = 0.5 * t[1](b);
    for (int c = 0; c < n; ++c) H(b, c) = 0.5 * t[2](b, c) + P(b, c) * tv;
  }
  return H;
}

// Conformal splitting operator on E[2], lower components; the XX entry is unknown (NaN).
inline DenseTensor L_tau_conformal(const MetricSpec& m, const FieldJet& tau, std::span<const double> x) {
  if (m.dim() == 2) throw precondition("L_tau_conformal needs n >= 3");
  const GeometryAt G = curvature_at(m, x, 3);
  const int n = G.n, N = n + 2;
  const auto t = tau.jets(G, 3);
  const DenseTensor& P = G.schouten_conf();
  const double J = G.J(), tv = t[0][0];
  double lap = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) lap += G.g_inv(a, b) * t[2](a, b);
  const double B = lap + 2 * J * tv;  // Δτ + 2Jτ
  Vec dB(static_cast<std::size_t>(n), 0.0);  // ∇_b(Δτ + 2Jτ)
  for (int b = 0; b < n; ++b) {
    double s = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) s += G.g_inv(p, q) * t[3](b, p, q);
    dB[static_cast<std::size_t>(b)] = s + 2 * G.nabla_J(b) * tv + 2 * J * t[1](b);
  }
  const DenseTensor Pm = G.schouten_conf_mixed();
  DenseTensor H(N, 2, Valence::Lower);
  const int X = 0, Y = N - 1;
  H(Y, Y) = tv;
  H(X, Y) = H(Y, X) = -0.5 * B / (n + 2);
  H(X, X) = detail::kUnknown;
  for (int b = 0; b < n; ++b) {
    H(Y, 1 + b) = H(1 + b, Y) = 0.5 * t[1](b);
    double pr = 0.0;
    for (int r = 0; r < n; ++r) pr += Pm(b, r) * t[1](r);
    H(X, 1 + b) = H(1 + b, X) = -0.5 * (dB[static_cast<std::size_t>(b)] / (n + 2) + pr);
    for (int c = 0; c < n; ++c) H(1 + b, 1 + c) = 0.5 * (t[2](b, c) + 2 * P(b, c) * tv - G.g(b, c) * B / (n + 2));
  }
  return H;
}

// L(k) for a conformal Killing-Yano 2-form (weight 3), lower components with the
// unit-normalised wedges Y_[A Z_B Z_C] etc.; the XZZ entries are unknown (NaN).
inline DenseTensor L_cky2(const MetricSpec& m, const FieldJet& k, std::span<const double> x) {
  const GeometryAt G = curvature_at(m, x, 1);
  const int n = G.n, N = n + 2;
  if (n < 3) throw precondition("L_cky2 needs n >= 3");
  const auto j = k.jets(G, 1);
  detail::require_skew2(j[0], "cky2");
  const DenseTensor dk = antisymmetrize(j[1], {0, 1, 2});
  const Vec div = detail::divergence2(G, j[1]);  // ∇^p k_cp = −∇^p k_pc
  DenseTensor K(N, 3, Valence::Lower);
  auto put = [&](int a, int b, int c, double v) {
    K(a, b, c) = v; K(b, c, a) = v; K(c, a, b) = v;
    K(b, a, c) = -v; K(a, c, b) = -v; K(c, b, a) = -v;
  };
  const int X = 0, Y = N - 1;
  for (int b = 0; b < n; ++b)
    for (int c = b + 1; c < n; ++c) {
      put(Y, 1 + b, 1 + c, j[0](b, c) / 3.0);
      put(X, 1 + b, 1 + c, detail::kUnknown);
    }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int c = b + 1; c < n; ++c) put(1 + a, 1 + b, 1 + c, dk(a, b, c));
  for (int a = 0; a < n; ++a) put(X, Y, 1 + a, -div[static_cast<std::size_t>(a)] / (3.0 * (n - 1)));
  return K;
}

// L(σ) = W_aW_bσ^{ab} + (2/(n−1)) X^[α W^β]_a ∇_bσ^{ab}, upper components; parallel iff σ is a normal solution.
inline DenseTensor L_proj_bivector(const AffineSpec& aff, const FieldJet& sigma, std::span<const double> x) {
  const GeometryAt G = aff.at(x, 1);
  const int n = G.n;
  if (sigma.valence() != std::vector<Valence>{Valence::Upper, Valence::Upper})
    throw bad_input("weighted bivector: expected a contravariant rank-2 field");
  const auto j = sigma.jets(G, 1);
  detail::require_skew2(j[0], "weighted bivector");
  DenseTensor L(n + 1, 2, Valence::Upper);
  for (int a = 0; a < n; ++a) {
    double div = 0.0;
    for (int b = 0; b < n; ++b) {
      L(a, b) = j[0](a, b);
      div += j[1](b, b, a);
    }
    L(n, a) = -div / (n - 1);
    L(a, n) = div / (n - 1);
  }
  return L;
}

// Contraction of an upper tensor with a lower one that may carry unknown entries.
inline double pair_known(const DenseTensor& up, const DenseTensor& low) {
  if (up.dim() != low.dim() || up.rank() != low.rank()) throw bad_input("pairing: shape mismatch");
  const double scale = std::max(1.0, up.max_abs());
  double s = 0.0;
  for (std::size_t i = 0; i < up.size(); ++i) {
    const double l = low[i], u = up[i];
    if (std::isnan(l)) {
      if (std::abs(u) > 1e-14 * scale) throw precondition("pairing touches an unknown slot");
      continue;
    }
    s += u * l;
  }
  return s;
}

// ‖∇_v T‖ at x for a tractor field given pointwise, over known entries;
// d/ds by a five-point stencil along v.
inline double normality_residual(const ConnectionProvider& conn, const std::function<DenseTensor(std::span<const double>)>& T,
                                 std::span<const double> x, const Vec& v, double h = 1e-3) {
  auto at = [&](double s) {
    Vec y(x.begin(), x.end());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * v[i];
    return T(y);
  };
  DenseTensor d = (at(-2 * h) - at(2 * h) + (at(h) - at(-h)) * 8.0) * (1.0 / (12 * h));
  // unknown entries enter the connection term as 0 and as 1; entries that move depend on them
  DenseTensor z = at(0.0), o = z;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (std::isnan(z[i])) z[i] = 0.0, o[i] = 1.0;
  const Eigen::MatrixXd M = along(conn(x), v);
  const DenseTensor cz = connection_action(M, z), co = connection_action(M, o);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = cz[i] == co[i] ? d[i] + cz[i] : detail::kUnknown;
  return detail::known_norm(d);
}

// k_bc = τ∇_b∇_cτ + 2Ρ_bcτ² − ½∇_bτ∇_cτ (projective Ρ of the active connection).
inline FieldJet killing_from_tau(const FieldJet& tau) {
  if (tau.rank() != 0) throw bad_input("killing_from_tau: expected a scalar");
  const int n = tau.dim();
  return FieldJet(n, {Valence::Lower, Valence::Lower}, 2 * tau.weight(), Symmetry::Symmetric, 1,
                  [tau, n](const GeometryAt& G, int order) {
                    const auto t = tau.jets(G, order + 2);
                    const DenseTensor P = detail::sym_schouten_proj(G);
                    const double tv = t[0][0];
                    DenseTensor k(n, 2, Valence::Lower);
                    for (int b = 0; b < n; ++b)
                      for (int c = 0; c < n; ++c) k(b, c) = tv * t[2](b, c) + 2 * P(b, c) * tv * tv - 0.5 * t[1](b) * t[1](c);
                    std::vector<DenseTensor> out{k};
                    if (order == 0) return out;
                    if (G.order < 3) throw precondition("killing_from_tau derivative needs order-3 geometry");
                    const DenseTensor dP = symmetrize(G.nabla_schouten_proj, {1, 2});
                    DenseTensor dk(n, 3, Valence::Lower);
                    for (int a = 0; a < n; ++a)
                      for (int b = 0; b < n; ++b)
                        for (int c = 0; c < n; ++c)
                          dk(a, b, c) = t[1](a) * t[2](b, c) + tv * t[3](a, b, c) + 2 * dP(a, b, c) * tv * tv +
                                        4 * P(b, c) * tv * t[1](a) - 0.5 * (t[2](a, b) * t[1](c) + t[1](b) * t[2](a, c));
                    out.push_back(dk);
                    return out;
                  });
}

// k_{a1..am} = 𝕏_(a1 ... 𝕏_am) Q for a parallel Q with m skew pairs (lower components).
inline DenseTensor contract_capital_X(TractorKind kind, int n, const DenseTensor& Q) {
  const int N = kind == TractorKind::Conformal ? n + 2 : n + 1;
  const int m0 = Q.rank() / 2;
  if (Q.dim() != N || Q.rank() % 2 != 0 || m0 < 1 || m0 > 2) throw bad_input("Q: expected rank 2 or 4 of tractor dimension");
  for (int p = 0; p < m0; ++p) {
    std::vector<int> perm(static_cast<std::size_t>(Q.rank()));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[static_cast<std::size_t>(2 * p)], perm[static_cast<std::size_t>(2 * p + 1)]);
    if (symmetry_defect(Q, perm, -1.0) > 1e-8)
      throw bad_input("Q: symmetry-type mismatch (each index pair must be skew)");
  }
  const int X = kind == TractorKind::Conformal ? n + 1 : n;
  auto W = [&](int a) { return kind == TractorKind::Conformal ? 1 + a : a; };
  if (m0 == 1) {
    DenseTensor k(n, 1, Valence::Lower);
    for (int a = 0; a < n; ++a) k(a) = Q(X, W(a)) - Q(W(a), X);
    return k;
  }
  DenseTensor k(n, 2, Valence::Lower);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      k(a, b) = Q(X, W(a), X, W(b)) - Q(W(a), X, X, W(b)) - Q(X, W(a), W(b), X) + Q(W(a), X, W(b), X);
  return symmetrize(k, {0, 1});
}

inline FieldJet killing_from_parallel_Q(TractorKind kind, int n,
                                        std::function<DenseTensor(std::span<const double>)> Q, double h = 1e-3) {
  auto k = [kind, n, Q](std::span<const double> x) { return contract_capital_X(kind, n, Q(x)); };
  Vec origin(static_cast<std::size_t>(n), 0.0);
  const int m0 = k(origin).rank();
  return FieldJet::sampled(n, std::vector<Valence>(static_cast<std::size_t>(m0), Valence::Lower), 0.0,
                           Symmetry::Symmetric, k, h);
}

}  // namespace tractor
