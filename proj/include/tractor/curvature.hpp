#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tractor/metric.hpp"

namespace tractor {

// Christoffel symbols and coordinate partials: gamma(c,a,b) = Γ^c_ab,
// dgamma(e,c,a,b) = ∂_e Γ^c_ab, ddgamma(f,e,c,a,b) = ∂_f ∂_e Γ^c_ab.
struct ConnectionJets {
  int order = 0;
  DenseTensor gamma, dgamma, ddgamma;
};

// Pointwise geometry. Index order follows R_ab^c_d; derivative slots first.
struct GeometryAt {
  Vec point;
  int n = 0;
  int order = 0;
  bool metric = false;  // false for a projectively changed (non Levi-Civita) connection

  DenseTensor g, g_inv;
  DenseTensor gamma, dgamma;

  DenseTensor riemann, ricci;
  double scal = 0.0;
  DenseTensor schouten_proj, beta, weyl_proj;

  DenseTensor nabla_riemann, nabla_ricci, nabla_schouten_proj, cotton_proj, nabla_weyl_proj;

  DenseTensor P_conf, W_conf, nabla_P_conf, Y_conf, nabla_W_conf, nabla_J;
  double J_conf = 0.0;

  const DenseTensor& schouten_conf() const { require_conformal(); return P_conf; }
  const DenseTensor& weyl_conf() const { require_conformal(); return W_conf; }
  const DenseTensor& cotton_conf() const { require_conformal(order >= 3); return Y_conf; }
  const DenseTensor& nabla_schouten_conf() const { require_conformal(order >= 3); return nabla_P_conf; }
  const DenseTensor& nabla_weyl_conf() const { require_conformal(order >= 3); return nabla_W_conf; }
  double J() const { require_conformal(); return J_conf; }

  // Ρ_a^b with the second index raised.
  DenseTensor schouten_conf_mixed() const {
    const DenseTensor& P = schouten_conf();
    DenseTensor out(n, std::vector<Valence>{Valence::Lower, Valence::Upper});
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += g_inv(b, c) * P(a, c);
        out(a, b) = s;
      }
    return out;
  }

  void require_conformal(bool enough_order = true) const {
    if (!metric) throw precondition("conformal quantities need a Levi-Civita connection");
    if (n <= 2) throw precondition("conformal Schouten undefined for n=2");
    if (order < 2 || !enough_order) throw precondition("geometry evaluated at too low an order");
  }
};

namespace detail {

inline ConnectionJets connection_from_metric(const MetricJets& mj, DenseTensor& ginv_out) {
  const int n = mj.g.dim();
  const int order = mj.order;
  const DenseTensor ginv = inverse_metric(mj.g);
  ginv_out = ginv;
  ConnectionJets cj;
  cj.order = order;
  cj.gamma = DenseTensor(n, {Valence::Upper, Valence::Lower, Valence::Lower});
  cj.dgamma = DenseTensor(n, {Valence::Lower, Valence::Upper, Valence::Lower, Valence::Lower});
  cj.ddgamma = DenseTensor(n, {Valence::Lower, Valence::Lower, Valence::Upper, Valence::Lower, Valence::Lower});
  if (order < 1) return cj;

  const auto& dg = mj.dg;
  const auto& ddg = mj.ddg;
  const auto& dddg = mj.dddg;
  DenseTensor gl(n, 3), dgl(n, 4), ddgl(n, 5), dginv(n, 3), ddginv(n, 4);
  for (int d = 0; d < n; ++d)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        gl(d, a, b) = 0.5 * (dg(a, b, d) + dg(b, a, d) - dg(d, a, b));
        if (order < 2) continue;
        for (int e = 0; e < n; ++e) {
          dgl(e, d, a, b) = 0.5 * (ddg(e, a, b, d) + ddg(e, b, a, d) - ddg(e, d, a, b));
          if (order < 3) continue;
          for (int f = 0; f < n; ++f)
            ddgl(f, e, d, a, b) = 0.5 * (dddg(f, e, a, b, d) + dddg(f, e, b, a, d) - dddg(f, e, d, a, b));
        }
      }
  for (int e = 0; e < n; ++e)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double s = 0.0;
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q) s -= ginv(a, p) * dg(e, p, q) * ginv(q, b);
        dginv(e, a, b) = s;
      }
  if (order >= 3)
    for (int f = 0; f < n; ++f)
      for (int e = 0; e < n; ++e)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            double s = 0.0;
            for (int p = 0; p < n; ++p)
              for (int q = 0; q < n; ++q)
                s -= dginv(f, a, p) * dg(e, p, q) * ginv(q, b) + ginv(a, p) * ddg(f, e, p, q) * ginv(q, b) +
                     ginv(a, p) * dg(e, p, q) * dginv(f, q, b);
            ddginv(f, e, a, b) = s;
          }

  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += ginv(c, d) * gl(d, a, b);
        cj.gamma(c, a, b) = s;
        if (order < 2) continue;
        for (int e = 0; e < n; ++e) {
          double t = 0.0;
          for (int d = 0; d < n; ++d) t += dginv(e, c, d) * gl(d, a, b) + ginv(c, d) * dgl(e, d, a, b);
          cj.dgamma(e, c, a, b) = t;
          if (order < 3) continue;
          for (int f = 0; f < n; ++f) {
            double u = 0.0;
            for (int d = 0; d < n; ++d)
              u += ddginv(f, e, c, d) * gl(d, a, b) + dginv(e, c, d) * dgl(f, d, a, b) +
                   dginv(f, c, d) * dgl(e, d, a, b) + ginv(c, d) * ddgl(f, e, d, a, b);
            cj.ddgamma(f, e, c, a, b) = u;
          }
        }
      }
  return cj;
}

// Curvature of any torsion-free connection from its Christoffel jets.
inline void fill_affine(GeometryAt& G, const ConnectionJets& cj) {
  const int n = G.n;
  const auto U = Valence::Upper, L = Valence::Lower;
  G.gamma = cj.gamma;
  G.dgamma = cj.dgamma;
  if (G.order < 2) return;
  const auto& Ga = cj.gamma;
  const auto& dG = cj.dgamma;

  G.riemann = DenseTensor(n, {L, L, U, L});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s = dG(a, c, b, d) - dG(b, c, a, d);
          for (int e = 0; e < n; ++e) s += Ga(c, a, e) * Ga(e, b, d) - Ga(c, b, e) * Ga(e, a, d);
          G.riemann(a, b, c, d) = s;
        }
  G.ricci = contract(G.riemann, 0, 2);

  // Ρ_(ab) = Ric_(ab)/(n-1), Ρ_[ab] = Ric_[ab]/(n+1), β = -2Ρ_[ab].
  G.schouten_proj = DenseTensor(n, 2, L);
  G.beta = DenseTensor(n, 2, L);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double sym = 0.5 * (G.ricci(a, b) + G.ricci(b, a)), skew = 0.5 * (G.ricci(a, b) - G.ricci(b, a));
      G.schouten_proj(a, b) = (n > 1 ? sym / (n - 1) : 0.0) + skew / (n + 1);
      G.beta(a, b) = -2.0 * skew / (n + 1);
    }
  G.weyl_proj = G.riemann;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d)
          G.weyl_proj(a, b, c, d) -= (c == a ? G.schouten_proj(b, d) : 0.0) - (c == b ? G.schouten_proj(a, d) : 0.0) +
                                     (c == d ? G.beta(a, b) : 0.0);
  if (G.order < 3) return;

  const auto& ddG = cj.ddgamma;
  DenseTensor dR(n, {L, L, L, U, L});
  G.nabla_riemann = DenseTensor(n, {L, L, L, U, L});
  for (int e = 0; e < n; ++e)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          for (int d = 0; d < n; ++d) {
            double s = ddG(e, a, c, b, d) - ddG(e, b, c, a, d);
            for (int p = 0; p < n; ++p)
              s += dG(e, c, a, p) * Ga(p, b, d) + Ga(c, a, p) * dG(e, p, b, d) - dG(e, c, b, p) * Ga(p, a, d) -
                   Ga(c, b, p) * dG(e, p, a, d);
            dR(e, a, b, c, d) = s;
          }
  const auto& R = G.riemann;
  for (int e = 0; e < n; ++e)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          for (int d = 0; d < n; ++d) {
            double s = dR(e, a, b, c, d);
            for (int p = 0; p < n; ++p)
              s += -Ga(p, e, a) * R(p, b, c, d) - Ga(p, e, b) * R(a, p, c, d) + Ga(c, e, p) * R(a, b, p, d) -
                   Ga(p, e, d) * R(a, b, c, p);
            G.nabla_riemann(e, a, b, c, d) = s;
          }
  G.nabla_ricci = contract(G.nabla_riemann, 1, 3);
  G.nabla_schouten_proj = DenseTensor(n, 3, L);
  DenseTensor nabla_beta(n, 3, L);
  for (int e = 0; e < n; ++e)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double sym = 0.5 * (G.nabla_ricci(e, a, b) + G.nabla_ricci(e, b, a));
        const double skew = 0.5 * (G.nabla_ricci(e, a, b) - G.nabla_ricci(e, b, a));
        G.nabla_schouten_proj(e, a, b) = (n > 1 ? sym / (n - 1) : 0.0) + skew / (n + 1);
        nabla_beta(e, a, b) = -2.0 * skew / (n + 1);
      }
  G.cotton_proj = DenseTensor(n, 3, L);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        G.cotton_proj(a, b, c) = G.nabla_schouten_proj(a, b, c) - G.nabla_schouten_proj(b, a, c);
  G.nabla_weyl_proj = G.nabla_riemann;
  const auto& nP = G.nabla_schouten_proj;
  for (int e = 0; e < n; ++e)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          for (int d = 0; d < n; ++d)
            G.nabla_weyl_proj(e, a, b, c, d) -= (c == a ? nP(e, b, d) : 0.0) - (c == b ? nP(e, a, d) : 0.0) +
                                                (c == d ? nabla_beta(e, a, b) : 0.0);
}

inline void fill_conformal(GeometryAt& G) {
  const int n = G.n;
  const auto U = Valence::Upper, L = Valence::Lower;
  if (G.order < 2) return;
  G.scal = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) G.scal += G.g_inv(a, b) * G.ricci(a, b);
  if (n <= 2) return;
  G.J_conf = G.scal / (2.0 * (n - 1));
  G.P_conf = DenseTensor(n, 2, L);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) G.P_conf(a, b) = (G.ricci(a, b) - G.J_conf * G.g(a, b)) / (n - 2);

  auto mixed = [&](const DenseTensor& P, auto get) {
    // Ρ_a^c from a lower pair accessor.
    DenseTensor M(n, {L, U});
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int e = 0; e < n; ++e) s += G.g_inv(c, e) * get(P, a, e);
        M(a, c) = s;
      }
    return M;
  };
  const DenseTensor Pm = mixed(G.P_conf, [](const DenseTensor& P, int a, int e) { return P(a, e); });
  G.W_conf = G.riemann;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d)
          G.W_conf(a, b, c, d) -= (c == a ? G.P_conf(b, d) : 0.0) - (c == b ? G.P_conf(a, d) : 0.0) -
                                  G.g(d, a) * Pm(b, c) + G.g(d, b) * Pm(a, c);
  if (G.order < 3) return;

  G.nabla_J = DenseTensor(n, 1, L);
  for (int e = 0; e < n; ++e) {
    double s = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) s += G.g_inv(a, b) * G.nabla_ricci(e, a, b);
    G.nabla_J(e) = s / (2.0 * (n - 1));
  }
  G.nabla_P_conf = DenseTensor(n, 3, L);
  for (int e = 0; e < n; ++e)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        G.nabla_P_conf(e, a, b) = (G.nabla_ricci(e, a, b) - G.nabla_J(e) * G.g(a, b)) / (n - 2);
  G.Y_conf = DenseTensor(n, 3, L);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) G.Y_conf(a, b, c) = G.nabla_P_conf(b, c, a) - G.nabla_P_conf(c, b, a);
  G.nabla_W_conf = G.nabla_riemann;
  for (int e = 0; e < n; ++e) {
    const DenseTensor nPm = mixed(G.nabla_P_conf, [e](const DenseTensor& P, int a, int f) { return P(e, a, f); });
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          for (int d = 0; d < n; ++d)
            G.nabla_W_conf(e, a, b, c, d) -= (c == a ? G.nabla_P_conf(e, b, d) : 0.0) -
                                             (c == b ? G.nabla_P_conf(e, a, d) : 0.0) - G.g(d, a) * nPm(b, c) +
                                             G.g(d, b) * nPm(a, c);
  }
}

}  // namespace detail

// order 1: Christoffels; 2: curvature and Schouten tensors; 3: their derivatives and Cotton.
inline GeometryAt curvature_at(const MetricSpec& m, std::span<const double> x, int order = 3) {
  GeometryAt G;
  G.point.assign(x.begin(), x.end());
  G.n = m.dim();
  G.order = order;
  G.metric = true;
  const MetricJets mj = m.jets(x, order);
  G.g = mj.g;
  const ConnectionJets cj = detail::connection_from_metric(mj, G.g_inv);
  detail::fill_affine(G, cj);
  detail::fill_conformal(G);
  return G;
}

inline DenseTensor christoffel_at(const MetricSpec& m, std::span<const double> x) {
  return curvature_at(m, x, 1).gamma;
}

// Levi-Civita connection of a metric, optionally changed projectively by
// Υ = dφ: Γ̂^c_ab = Γ^c_ab + δ^c_a Υ_b + δ^c_b Υ_a.
class AffineSpec {
 public:
  explicit AffineSpec(MetricSpec m) : metric_(std::move(m)) {}
  AffineSpec(MetricSpec m, Expression phi) : metric_(std::move(m)), phi_(std::move(phi)) {}

  const MetricSpec& metric() const { return metric_; }
  int dim() const { return metric_.dim(); }
  const std::optional<Expression>& projective_phi() const { return phi_; }

  GeometryAt at(std::span<const double> x, int order = 3) const {
    if (!phi_) return curvature_at(metric_, x, order);
    const int n = metric_.dim();
    GeometryAt G;
    G.point.assign(x.begin(), x.end());
    G.n = n;
    G.order = order;
    G.metric = false;
    const MetricJets mj = metric_.jets(x, order);
    G.g = mj.g;
    ConnectionJets cj = detail::connection_from_metric(mj, G.g_inv);
    const Expression phi = *phi_;
    Partials p([&phi](std::span<const Jet3> y, std::span<Jet3> out) { out[0] = phi.eval<Jet3>(y); }, n, 1, x,
               std::min(3, order + 1));
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const double da = c == a, db = c == b;
          cj.gamma(c, a, b) += da * p.d1(b, 0) + db * p.d1(a, 0);
          for (int e = 0; e < n && order >= 2; ++e) {
            cj.dgamma(e, c, a, b) += da * p.d2(e, b, 0) + db * p.d2(e, a, 0);
            for (int f = 0; f < n && order >= 3; ++f)
              cj.ddgamma(f, e, c, a, b) += da * p.d3(f, e, b, 0) + db * p.d3(f, e, a, 0);
          }
        }
    detail::fill_affine(G, cj);
    return G;
  }

 private:
  MetricSpec metric_;
  std::optional<Expression> phi_;
};

}  // namespace tractor
