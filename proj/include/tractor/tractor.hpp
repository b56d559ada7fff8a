#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tractor/curvature.hpp"
#include "tractor/state.hpp"

namespace tractor {

enum class TractorKind { Projective, Conformal };

// Per-direction coefficients: ∇_a V = ∂_a V + C[a] V on upper components.
using ConnectionMatrices = std::vector<Eigen::MatrixXd>;
using ConnectionProvider = std::function<ConnectionMatrices(std::span<const double>)>;

// Conformal components (σ, μ^a, ρ): slot 0 pairs with Y, slots 1..n with Z_a, slot n+1 with X.
namespace conf {

inline int Y(int) { return 0; }
inline int Z(int, int a) { return 1 + a; }
inline int X(int n) { return n + 1; }

inline DenseTensor unit(int n, int slot, Valence v = Valence::Upper) {
  DenseTensor e(n + 2, 1, v);
  e(slot) = 1.0;
  return e;
}
inline DenseTensor X_up(int n) { return unit(n, X(n)); }
inline DenseTensor Y_up(int n) { return unit(n, Y(n)); }
inline DenseTensor Z_up(int n, int a) { return unit(n, Z(n, a)); }
// Lowered with h: X_A = ε^0, Y_A = ε^{n+1}, Z_A^a = ε^{1+a}.
inline DenseTensor X_low(int n) { return unit(n, 0, Valence::Lower); }
inline DenseTensor Y_low(int n) { return unit(n, n + 1, Valence::Lower); }
inline DenseTensor Zup_low(int n, int a) { return unit(n, 1 + a, Valence::Lower); }

inline DenseTensor metric(const DenseTensor& g) {
  const int n = g.dim();
  DenseTensor h(n + 2, 2, Valence::Lower);
  h(0, n + 1) = h(n + 1, 0) = 1.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) h(1 + a, 1 + b) = g(a, b);
  return h;
}

inline DenseTensor metric_inv(const DenseTensor& g_inv) {
  DenseTensor h = metric(g_inv);
  h.set_valence({Valence::Upper, Valence::Upper});
  return h;
}

// Tractor built from components in a splitting.
inline DenseTensor vector(double sigma, const Vec& mu, double rho) {
  const int n = static_cast<int>(mu.size());
  DenseTensor v(n + 2, 1, Valence::Upper);
  v(0) = sigma;
  for (int a = 0; a < n; ++a) v(1 + a) = mu[static_cast<std::size_t>(a)];
  v(n + 1) = rho;
  return v;
}

inline ConnectionMatrices connection(const GeometryAt& G) {
  const int n = G.n, N = n + 2;
  const DenseTensor P = G.schouten_conf();
  ConnectionMatrices C(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(N, N));
  for (int a = 0; a < n; ++a) {
    auto& M = C[static_cast<std::size_t>(a)];
    for (int b = 0; b < n; ++b) {
      double Pab = 0.0;
      for (int c = 0; c < n; ++c) Pab += G.g_inv(b, c) * P(a, c);
      M(1 + b, 0) = Pab;
      M(1 + b, N - 1) = a == b ? 1.0 : 0.0;
      M(0, 1 + b) = -G.g(a, b);
      M(N - 1, 1 + b) = -P(a, b);
      for (int c = 0; c < n; ++c) M(1 + b, 1 + c) = G.gamma(b, a, c);
    }
  }
  return C;
}

// v_ĝ = T v_g for ĝ = e^{2φ} g, with Υ = dφ (lower components).
inline Eigen::MatrixXd splitting_change(const GeometryAt& G, double phi, const Vec& Upsilon) {
  const int n = G.n, N = n + 2;
  const Vec Up = raise(G.g_inv, Upsilon);
  double U2 = 0.0;
  for (int a = 0; a < n; ++a) U2 += Upsilon[static_cast<std::size_t>(a)] * Up[static_cast<std::size_t>(a)];
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(N, N);
  for (int a = 0; a < n; ++a) {
    T(1 + a, 0) = Up[static_cast<std::size_t>(a)];
    T(N - 1, 1 + a) = -Upsilon[static_cast<std::size_t>(a)];
  }
  T(N - 1, 0) = -0.5 * U2;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(N, std::exp(-phi));
  w(0) = std::exp(phi);
  return w.asDiagonal() * T;
}

}  // namespace conf

// Projective components (ν^b, ρ): slots 0..n-1 pair with W_b, slot n with X.
namespace proj {

inline int W(int, int b) { return b; }
inline int X(int n) { return n; }

inline DenseTensor unit(int n, int slot, Valence v = Valence::Upper) {
  DenseTensor e(n + 1, 1, v);
  e(slot) = 1.0;
  return e;
}
inline DenseTensor X_up(int n) { return unit(n, n); }
inline DenseTensor W_up(int n, int b) { return unit(n, b); }
inline DenseTensor Y_low(int n) { return unit(n, n, Valence::Lower); }
inline DenseTensor Z_low(int n, int b) { return unit(n, b, Valence::Lower); }

inline ConnectionMatrices connection(const GeometryAt& G) {
  const int n = G.n, N = n + 1;
  if (G.order < 2) throw precondition("projective tractor connection needs order-2 geometry");
  ConnectionMatrices C(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(N, N));
  for (int a = 0; a < n; ++a) {
    auto& M = C[static_cast<std::size_t>(a)];
    for (int b = 0; b < n; ++b) {
      M(b, n) = a == b ? 1.0 : 0.0;
      M(n, b) = -G.schouten_proj(a, b);
      for (int c = 0; c < n; ++c) M(b, c) = G.gamma(b, a, c);
    }
  }
  return C;
}

// v_∇̂ = T v_∇ for ∇̂ = ∇ + Υ⊗δ + δ⊗Υ, Υ = dφ; densities rescale as e^{wφ}.
inline Eigen::MatrixXd splitting_change(int n, double phi, const Vec& Upsilon) {
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(n + 1, n + 1);
  for (int b = 0; b < n; ++b) T(n, b) = -Upsilon[static_cast<std::size_t>(b)];
  return std::exp(-phi) * T;
}

}  // namespace proj

inline ConnectionProvider conformal_connection(const MetricSpec& m) {
  return [m](std::span<const double> x) { return conf::connection(curvature_at(m, x, 2)); };
}

inline ConnectionProvider projective_connection(const AffineSpec& aff) {
  return [aff](std::span<const double> x) { return proj::connection(aff.at(x, 2)); };
}

inline ConnectionMatrices conf_tractor_connection_matrix(const MetricSpec& m, std::span<const double> x) {
  return conf::connection(curvature_at(m, x, 2));
}

inline ConnectionMatrices proj_tractor_connection_matrix(const AffineSpec& aff, std::span<const double> x) {
  return proj::connection(aff.at(x, 2));
}

inline Eigen::MatrixXd along(const ConnectionMatrices& C, const Vec& u) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(C[0].rows(), C[0].cols());
  for (std::size_t a = 0; a < C.size(); ++a) M += u[a] * C[a];
  return M;
}

// Connection term of ∇_u on a tractor tensor: upper slots act by M, lower by -M^T.
inline DenseTensor connection_action(const Eigen::MatrixXd& M, const DenseTensor& T) {
  const int N = T.dim();
  if (M.rows() != N) throw bad_input("connection_action: dimension mismatch");
  DenseTensor out(N, T.valence());
  std::vector<int> idx(static_cast<std::size_t>(T.rank()));
  for (std::size_t f = 0; f < T.size(); ++f) {
    T.decode(f, idx);
    double acc = 0.0;
    for (int s = 0; s < T.rank(); ++s) {
      auto& slot = idx[static_cast<std::size_t>(s)];
      const int i = slot;
      for (int p = 0; p < N; ++p) {
        const double c = T.valence(s) == Valence::Upper ? M(i, p) : -M(p, i);
        if (c == 0.0) continue;
        slot = p;
        acc += c * T.at(idx);
      }
      slot = i;
    }
    out[f] = acc;
  }
  return out;
}

namespace detail {

// Cubic Hermite position and velocity between two states.
inline void hermite(const CurveState& s0, const CurveState& s1, double theta, Vec& x, Vec& u) {
  const double h = s1.t - s0.t;
  const double t2 = theta * theta, t3 = t2 * theta;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + theta, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  const double d00 = 6 * t2 - 6 * theta, d10 = 3 * t2 - 4 * theta + 1, d01 = -6 * t2 + 6 * theta, d11 = 3 * t2 - 2 * theta;
  x.resize(s0.x.size());
  u.resize(s0.x.size());
  for (std::size_t i = 0; i < s0.x.size(); ++i) {
    x[i] = h00 * s0.x[i] + h10 * h * s0.u[i] + h01 * s1.x[i] + h11 * h * s1.u[i];
    u[i] = (d00 * s0.x[i] + d01 * s1.x[i]) / h + d10 * s0.u[i] + d11 * s1.u[i];
  }
}

}  // namespace detail

// RK4 for ∇_u V = 0 along sampled states; returns V at every sample.
inline std::vector<DenseTensor> tractor_transport(const ConnectionProvider& conn, const CurveSamples& curve,
                                                  const DenseTensor& v0) {
  if (v0.rank() < 1 || v0.rank() > 4) throw bad_input("transport supports tractor ranks 1..4");
  if (curve.states.empty()) throw bad_input("transport: empty curve");
  std::vector<DenseTensor> out{v0};
  out.reserve(curve.states.size());
  auto rhs = [&](const ConnectionMatrices& C, const Vec& u, const DenseTensor& V) {
    return connection_action(along(C, u), V) * -1.0;
  };
  ConnectionMatrices C0 = conn(curve.states[0].x);
  if (C0[0].rows() != v0.dim()) throw bad_input("transport: tractor dimension does not match connection");
  Vec xm, um;
  for (std::size_t i = 0; i + 1 < curve.states.size(); ++i) {
    const CurveState& s0 = curve.states[i];
    const CurveState& s1 = curve.states[i + 1];
    const double h = s1.t - s0.t;
    detail::hermite(s0, s1, 0.5, xm, um);
    const ConnectionMatrices Cm = conn(xm);
    const ConnectionMatrices C1 = conn(s1.x);
    const DenseTensor& V = out.back();
    DenseTensor k1 = rhs(C0, s0.u, V);
    DenseTensor k2 = rhs(Cm, um, V + k1 * (0.5 * h));
    DenseTensor k3 = rhs(Cm, um, V + k2 * (0.5 * h));
    DenseTensor k4 = rhs(C1, s1.u, V + k3 * h);
    out.push_back(V + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0));
    C0 = C1;
  }
  return out;
}

// Ω_ab^C_D with slots (a, b, C, D); dim of the result is the tractor dimension,
// the first two slots only use indices below n.
inline DenseTensor tractor_curvature_at(const GeometryAt& G, TractorKind kind) {
  const int n = G.n;
  const auto U = Valence::Upper, L = Valence::Lower;
  if (kind == TractorKind::Projective) {
    if (G.order < 3) throw precondition("tractor curvature needs order-3 geometry");
    const int N = n + 1;
    DenseTensor Om(N, {L, L, U, L});
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        for (int c = 0; c < n; ++c) {
          for (int d = 0; d < n; ++d) Om(a, b, c, d) = G.weyl_proj(a, b, c, d);
          Om(a, b, n, c) = -G.cotton_proj(a, b, c);
        }
      }
    return Om;
  }
  const int N = n + 2;
  const DenseTensor& W = G.weyl_conf();
  const DenseTensor& Y = G.cotton_conf();
  DenseTensor low(N, {L, L, L, L});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        for (int d = 0; d < n; ++d) {
          double s = 0.0;
          for (int e = 0; e < n; ++e) s += G.g(c, e) * W(a, b, e, d);
          low(a, b, 1 + c, 1 + d) = s;
        }
        low(a, b, 0, 1 + c) -= Y(c, a, b);
        low(a, b, 1 + c, 0) += Y(c, a, b);
      }
  const DenseTensor hinv = conf::metric_inv(G.g_inv);
  DenseTensor Om(N, {L, L, U, L});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int C = 0; C < N; ++C)
        for (int D = 0; D < N; ++D) {
          double s = 0.0;
          for (int E = 0; E < N; ++E) s += hinv(C, E) * low(a, b, E, D);
          Om(a, b, C, D) = s;
        }
  return Om;
}

inline DenseTensor tractor_curvature_at(const MetricSpec& m, std::span<const double> x, TractorKind kind) {
  return tractor_curvature_at(curvature_at(m, x, 3), kind);
}

// Projective Thomas operator on a weight-w density: w Y f + Z^a ∇_a f (lower components).
inline DenseTensor thomas_D(double f, const Vec& grad, double w) {
  const int n = static_cast<int>(grad.size());
  DenseTensor D(n + 1, 1, Valence::Lower);
  for (int b = 0; b < n; ++b) D(b) = grad[static_cast<std::size_t>(b)];
  D(n) = w * f;
  return D;
}

}  // namespace tractor
