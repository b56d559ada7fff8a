#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "samples.hpp"
#include "support.hpp"
#include "tractor/tractor.hpp"

using namespace tractor;
using Catch::Matchers::WithinAbs;

namespace {

Eigen::MatrixXd to_eigen(const DenseTensor& h) { return to_matrix(h); }

CurveSamples straight_line(const Vec& x0, const Vec& u, double h, int steps) {
  CurveSamples c;
  c.h = h;
  for (int i = 0; i <= steps; ++i) {
    CurveState s;
    s.t = i * h;
    s.x = axpy(s.t, u, x0);
    s.u = u;
    s.a = Vec(u.size(), 0.0);
    c.states.push_back(s);
  }
  return c;
}

// An arbitrary smooth non-geodesic curve, given analytically.
CurveSamples wiggle(int n, double h, int steps) {
  CurveSamples c;
  c.h = h;
  for (int i = 0; i <= steps; ++i) {
    const double t = i * h;
    CurveState s;
    s.t = t;
    s.x = Vec(static_cast<std::size_t>(n));
    s.u = Vec(static_cast<std::size_t>(n));
    s.a = Vec(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k < n; ++k) {
      s.x[static_cast<std::size_t>(k)] = 0.3 * std::sin((k + 1) * t) + 0.1 * k;
      s.u[static_cast<std::size_t>(k)] = 0.3 * (k + 1) * std::cos((k + 1) * t);
    }
    c.states.push_back(s);
  }
  return c;
}

}  // namespace

TEST_CASE("conformal tractor connection preserves h") {
  for (const auto& s : testing::catalog_samples()) {
    const MetricSpec& m = s.metric;
    const int n = m.dim(), N = n + 2;
    auto x = testing::sample_point(s);
    GeometryAt G = curvature_at(m, x, 2);
    ConnectionMatrices C = conf::connection(G);
    const double hstep = 1e-5;
    for (int a = 0; a < n; ++a) {
      auto xp = x, xm = x;
      xp[static_cast<std::size_t>(a)] += hstep;
      xm[static_cast<std::size_t>(a)] -= hstep;
      Eigen::MatrixXd dh = (to_eigen(conf::metric(m.metric_at(xp))) - to_eigen(conf::metric(m.metric_at(xm)))) / (2 * hstep);
      Eigen::MatrixXd h = to_eigen(conf::metric(G.g));
      const auto& Ca = C[static_cast<std::size_t>(a)];
      Eigen::MatrixXd nabla_h = dh - Ca.transpose() * h - h * Ca;
      INFO(m.name());
      CHECK(nabla_h.cwiseAbs().maxCoeff() / std::max(1.0, h.cwiseAbs().maxCoeff()) < 1e-7);
    }
    (void)N;
  }
}

TEST_CASE("conformal frame identities") {
  const auto samples = testing::catalog_samples();
  const MetricSpec& m = samples[6].metric;
  const int n = 3;
  auto x = testing::random_vec(3, -0.5, 0.5);
  GeometryAt G = curvature_at(m, x, 2);
  ConnectionMatrices C = conf::connection(G);
  const DenseTensor& P = G.schouten_conf();
  for (int a = 0; a < n; ++a) {
    const auto& Ca = C[static_cast<std::size_t>(a)];
    Eigen::VectorXd X = Eigen::VectorXd::Unit(n + 2, conf::X(n)), Y = Eigen::VectorXd::Unit(n + 2, conf::Y(n));
    // ∇_a X = Z_a
    CHECK((Ca * X - Eigen::VectorXd::Unit(n + 2, conf::Z(n, a))).norm() < 1e-14);
    // ∇_a Y = P_a^b Z_b
    Eigen::VectorXd expect = Eigen::VectorXd::Zero(n + 2);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) expect(1 + b) += G.g_inv(b, c) * P(a, c);
    CHECK((Ca * Y - expect).norm() < 1e-12);
    // ∇_a Z_b = -P_ab X - g_ab Y
    for (int b = 0; b < n; ++b) {
      Eigen::VectorXd nz = Ca * Eigen::VectorXd::Unit(n + 2, conf::Z(n, b));
      for (int c = 0; c < n; ++c) nz(1 + c) -= G.gamma(c, a, b);
      Eigen::VectorXd rhs = -P(a, b) * X - G.g(a, b) * Y;
      CHECK((nz - rhs).norm() < 1e-12);
    }
  }
}

TEST_CASE("projective frame identities") {
  const auto samples = testing::catalog_samples();
  const MetricSpec& m = samples[6].metric;
  const int n = 3;
  auto x = testing::random_vec(3, -0.5, 0.5);
  GeometryAt G = curvature_at(m, x, 2);
  ConnectionMatrices C = proj::connection(G);
  for (int a = 0; a < n; ++a) {
    const auto& Ca = C[static_cast<std::size_t>(a)];
    CHECK((Ca * Eigen::VectorXd::Unit(n + 1, n) - Eigen::VectorXd::Unit(n + 1, a)).norm() < 1e-14);
    for (int b = 0; b < n; ++b) {
      Eigen::VectorXd nw = Ca * Eigen::VectorXd::Unit(n + 1, b);
      for (int c = 0; c < n; ++c) nw(c) -= G.gamma(c, a, b);
      CHECK((nw + G.schouten_proj(a, b) * Eigen::VectorXd::Unit(n + 1, n)).norm() < 1e-12);
    }
    // dual frame: ∇_a Y = P_ab Z^b, ∇_a Z^b = -δ^b_a Y
    Eigen::RowVectorXd Yl = Eigen::RowVectorXd::Unit(n + 1, n);
    Eigen::RowVectorXd nY = -Yl * Ca;
    for (int b = 0; b < n; ++b) CHECK_THAT(nY(b), WithinAbs(G.schouten_proj(a, b), 1e-12));
    CHECK_THAT(nY(n), WithinAbs(0.0, 1e-14));
  }
}

TEST_CASE("tractor curvature equals connection commutator") {
  for (const auto& s : testing::catalog_samples()) {
    const MetricSpec& m = s.metric;
    const int n = m.dim();
    auto x = testing::sample_point(s);
    GeometryAt G = curvature_at(m, x, 3);
    for (TractorKind kind : {TractorKind::Conformal, TractorKind::Projective}) {
      auto conn = [&](const Vec& y) {
        GeometryAt H = curvature_at(m, y, 2);
        return kind == TractorKind::Conformal ? conf::connection(H) : proj::connection(H);
      };
      ConnectionMatrices C = conn(x);
      const double h = 1e-4;
      std::vector<ConnectionMatrices> dC;
      for (int a = 0; a < n; ++a) {
        auto xp = x, xm = x;
        xp[static_cast<std::size_t>(a)] += h;
        xm[static_cast<std::size_t>(a)] -= h;
        ConnectionMatrices cp = conn(xp), cm = conn(xm), d(cp.size());
        for (std::size_t b = 0; b < cp.size(); ++b) d[b] = (cp[b] - cm[b]) / (2 * h);
        dC.push_back(d);
      }
      DenseTensor Om = tractor_curvature_at(G, kind);
      double worst = 0, scale = 1;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
          Eigen::MatrixXd ref = dC[ua][ub] - dC[ub][ua] + C[ua] * C[ub] - C[ub] * C[ua];
          for (int i = 0; i < ref.rows(); ++i)
            for (int j = 0; j < ref.cols(); ++j) {
              worst = std::max(worst, std::abs(Om(a, b, i, j) - ref(i, j)));
              scale = std::max(scale, std::abs(ref(i, j)));
            }
        }
      INFO(m.name() << (kind == TractorKind::Conformal ? " conformal" : " projective"));
      CHECK(worst / scale < 1e-6);
    }
  }
}

TEST_CASE("flat transport matches closed form") {
  const int n = 3;
  const MetricSpec m = euclidean(n);
  CurveSamples line = straight_line({0.2, -0.1, 0.4}, {0.6, 0.3, -0.5}, 1e-2, 200);
  const double s0 = 0.7, r0 = -0.4;
  const Vec mu0{0.1, 0.5, -0.3};
  auto exact = [&](const Vec& x) {
    Vec mu(3);
    double sig = s0, r2 = 0;
    for (int i = 0; i < 3; ++i) {
      sig += mu0[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
      r2 += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
      mu[static_cast<std::size_t>(i)] = mu0[static_cast<std::size_t>(i)] - r0 * x[static_cast<std::size_t>(i)];
    }
    return conf::vector(sig - 0.5 * r0 * r2, mu, r0);
  };
  auto V = tractor_transport(conformal_connection(m), line, exact(line.states[0].x));
  double worst = 0;
  for (std::size_t i = 0; i < V.size(); ++i) worst = std::max(worst, max_abs_diff(V[i], exact(line.states[i].x)));
  CHECK(worst < 1e-12);

  // Leibniz rule on rank 2 equals the outer product of rank-1 transports.
  DenseTensor A = exact(line.states[0].x), B = conf::vector(0.3, {1, 0, 2}, 0.5);
  CurveSamples w = wiggle(3, 1e-3, 2000);
  auto conn = conformal_connection(sphere_stereographic(3));
  auto VA = tractor_transport(conn, w, A), VB = tractor_transport(conn, w, B);
  auto VAB = tractor_transport(conn, w, outer(A, B));
  CHECK(max_abs_diff(VAB.back(), outer(VA.back(), VB.back())) < 1e-10);
  // h-inner products are preserved along the way.
  for (std::size_t i : {std::size_t{0}, std::size_t{1000}, std::size_t{2000}}) {
    DenseTensor h = conf::metric(sphere_stereographic(3).metric_at(w.states[i].x));
    CHECK_THAT(pair(move_slot(VA[i], 0, h), VB[i]), WithinAbs(pair(move_slot(A, 0, conf::metric(sphere_stereographic(3).metric_at(w.states[0].x))), B), 1e-9));
  }
  CHECK_THROWS_AS(tractor_transport(conn, w, outer(outer(A, B), outer(A, outer(A, B)))), Error);
}

TEST_CASE("conformal splitting change commutes with transport") {
  const auto samples = testing::catalog_samples();
  const MetricSpec& m = samples[6].metric;
  const Expression phi = parse_expression("0.4*sin(x1+x2) - 0.3*x3^2 + 0.2*cos(x2)*x1");
  const MetricSpec mh = conformal_rescale(m, phi);
  CurveSamples w = wiggle(3, 1e-3, 1500);
  auto T = [&](const Vec& x) {
    Partials p([&](std::span<const Jet3> z, std::span<Jet3> o) { o[0] = phi.eval<Jet3>(z); }, 3, 1, x, 1);
    Vec U{p.d1(0, 0), p.d1(1, 0), p.d1(2, 0)};
    return conf::splitting_change(curvature_at(m, x, 1), p.value(0), U);
  };
  DenseTensor v0 = conf::vector(0.3, {0.2, -0.5, 0.7}, -0.4);
  auto Vg = tractor_transport(conformal_connection(m), w, v0);
  Eigen::VectorXd v0h = T(w.states[0].x) * Eigen::Map<const Eigen::VectorXd>(v0.data().data(), 5);
  DenseTensor v0hat(5, 1, Valence::Upper);
  for (int i = 0; i < 5; ++i) v0hat(i) = v0h(i);
  auto Vh = tractor_transport(conformal_connection(mh), w, v0hat);
  double worst = 0;
  for (std::size_t i = 0; i < w.states.size(); i += 100) {
    Eigen::VectorXd mapped = T(w.states[i].x) * Eigen::Map<const Eigen::VectorXd>(Vg[i].data().data(), 5);
    for (int k = 0; k < 5; ++k) worst = std::max(worst, std::abs(mapped(k) - Vh[i](k)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("projective splitting change commutes with transport") {
  const MetricSpec m = sphere_stereographic(3);
  const Expression phi = parse_expression("0.4*sin(x1+x2) - 0.3*x3^2");
  AffineSpec base(m), changed(m, phi);
  CurveSamples w = wiggle(3, 1e-3, 1500);
  auto T = [&](const Vec& x) {
    Partials p([&](std::span<const Jet3> z, std::span<Jet3> o) { o[0] = phi.eval<Jet3>(z); }, 3, 1, x, 1);
    return proj::splitting_change(3, p.value(0), {p.d1(0, 0), p.d1(1, 0), p.d1(2, 0)});
  };
  DenseTensor v0(4, 1, Valence::Upper);
  v0(0) = 0.3; v0(1) = -0.2; v0(2) = 0.5; v0(3) = 0.9;
  auto Vg = tractor_transport(projective_connection(base), w, v0);
  Eigen::VectorXd h0 = T(w.states[0].x) * Eigen::Map<const Eigen::VectorXd>(v0.data().data(), 4);
  DenseTensor v0hat(4, 1, Valence::Upper);
  for (int i = 0; i < 4; ++i) v0hat(i) = h0(i);
  auto Vh = tractor_transport(projective_connection(changed), w, v0hat);
  double worst = 0;
  for (std::size_t i = 0; i < w.states.size(); i += 100) {
    Eigen::VectorXd mapped = T(w.states[i].x) * Eigen::Map<const Eigen::VectorXd>(Vg[i].data().data(), 4);
    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(mapped(k) - Vh[i](k)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("Thomas operator") {
  DenseTensor D = thomas_D(2.0, {1.0, -1.0}, 3.0);
  CHECK(D(2) == 6.0);
  CHECK(D(0) == 1.0);
  CHECK(D(1) == -1.0);
}
