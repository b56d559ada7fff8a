#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracle.hpp"
#include "support.hpp"
#include "tractor/bgg.hpp"
#include "tractor/curves.hpp"

using namespace tractor;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using testing::random_vec;

namespace {

const std::vector<Valence> kL1{Valence::Lower};
const std::vector<Valence> kL2{Valence::Lower, Valence::Lower};
const std::vector<Valence> kU2{Valence::Upper, Valence::Upper};

// Field on R^n given componentwise by a C++ lambda, for the FD oracles.
using PointFn = std::function<DenseTensor(std::span<const double>)>;

PointFn value_of(const FieldJet& f, const MetricSpec& m) {
  return [f, m](std::span<const double> y) { return f.value(curvature_at(m, y, 1)); };
}

// ∂ by central differences, then the Christoffel terms by hand.
DenseTensor nabla_fd(const MetricSpec& m, const PointFn& T, const Vec& x, double h = 1e-4) {
  const DenseTensor t = T(x);
  const int n = m.dim(), r = t.rank();
  const DenseTensor G = christoffel_at(m, x);
  std::vector<Valence> val{Valence::Lower};
  val.insert(val.end(), t.valence().begin(), t.valence().end());
  DenseTensor out(n, val);
  std::vector<int> idx(static_cast<std::size_t>(r) + 1), j(static_cast<std::size_t>(r));
  for (std::size_t f = 0; f < out.size(); ++f) {
    out.decode(f, idx);
    const int a = idx[0];
    Vec xp = x, xm = x;
    xp[static_cast<std::size_t>(a)] += h;
    xm[static_cast<std::size_t>(a)] -= h;
    for (int s = 0; s < r; ++s) j[static_cast<std::size_t>(s)] = idx[static_cast<std::size_t>(s) + 1];
    double v = (T(xp).at(j) - T(xm).at(j)) / (2 * h);
    for (int s = 0; s < r; ++s) {
      auto jj = j;
      for (int p = 0; p < n; ++p) {
        jj[static_cast<std::size_t>(s)] = p;
        if (t.valence(s) == Valence::Upper)
          v += G(j[static_cast<std::size_t>(s)], a, p) * t.at(jj);
        else
          v -= G(p, a, j[static_cast<std::size_t>(s)]) * t.at(jj);
      }
    }
    out[f] = v;
  }
  return out;
}

double rel_diff(const DenseTensor& a, const DenseTensor& b) { return max_abs_diff(a, b) / std::max(1.0, b.max_abs()); }

MetricSpec s3() { return sphere_stereographic(3); }

Expression s3_phi() { return parse_expression("log(2/(1+x1^2+x2^2+x3^2))", 3); }

}  // namespace

TEST_CASE("field jets match finite differences with Christoffel terms") {
  const MetricSpec m = s3();
  const Vec x{0.3, -0.2, 0.4};
  const FieldJet tau = scalar_field(3, "x1*x2^2 + sin(x3) + x1^3", 2);
  const GeometryAt G = curvature_at(m, x, 3);
  const auto t = tau.jets(G, 3);
  // each order from the previous one by FD
  PointFn t1 = [&](std::span<const double> y) { return tau.jets(curvature_at(m, y, 3), 1)[1]; };
  PointFn t2 = [&](std::span<const double> y) { return tau.jets(curvature_at(m, y, 3), 2)[2]; };
  CHECK(rel_diff(t[1], nabla_fd(m, value_of(tau, m), x)) < 1e-6);
  CHECK(rel_diff(t[2], nabla_fd(m, t1, x)) < 1e-6);
  CHECK(rel_diff(t[3], nabla_fd(m, t2, x)) < 1e-6);

  const FieldJet k = FieldJet::expressions(3, {"x1*x2", "x3", "x1^2", "cos(x2)", "1", "x2*x3", "0", "x1", "x3^2"}, kL2);
  const FieldJet v = FieldJet::expressions(3, {"x2", "x1*x3", "1"}, {Valence::Upper});
  CHECK(rel_diff(k.jets(G, 1)[1], nabla_fd(m, value_of(k, m), x)) < 1e-6);
  CHECK(rel_diff(v.jets(G, 1)[1], nabla_fd(m, value_of(v, m), x)) < 1e-6);
  CHECK_THROWS_WITH(k.jets(G, 2), ContainsSubstring("order 1"));

  SECTION("packed symmetric and skew components") {
    const FieldJet s = FieldJet::expressions(3, {"1", "2", "3", "4", "5", "6"}, kL2, 0, Symmetry::Symmetric);
    const FieldJet w = FieldJet::expressions(3, {"1", "2", "3"}, kL2, 0, Symmetry::Skew);
    const DenseTensor sv = s.value(G), wv = w.value(G);
    CHECK(sv(0, 2) == 3.0);
    CHECK(sv(2, 0) == 3.0);
    CHECK(sv(2, 1) == 5.0);
    CHECK(wv(1, 2) == 3.0);
    CHECK(wv(2, 1) == -3.0);
    CHECK_THROWS_WITH(FieldJet::expressions(3, std::vector<std::string>{"1", "2"}, kL2), ContainsSubstring("components"));
  }
}

TEST_CASE("Killing residual") {
  const MetricSpec e3 = euclidean(3);
  const Vec x{0.4, -0.7, 1.1};
  const FieldJet k = FieldJet::expressions(
      3, {"2*(x1^2+x2^2+x3^2) - 2*x1*x1", "-2*x1*x2", "-2*x1*x3", "2*(x1^2+x2^2+x3^2) - 2*x2*x2", "-2*x2*x3",
          "2*(x1^2+x2^2+x3^2) - 2*x3*x3"},
      kL2, 0, Symmetry::Symmetric);
  CHECK(residual_killing(e3, k, x) < 1e-12);

  // g itself on the sphere
  const MetricSpec m = s3();
  const std::string c = "4/(1+x1^2+x2^2+x3^2)^2";
  const FieldJet g = FieldJet::expressions(3, {c, "0", "0", c, "0", c}, kL2, 0, Symmetry::Symmetric);
  CHECK(residual_killing(m, g, x) < 1e-12);

  const FieldJet r = FieldJet::expressions(3, {"x1", "x2", "x3"}, kL1);
  CHECK(residual_killing(e3, r, x) > 1.0);

  const FieldJet bad = FieldJet::expressions(3, {"0", "1", "0", "0", "0", "0", "0", "0", "0"}, kL2);
  CHECK_THROWS_WITH(residual_killing(e3, bad, x), ContainsSubstring("not symmetric"));
}

TEST_CASE("conformal Killing residual") {
  const MetricSpec e3 = euclidean(3);
  const Vec x{0.4, -0.7, 1.1};
  const FieldJet dil = FieldJet::expressions(3, {"x1", "x2", "x3"}, kL1);
  CHECK(residual_conformal_killing(e3, dil, x) < 1e-12);
  const FieldJet one = FieldJet::expressions(3, {"x1", "0", "0"}, kL1);
  // trace-free part of e1⊗e1
  CHECK_THROWS(residual_conformal_killing(e3, FieldJet::expressions(3, {"x1"}, {}), x));
  CHECK_THAT(residual_conformal_killing(e3, one, x), WithinAbs(std::sqrt(4.0 / 9 + 1.0 / 9 + 1.0 / 9), 1e-12));
  const FieldJet k = FieldJet::expressions(
      3, {"2*(x1^2+x2^2+x3^2) - 2*x1*x1", "-2*x1*x2", "-2*x1*x3", "2*(x1^2+x2^2+x3^2) - 2*x2*x2", "-2*x2*x3",
          "2*(x1^2+x2^2+x3^2) - 2*x3*x3"},
      kL2, 0, Symmetry::Symmetric);
  CHECK(residual_conformal_killing(e3, k, x) < 1e-12);
  // conformal Killing vector on the sphere: the flat dilation rescaled (weight 2 when lowered)
  const FieldJet dil_w = FieldJet::expressions(3, {"x1", "x2", "x3"}, kL1, 2);
  CHECK(residual_conformal_killing(s3(), dil_w.rescaled(s3_phi()), x) < 1e-12);
  CHECK(residual_killing(s3(), dil_w.rescaled(s3_phi()), x) > 1e-3);
}

TEST_CASE("conformal Killing-Yano residual") {
  const Vec x{0.4, -0.7, 1.1};
  const MetricSpec e3 = euclidean(3);
  CHECK(residual_cky2(e3, FieldJet::expressions(3, {"1", "2", "-3"}, kL2, 3, Symmetry::Skew), x) < 1e-14);
  // x∧w in R^4 with w = (1, 2, 0, -1)
  const MetricSpec e4 = euclidean(4);
  const Vec w{1, 2, 0, -1};
  std::vector<std::string> comps;
  for (int b = 0; b < 4; ++b)
    for (int c = 0; c < 4; ++c)
      comps.push_back("x" + std::to_string(b + 1) + "*(" + std::to_string(w[static_cast<std::size_t>(c)]) + ") - x" +
                      std::to_string(c + 1) + "*(" + std::to_string(w[static_cast<std::size_t>(b)]) + ")");
  const FieldJet xw = FieldJet::expressions(4, comps, kL2, 3, Symmetry::Skew);
  const Vec x4{0.4, -0.7, 1.1, 0.3};
  CHECK(residual_cky2(e4, xw, x4) < 1e-12);
  CHECK(residual_cky2(e4, xw, x4, true) > 1.0);  // not Killing-Yano
  const FieldJet sq = FieldJet::expressions(3, {"x1^2", "0", "0"}, kL2, 3, Symmetry::Skew);
  CHECK(residual_cky2(e3, sq, x) > 0.1);
  CHECK_THROWS_WITH(residual_cky2(e3, FieldJet::expressions(3, {"1", "1", "0", "1", "0", "0"}, kL2, 3, Symmetry::Symmetric), x),
                    ContainsSubstring("not skew"));
}

TEST_CASE("third-order BGG residuals") {
  const MetricSpec e3 = euclidean(3);
  const AffineSpec flat(e3);
  const Vec x{0.4, -0.7, 1.1};
  CHECK(residual_bgg3_projective(flat, scalar_field(3, "3 + x1 - 2*x2*x3 + x1^2", 2), x) < 1e-12);
  const DenseTensor E = bgg3_projective_tensor(flat, scalar_field(3, "x1^3", 2), x);
  CHECK_THAT(E(0, 0, 0), WithinAbs(6.0, 1e-12));
  CHECK_THAT(E.norm(), WithinAbs(6.0, 1e-12));
  CHECK(residual_bgg3_projective(AffineSpec(s3()), scalar_field(3, "1", 2), x) < 1e-12);

  CHECK(residual_bgg3_conformal(e3, scalar_field(3, "1", 2), x) < 1e-12);
  CHECK(residual_bgg3_conformal(e3, scalar_field(3, "x1^2+x2^2+x3^2", 2), x) < 1e-12);
  // 6e1e1e1 minus (6/5)(g⊗e1 symmetrised): entries 6-18/5 at 111, -6/5 at 122-type (×3 each)
  const double ref = std::sqrt(std::pow(6 - 18.0 / 5, 2) + 2 * 3 * std::pow(6.0 / 5, 2));
  CHECK_THAT(residual_bgg3_conformal(e3, scalar_field(3, "x1^3", 2), x), WithinAbs(ref, 1e-12));
  // normal solution on the sphere: a flat one carried over with weight 2
  const FieldJet t = scalar_field(3, "1 + x1 + x1^2 + x2^2 + x3^2", 2);
  CHECK(residual_bgg3_conformal(s3(), t.rescaled(s3_phi()), x) < 1e-11);
  CHECK(residual_bgg3_conformal(s3(), t, x) > 1e-3);
}

TEST_CASE("Killing tensor from tau") {
  const MetricSpec e3 = euclidean(3);
  const AffineSpec flat(e3);
  const Vec x{0.4, -0.7, 1.1};
  const GeometryAt G = flat.at(x, 3);
  const DenseTensor k = killing_from_tau(scalar_field(3, "x1^2+x2^2+x3^2", 2)).value(G);
  const double r2 = 0.16 + 0.49 + 1.21;
  for (int b = 0; b < 3; ++b)
    for (int c = 0; c < 3; ++c)
      CHECK_THAT(k(b, c), WithinAbs(2 * r2 * (b == c) - 2 * x[static_cast<std::size_t>(b)] * x[static_cast<std::size_t>(c)], 1e-12));
  CHECK(killing_from_tau(scalar_field(3, "1", 2)).value(G).max_abs() < 1e-15);
  const FieldJet k1 = killing_from_tau(scalar_field(3, "x1", 2));
  CHECK_THAT(k1.value(G)(0, 0), WithinAbs(-0.5, 1e-15));
  CHECK(residual_killing(flat, k1, x) < 1e-14);
  CHECK(residual_killing(flat, killing_from_tau(scalar_field(3, "x1^2+x2^2+x3^2", 2)), x) < 1e-12);

  SECTION("symmetrised derivative is tau times the BGG operator") {
    for (const auto& [aff, name] : {std::pair{AffineSpec(s3()), "S3"},
                                    std::pair{AffineSpec(poincare_ball(3), parse_expression("0.3*x1 - 0.2*x2*x3", 3)), "ball"}}) {
      INFO(name);
      const FieldJet tau = scalar_field(3, "1 + x1*x2 + x3^3 + 0.5*x1^2*x2", 2);
      const FieldJet kt = killing_from_tau(tau);
      for (int trial = 0; trial < 4; ++trial) {
        const Vec y = random_vec(3, -0.5, 0.5);
        const GeometryAt Gy = aff.at(y, 3);
        const DenseTensor lhs = symmetrize(kt.jets(Gy, 1)[1], {0, 1, 2});
        const DenseTensor rhs = bgg3_projective_tensor(aff, tau, y) * tau.value(Gy)[0];
        CHECK(rel_diff(lhs, rhs) < 1e-11);
        CHECK(rhs.max_abs() > 1e-3);
        // analytic ∇k against FD
        PointFn kv = [&](std::span<const double> z) { return kt.value(aff.at(z, 3)); };
        if (name == std::string("S3")) CHECK(rel_diff(kt.jets(Gy, 1)[1], nabla_fd(aff.metric(), kv, y)) < 1e-6);
      }
    }
  }
}

TEST_CASE("projective splitting operator") {
  const AffineSpec flat(euclidean(3));
  const Vec o{0, 0, 0};
  const DenseTensor H1 = L_tau_projective(flat, scalar_field(3, "1", 2), o);
  CHECK(H1(3, 3) == 1.0);
  CHECK(H1.norm() == 1.0);
  const DenseTensor H = L_tau_projective(flat, scalar_field(3, "x1^2+x2^2+x3^2", 2), o);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) CHECK_THAT(H(a, b), WithinAbs(a == b && a < 3 ? 1.0 : 0.0, 1e-14));

  SECTION("half the iterated Thomas operator") {
    const AffineSpec aff(s3(), parse_expression("0.2*x1*x2", 3));
    const FieldJet tau = scalar_field(3, "1 + x1*x2 + x3^2 + 0.3*x2^3", 2);
    auto V = [&](std::span<const double> y) {
      const auto t = tau.jets(aff.at(y, 2), 1);
      return thomas_D(t[0][0], Vec{t[1][0], t[1][1], t[1][2]}, 2);
    };
    const Vec x{0.3, -0.1, 0.25};
    const auto C = proj::connection(aff.at(x, 2));
    const DenseTensor v0 = V(x);
    DenseTensor ref(4, 2, Valence::Lower);
    for (int b = 0; b < 4; ++b) ref(3, b) = 0.5 * v0(b);
    const double h = 1e-4;
    for (int a = 0; a < 3; ++a) {
      Vec xp = x, xm = x;
      xp[static_cast<std::size_t>(a)] += h;
      xm[static_cast<std::size_t>(a)] -= h;
      const DenseTensor vp = V(xp), vm = V(xm);
      for (int b = 0; b < 4; ++b) {
        double ct = 0.0;
        for (int c = 0; c < 4; ++c) ct += C[static_cast<std::size_t>(a)](c, b) * v0(c);
        ref(a, b) = 0.5 * ((vp(b) - vm(b)) / (2 * h) - ct);
      }
    }
    CHECK(rel_diff(L_tau_projective(aff, tau, x), ref) < 1e-7);
  }

  SECTION("normal on the flat model exactly for quadratics") {
    const ConnectionProvider conn = projective_connection(flat);
    const FieldJet q = scalar_field(3, "2 - x1 + x2*x3 + 0.5*x1^2", 2);
    const FieldJet c = scalar_field(3, "x1^3", 2);
    for (int trial = 0; trial < 5; ++trial) {
      const Vec x = random_vec(3), v = random_vec(3);
      auto Hq = [&](std::span<const double> y) { return L_tau_projective(flat, q, y); };
      auto Hc = [&](std::span<const double> y) { return L_tau_projective(flat, c, y); };
      CHECK(normality_residual(conn, Hq, x, v) < 1e-9);
      CHECK(normality_residual(conn, Hc, x, v) > 1e-3);
    }
  }
}

TEST_CASE("conformal splitting operator") {
  const MetricSpec e3 = euclidean(3);
  const Vec o{0, 0, 0};
  const DenseTensor H1 = L_tau_conformal(e3, scalar_field(3, "1", 2), o);
  CHECK(std::isnan(H1(0, 0)));
  CHECK(H1(4, 4) == 1.0);
  CHECK(detail::known_norm(H1) == 1.0);
  CHECK_THROWS_WITH(L_tau_conformal(euclidean(2), scalar_field(2, "1", 2), Vec{0, 0}), ContainsSubstring("n >= 3"));

  SECTION("term-by-term for |x|^2 + x1 in flat space") {
    const Vec x{0.4, -0.7, 1.1};
    const DenseTensor H = L_tau_conformal(e3, scalar_field(3, "x1^2+x2^2+x3^2 + x1", 2), x);
    // Δτ = 6, J = 0, ∇τ = 2x + e1, ∇∇τ = 2δ
    const double B = 6.0;
    Vec grad{2 * x[0] + 1, 2 * x[1], 2 * x[2]};
    CHECK_THAT(H(4, 4), WithinAbs(0.16 + 0.49 + 1.21 + 0.4, 1e-12));
    CHECK_THAT(H(0, 4), WithinAbs(-0.5 * B / 5, 1e-12));
    for (int b = 0; b < 3; ++b) {
      CHECK_THAT(H(4, 1 + b), WithinAbs(0.5 * grad[static_cast<std::size_t>(b)], 1e-12));
      CHECK_THAT(H(0, 1 + b), WithinAbs(0.0, 1e-12));
      for (int c = 0; c < 3; ++c) CHECK_THAT(H(1 + b, 1 + c), WithinAbs(b == c ? 0.5 * (2 - B / 5) : 0.0, 1e-12));
    }
    // trace over the known slots
    const DenseTensor hinv = conf::metric_inv(curvature_at(e3, x, 1).g_inv);
    double tr = 0.0;
    for (int A = 0; A < 5; ++A)
      for (int B2 = 0; B2 < 5; ++B2)
        if (!std::isnan(H(A, B2))) tr += hinv(A, B2) * H(A, B2);
    CHECK_THAT(tr, WithinAbs(0.0, 1e-12));
  }

  SECTION("normal for the flat solutions, also after rescaling to the sphere") {
    const FieldJet t = scalar_field(3, "1 + x1 - x3 + 0.5*(x1^2+x2^2+x3^2)", 2);
    const MetricSpec m = s3();
    const FieldJet ts = t.rescaled(s3_phi());
    for (int trial = 0; trial < 4; ++trial) {
      const Vec x = random_vec(3, -0.6, 0.6), v = random_vec(3);
      auto Hf = [&](std::span<const double> y) { return L_tau_conformal(e3, t, y); };
      auto Hs = [&](std::span<const double> y) { return L_tau_conformal(m, ts, y); };
      auto Hbad = [&](std::span<const double> y) { return L_tau_conformal(m, t, y); };
      CHECK(normality_residual(conformal_connection(e3), Hf, x, v) < 1e-8);
      CHECK(normality_residual(conformal_connection(m), Hs, x, v) < 1e-8);
      CHECK(normality_residual(conformal_connection(m), Hbad, x, v) > 1e-3);
    }
  }
}

TEST_CASE("conformal Killing-Yano splitting operator") {
  const MetricSpec e4 = euclidean(4);
  const Vec x{0.4, -0.7, 1.1, 0.3};
  const FieldJet c = FieldJet::expressions(4, {"1", "0", "2", "0", "-1", "3"}, kL2, 3, Symmetry::Skew);
  const DenseTensor Kc = L_cky2(e4, c, x);
  CHECK_THAT(Kc(5, 1, 4), WithinAbs(2.0 / 3, 1e-14));
  CHECK_THAT(Kc(1, 5, 4), WithinAbs(-2.0 / 3, 1e-14));
  CHECK_THAT(Kc(5, 2, 4), WithinAbs(-1.0 / 3, 1e-14));
  for (int a = 1; a < 5; ++a)
    for (int b = 1; b < 5; ++b) {
      CHECK(Kc(0, 5, a) == 0.0);
      for (int d = 1; d < 5; ++d) CHECK(Kc(a, b, d) == 0.0);
      if (a != b) CHECK(std::isnan(Kc(0, a, b)));
    }

  const Vec w{1, 2, 0, -1};
  std::vector<std::string> comps;
  for (int b = 0; b < 4; ++b)
    for (int d = 0; d < 4; ++d)
      comps.push_back("x" + std::to_string(b + 1) + "*(" + std::to_string(w[static_cast<std::size_t>(d)]) + ") - x" +
                      std::to_string(d + 1) + "*(" + std::to_string(w[static_cast<std::size_t>(b)]) + ")");
  const FieldJet xw = FieldJet::expressions(4, comps, kL2, 3, Symmetry::Skew);
  const DenseTensor K = L_cky2(e4, xw, x);
  // coefficient 2w of the unit X∧Y∧Z wedge, i.e. component 2w/6
  for (int a = 0; a < 4; ++a) CHECK_THAT(K(0, 5, 1 + a), WithinAbs(w[static_cast<std::size_t>(a)] / 3.0, 1e-12));

  SECTION("normal on the flat model") {
    for (const FieldJet* f : {&c, &xw}) {
      for (int trial = 0; trial < 3; ++trial) {
        const Vec y = random_vec(4), v = random_vec(4);
        auto Kf = [&](std::span<const double> z) { return L_cky2(e4, *f, z); };
        CHECK(normality_residual(conformal_connection(e4), Kf, y, v) < 1e-8);
      }
    }
    const FieldJet sq = FieldJet::expressions(4, {"x1^2", "0", "0", "0", "0", "0"}, kL2, 3, Symmetry::Skew);
    auto Ks = [&](std::span<const double> z) { return L_cky2(e4, sq, z); };
    CHECK(normality_residual(conformal_connection(e4), Ks, x, Vec{1, 0.5, 0, 0}) > 1e-3);
  }

  SECTION("the curve pairing never reads the unknown slots") {
    CurveState s;
    s.x = x;
    s.u = {0.6, 0.8, 0, 0};
    s.a = {0.8, -0.6, 0.3, 0};
    const DenseTensor S = sigma_conformal(curvature_at(e4, x, 1).g, s);
    const double p = pair_known(S, K);
    CHECK(std::isfinite(p));
    // fi_cky_tod by hand: u^a a^b k_ab − ε/(n−1) u^a ∇^p k_pa, with unit u and ∇^p k_pa = 3w_a
    double uak = 0, uw = 0;
    const DenseTensor k = xw.value(curvature_at(e4, x, 1));
    for (int a = 0; a < 4; ++a) {
      uw += s.u[static_cast<std::size_t>(a)] * 3 * w[static_cast<std::size_t>(a)];
      for (int b = 0; b < 4; ++b) uak += s.u[static_cast<std::size_t>(a)] * s.a[static_cast<std::size_t>(b)] * k(a, b);
    }
    CHECK_THAT(p, WithinAbs(2 * (uak - uw / 3), 1e-12));
    DenseTensor probe(6, 3, Valence::Upper);
    probe(0, 1, 2) = 1.0;
    CHECK_THROWS_WITH(pair_known(probe, K), ContainsSubstring("unknown"));
  }
}

TEST_CASE("projective weighted bivector") {
  const AffineSpec flat(euclidean(2));
  const FieldJet s = FieldJet::expressions(2, {"x2"}, kU2, -2, Symmetry::Skew);
  const Vec x{0.3, -1.2};
  const DenseTensor L = L_proj_bivector(flat, s, x);
  CHECK(L(0, 1) == -1.2);
  CHECK(L(1, 0) == 1.2);
  CHECK(L(2, 0) == 1.0);
  CHECK(L(0, 2) == -1.0);
  CHECK(L(2, 1) == 0.0);
  CHECK(residual_proj_bivector(flat, s, x) < 1e-12);
  CHECK(L_proj_bivector(flat, FieldJet::expressions(2, {"0"}, kU2, -2, Symmetry::Skew), x).max_abs() == 0.0);
  // every skew field solves it when n = 2
  CHECK(residual_proj_bivector(flat, FieldJet::expressions(2, {"x2^2"}, kU2, -2, Symmetry::Skew), x) < 1e-12);
  CHECK_THROWS_WITH(L_proj_bivector(flat, FieldJet::expressions(2, {"x2"}, kL2, -2, Symmetry::Skew), x),
                    ContainsSubstring("contravariant"));

  SECTION("normal on the flat model") {
    const AffineSpec f3(euclidean(3));
    const FieldJet b = FieldJet::expressions(3, {"x2 + 1", "-x1", "0.5*x3"}, kU2, -2, Symmetry::Skew);
    CHECK(residual_proj_bivector(f3, b, Vec{0.1, 0.2, 0.3}) > 0.1);
    // σ = c + x∧t + ... : constant plus x^[a t^b] solves the equation
    const FieldJet good = FieldJet::expressions(3, {"1 + x1*2 - x2*1", "x1*0 - x3*1", "x2*0 - x3*2"}, kU2, -2, Symmetry::Skew);
    auto Lg = [&](std::span<const double> y) { return L_proj_bivector(f3, good, y); };
    for (int trial = 0; trial < 3; ++trial) {
      const Vec y = random_vec(3), v = random_vec(3);
      CHECK(residual_proj_bivector(f3, good, y) < 1e-12);
      CHECK(normality_residual(projective_connection(f3), Lg, y, v) < 1e-9);
    }
  }
}

TEST_CASE("Killing tensors from parallel tractors") {
  SECTION("projective, rank 1") {
    const AffineSpec flat(euclidean(3));
    auto V = [](std::span<const double> y, double c, const Vec& w) {
      return thomas_D(c + w[0] * y[0] + w[1] * y[1] + w[2] * y[2], w, 1);
    };
    const Vec w1{1, 0, 2}, w2{0, -1, 1};
    auto Q = [&](std::span<const double> y) {
      const DenseTensor a = V(y, 1.0, w1), b = V(y, -0.5, w2);
      return outer(a, b) - outer(b, a);
    };
    const Vec x{0.2, 0.5, -0.4}, v{0.3, -0.2, 0.9};
    CHECK(normality_residual(projective_connection(flat), Q, x, v) < 1e-10);
    const FieldJet k = killing_from_parallel_Q(TractorKind::Projective, 3, Q);
    CHECK(residual_killing(flat, k, x) < 1e-7);
    const DenseTensor kv = k.value(flat.at(x, 1));
    CHECK(kv.max_abs() > 0.1);
    auto zero = [](std::span<const double>) { return DenseTensor(4, 2, Valence::Lower); };
    CHECK(killing_from_parallel_Q(TractorKind::Projective, 3, zero).value(flat.at(x, 1)).max_abs() == 0.0);
    auto sym = [&](std::span<const double> y) {
      const DenseTensor a = V(y, 1.0, w1), b = V(y, -0.5, w2);
      return outer(a, b) + outer(b, a);
    };
    CHECK_THROWS_WITH(killing_from_parallel_Q(TractorKind::Projective, 3, sym), ContainsSubstring("symmetry-type"));
  }

  SECTION("conformal, rank 2") {
    const MetricSpec e3 = euclidean(3);
    // lower components of D σ / n for σ = c + w·x + q|x|²
    auto I = [](std::span<const double> y, double c, const Vec& w, double q) {
      DenseTensor t(5, 1, Valence::Lower);
      double r2 = 0, wx = 0;
      for (int i = 0; i < 3; ++i) {
        r2 += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        wx += w[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        t(1 + i) = w[static_cast<std::size_t>(i)] + 2 * q * y[static_cast<std::size_t>(i)];
      }
      t(4) = c + wx + q * r2;
      t(0) = -2 * q;
      return t;
    };
    auto P2 = [&](std::span<const double> y) {
      const DenseTensor a = I(y, 1.0, {0.5, 0, -1}, 0.3), b = I(y, 0.2, {0, 1, 0.4}, -0.7);
      return outer(a, b) - outer(b, a);
    };
    const Vec x{0.2, 0.5, -0.4}, v{0.3, -0.2, 0.9};
    CHECK(normality_residual(conformal_connection(e3), P2, x, v) < 1e-10);
    auto Q = [&](std::span<const double> y) { const DenseTensor p = P2(y); return outer(p, p); };
    const FieldJet k = killing_from_parallel_Q(TractorKind::Conformal, 3, Q);
    CHECK(k.rank() == 2);
    CHECK(residual_conformal_killing(e3, k, x) < 1e-8);
    CHECK(residual_killing(e3, k, x) > 1e-3);
  }
}
