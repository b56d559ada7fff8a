#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "tractor/expression.hpp"
#include "tractor/jet.hpp"
#include "tractor/tensor.hpp"

namespace tractor {

using Vec = std::vector<double>;

// Partial derivatives up to order 3 of a vector-valued function, assembled
// from directional Taylor jets by polarisation.
class Partials {
 public:
  using Fn = std::function<void(std::span<const Jet3>, std::span<Jet3>)>;

  Partials(const Fn& f, int n, int nout, std::span<const double> x, int order)
      : n_(n), nout_(nout), order_(order) {
    if (order < 0 || order > 3) throw bad_input("derivative order must be in [0, 3]");
    const auto un = static_cast<std::size_t>(n), uo = static_cast<std::size_t>(nout);
    v_.assign(uo, 0.0);
    d1_.assign(un * uo, 0.0);
    d2_.assign(un * un * uo, 0.0);
    d3_.assign(un * un * un * uo, 0.0);

    std::vector<Jet3> in(un), out(uo);
    // D^k_v f for k = 1..3 along direction v, stored per output.
    auto along = [&](const std::vector<double>& dir, std::vector<std::array<double, 4>>& res) {
      for (std::size_t i = 0; i < un; ++i) in[i] = Jet3::variable(x[i], dir[i]);
      for (auto& o : out) o = Jet3();
      f(in, out);
      res.resize(uo);
      for (std::size_t k = 0; k < uo; ++k)
        for (int d = 0; d <= 3; ++d) res[k][static_cast<std::size_t>(d)] = out[k].derivative(d);
    };
    auto unit = [&](std::initializer_list<std::pair<int, double>> terms) {
      std::vector<double> d(un, 0.0);
      for (auto [i, c] : terms) d[static_cast<std::size_t>(i)] += c;
      return d;
    };

    std::vector<std::vector<std::array<double, 4>>> axis(un);
    if (n == 0 || order == 0) {
      for (std::size_t i = 0; i < un; ++i) in[i] = Jet3(x[i]);
      f(in, out);
      for (std::size_t k = 0; k < uo; ++k) v_[k] = out[k].value();
      if (n > 0) return;
    }
    for (int i = 0; i < n; ++i) along(unit({{i, 1.0}}), axis[static_cast<std::size_t>(i)]);
    for (std::size_t k = 0; k < uo; ++k) v_[k] = axis[0][k][0];
    for (int i = 0; i < n; ++i)
      for (std::size_t k = 0; k < uo; ++k) {
        d1(i)[k] = axis[static_cast<std::size_t>(i)][k][1];
        if (order >= 2) d2(i, i)[k] = axis[static_cast<std::size_t>(i)][k][2];
        if (order >= 3) d3(i, i, i)[k] = axis[static_cast<std::size_t>(i)][k][3];
      }
    if (order < 2) return;

    std::vector<std::array<double, 4>> minus, triple;
    std::vector<std::vector<std::array<double, 4>>> pairs(un * un);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        auto& plus = pairs[static_cast<std::size_t>(i * n + j)];
        along(unit({{i, 1.0}, {j, 1.0}}), plus);
        const auto& ai = axis[static_cast<std::size_t>(i)];
        const auto& aj = axis[static_cast<std::size_t>(j)];
        for (std::size_t k = 0; k < uo; ++k) {
          const double v = 0.5 * (plus[k][2] - ai[k][2] - aj[k][2]);
          d2(i, j)[k] = v;
          d2(j, i)[k] = v;
        }
        if (order < 3) continue;
        along(unit({{i, 1.0}, {j, -1.0}}), minus);
        for (std::size_t k = 0; k < uo; ++k) {
          const double iij = (plus[k][3] - minus[k][3] - 2.0 * aj[k][3]) / 6.0;
          const double ijj = (plus[k][3] + minus[k][3] - 2.0 * ai[k][3]) / 6.0;
          for (auto [a, b, c] : {std::array{i, i, j}, std::array{i, j, i}, std::array{j, i, i}})
            d3(a, b, c)[k] = iij;
          for (auto [a, b, c] : {std::array{i, j, j}, std::array{j, i, j}, std::array{j, j, i}})
            d3(a, b, c)[k] = ijj;
        }
      }
    if (order < 3) return;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        for (int l = j + 1; l < n; ++l) {
          along(unit({{i, 1.0}, {j, 1.0}, {l, 1.0}}), triple);
          const auto& pij = pairs[static_cast<std::size_t>(i * n + j)];
          const auto& pik = pairs[static_cast<std::size_t>(i * n + l)];
          const auto& pjk = pairs[static_cast<std::size_t>(j * n + l)];
          for (std::size_t k = 0; k < uo; ++k) {
            const double t = (triple[k][3] - pij[k][3] - pik[k][3] - pjk[k][3] +
                              axis[static_cast<std::size_t>(i)][k][3] +
                              axis[static_cast<std::size_t>(j)][k][3] +
                              axis[static_cast<std::size_t>(l)][k][3]) / 6.0;
            const std::array<int, 3> p{i, j, l};
            std::array<int, 3> q = p;
            std::sort(q.begin(), q.end());
            do d3(q[0], q[1], q[2])[k] = t;
            while (std::next_permutation(q.begin(), q.end()));
          }
        }
  }

  int dim() const { return n_; }
  int outputs() const { return nout_; }
  int order() const { return order_; }

  double value(int k) const { return v_[static_cast<std::size_t>(k)]; }
  double d1(int i, int k) const { return d1_[idx(i) + static_cast<std::size_t>(k)]; }
  double d2(int i, int j, int k) const { return d2_[idx(i, j) + static_cast<std::size_t>(k)]; }
  double d3(int i, int j, int l, int k) const { return d3_[idx(i, j, l) + static_cast<std::size_t>(k)]; }

 private:
  std::size_t idx(int i) const { return static_cast<std::size_t>(i) * static_cast<std::size_t>(nout_); }
  std::size_t idx(int i, int j) const { return (static_cast<std::size_t>(i) * n_ + j) * static_cast<std::size_t>(nout_); }
  std::size_t idx(int i, int j, int l) const {
    return ((static_cast<std::size_t>(i) * n_ + j) * n_ + l) * static_cast<std::size_t>(nout_);
  }
  double* d1(int i) { return &d1_[idx(i)]; }
  double* d2(int i, int j) { return &d2_[idx(i, j)]; }
  double* d3(int i, int j, int l) { return &d3_[idx(i, j, l)]; }

  int n_, nout_, order_;
  std::vector<double> v_, d1_, d2_, d3_;
};

// Metric components and coordinate partials; derivative slots come first:
// dg(c,a,b) = ∂_c g_ab, ddg(c,d,a,b), dddg(c,d,e,a,b).
struct MetricJets {
  int order = 0;
  DenseTensor g, dg, ddg, dddg;
};

class MetricSpec {
 public:
  // Writes the packed upper triangle (row-major, a <= b) of g_ab.
  using Evaluator = std::function<void(std::span<const Jet3>, std::span<Jet3>)>;
  using Domain = std::function<bool(std::span<const double>)>;

  MetricSpec(std::string name, int n, std::vector<int> signature, Evaluator eval,
             Domain domain, std::string domain_note)
      : name_(std::move(name)), n_(n), signature_(std::move(signature)), eval_(std::move(eval)),
        domain_(std::move(domain)), domain_note_(std::move(domain_note)) {
    if (n < 1 || n > 6) throw bad_input("metric dimension must be in [1, 6]");
    if (static_cast<int>(signature_.size()) != n) throw bad_input("signature length must equal n");
    for (int s : signature_)
      if (s != 1 && s != -1) throw bad_input("signature entries must be +1 or -1");
  }

  const std::string& name() const { return name_; }
  int dim() const { return n_; }
  const std::vector<int>& signature() const { return signature_; }
  const std::string& domain_note() const { return domain_note_; }
  const Evaluator& evaluator() const { return eval_; }
  const Domain& domain() const { return domain_; }
  bool in_domain(std::span<const double> x) const { return domain_ ? domain_(x) : true; }
  int negatives() const {
    int k = 0;
    for (int s : signature_) k += s < 0;
    return k;
  }
  bool definite() const { return negatives() == 0 || negatives() == n_; }

  MetricJets jets(std::span<const double> x, int order) const {
    check_point(x);
    const int np = n_ * (n_ + 1) / 2;
    Partials p(eval_, n_, np, x, order);
    MetricJets mj;
    mj.order = order;
    mj.g = DenseTensor(n_, 2, Valence::Lower);
    mj.dg = DenseTensor(n_, 3, Valence::Lower);
    mj.ddg = DenseTensor(n_, 4, Valence::Lower);
    mj.dddg = DenseTensor(n_, 5, Valence::Lower);
    for (int a = 0, k = 0; a < n_; ++a)
      for (int b = a; b < n_; ++b, ++k) {
        mj.g(a, b) = mj.g(b, a) = p.value(k);
        for (int c = 0; c < n_ && order >= 1; ++c) {
          mj.dg(c, a, b) = mj.dg(c, b, a) = p.d1(c, k);
          for (int d = 0; d < n_ && order >= 2; ++d) {
            mj.ddg(c, d, a, b) = mj.ddg(c, d, b, a) = p.d2(c, d, k);
            for (int e = 0; e < n_ && order >= 3; ++e)
              mj.dddg(c, d, e, a, b) = mj.dddg(c, d, e, b, a) = p.d3(c, d, e, k);
          }
        }
      }
    validate(mj.g);
    return mj;
  }

  DenseTensor metric_at(std::span<const double> x) const { return jets(x, 0).g; }

  void validate(const DenseTensor& g) const {
    const Eigen::MatrixXd m = to_matrix(g);
    for (int i = 0; i < n_; ++i)
      if (!std::isfinite(m(i, i))) throw precondition("metric not finite at point");
    if (!(std::abs(m.determinant()) > 1e-12)) throw precondition("degenerate metric (|det| <= 1e-12)");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    int neg = 0;
    for (int i = 0; i < n_; ++i) neg += es.eigenvalues()(i) < 0;
    if (neg != negatives())
      throw precondition("metric '" + name_ + "' eigenvalue signs disagree with declared signature");
  }

 private:
  void check_point(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != n_) throw bad_input("point dimension mismatch");
    if (!in_domain(x)) throw Error(ErrorKind::ChartExit, "point outside chart domain of '" + name_ + "'");
  }

  std::string name_;
  int n_;
  std::vector<int> signature_;
  Evaluator eval_;
  Domain domain_;
  std::string domain_note_;
};

namespace detail {

template <class F>
MetricSpec conformally_flat(std::string name, int n, F factor, MetricSpec::Domain dom, std::string note) {
  auto eval = [n, factor](std::span<const Jet3> x, std::span<Jet3> out) {
    Jet3 r2(0.0);
    for (const auto& xi : x) r2 += xi * xi;
    const Jet3 f = factor(r2);
    for (int a = 0, k = 0; a < n; ++a)
      for (int b = a; b < n; ++b, ++k) out[static_cast<std::size_t>(k)] = a == b ? f : Jet3(0.0);
  };
  return MetricSpec(std::move(name), n, std::vector<int>(static_cast<std::size_t>(n), 1), eval,
                    std::move(dom), std::move(note));
}

}  // namespace detail

inline MetricSpec euclidean(int n) {
  return detail::conformally_flat("euclidean(" + std::to_string(n) + ")", n,
                                  [](const Jet3&) { return Jet3(1.0); }, nullptr, "all of R^n");
}

// Signature (p, q): the q negative directions come first, e.g. minkowski(3,1) = diag(-1,1,1,1).
inline MetricSpec minkowski(int p, int q) {
  const int n = p + q;
  if (p < 0 || q < 0 || n < 1) throw bad_input("minkowski: invalid signature");
  std::vector<int> sig(static_cast<std::size_t>(n), 1);
  for (int i = 0; i < q; ++i) sig[static_cast<std::size_t>(i)] = -1;
  auto eval = [n, sig](std::span<const Jet3>, std::span<Jet3> out) {
    for (int a = 0, k = 0; a < n; ++a)
      for (int b = a; b < n; ++b, ++k)
        out[static_cast<std::size_t>(k)] = a == b ? Jet3(sig[static_cast<std::size_t>(a)]) : Jet3(0.0);
  };
  return MetricSpec("minkowski(" + std::to_string(p) + "," + std::to_string(q) + ")", n, sig, eval,
                    nullptr, "all of R^n");
}

// Round sphere of the given radius, stereographic from the north pole.
inline MetricSpec sphere_stereographic(int n, double radius = 1.0) {
  if (!(radius > 0)) throw bad_input("sphere radius must be positive");
  const double k = 1.0 / (radius * radius);
  return detail::conformally_flat(
      "sphere_stereographic(" + std::to_string(n) + "," + shortest(radius) + ")", n,
      [k](const Jet3& r2) { return Jet3(4.0) / pow(Jet3(1.0) + k * r2, 2); }, nullptr,
      "all of R^n (sphere minus north pole)");
}

inline MetricSpec poincare_ball(int n) {
  return detail::conformally_flat(
      "poincare_ball(" + std::to_string(n) + ")", n,
      [](const Jet3& r2) { return Jet3(4.0) / pow(Jet3(1.0) - r2, 2); },
      [](std::span<const double> x) {
        double r2 = 0.0;
        for (double v : x) r2 += v * v;
        return r2 < 1.0;
      },
      "open unit ball |x| < 1");
}

// Components: n diagonal entries, n(n+1)/2 packed upper triangle, or full n*n.
inline MetricSpec expression_matrix(int n, const std::vector<std::string>& comps, std::vector<int> signature,
                                    std::string name = "expression_matrix") {
  const std::size_t un = static_cast<std::size_t>(n);
  std::vector<Expression> packed;
  auto parse = [n](const std::string& s) { return parse_expression(s, n); };
  if (comps.size() == un) {
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b)
        packed.push_back(a == b ? parse(comps[static_cast<std::size_t>(a)]) : Expression::constant(0.0));
  } else if (comps.size() == un * (un + 1) / 2) {
    for (const auto& s : comps) packed.push_back(parse(s));
  } else if (comps.size() == un * un) {
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        Expression ab = parse(comps[static_cast<std::size_t>(a * n + b)]);
        Expression ba = parse(comps[static_cast<std::size_t>(b * n + a)]);
        if (!(ab == ba)) throw bad_input("metric matrix not symmetric at (" + std::to_string(a + 1) + "," + std::to_string(b + 1) + ")");
        packed.push_back(ab);
      }
  } else {
    throw bad_input("expression_matrix: expected n, n(n+1)/2 or n^2 components");
  }
  auto eval = [packed](std::span<const Jet3> x, std::span<Jet3> out) {
    for (std::size_t k = 0; k < packed.size(); ++k) out[k] = packed[k].eval<Jet3>(x);
  };
  return MetricSpec(std::move(name), n, std::move(signature), eval, nullptr, "user expressions; wherever they evaluate");
}

// ĝ = e^{2φ} g on the same chart.
inline MetricSpec conformal_rescale(const MetricSpec& m, const Expression& phi) {
  if (phi.arity() > m.dim()) throw bad_input("conformal factor uses coordinates beyond n");
  auto base = m.evaluator();
  auto eval = [base, phi](std::span<const Jet3> x, std::span<Jet3> out) {
    base(x, out);
    const Jet3 f = exp(Jet3(2.0) * phi.eval<Jet3>(x));
    for (auto& o : out) o = o * f;
  };
  return MetricSpec("e^(2*" + phi.str() + ")*" + m.name(), m.dim(), m.signature(), eval, m.domain(),
                    m.domain_note());
}

struct CatalogEntry {
  std::string name;
  std::string params;
  std::string domain;
};

inline std::vector<CatalogEntry> catalog() {
  return {
      {"euclidean", "n", "all of R^n"},
      {"minkowski", "p, q (q negative directions first)", "all of R^n"},
      {"sphere_stereographic", "n, radius", "all of R^n (sphere minus north pole)"},
      {"poincare_ball", "n", "open unit ball |x| < 1"},
      {"expression_matrix", "n, components, signature", "wherever the expressions evaluate"},
  };
}

}  // namespace tractor
