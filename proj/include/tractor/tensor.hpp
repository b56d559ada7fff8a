#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tractor/error.hpp"

namespace tractor {

enum class Valence : unsigned char { Upper, Lower };

inline Valence flip(Valence v) {
  return v == Valence::Upper ? Valence::Lower : Valence::Upper;
}

// Dense row-major array of dim^rank reals. Slot 0 varies slowest.
class DenseTensor {
 public:
  static constexpr int kMaxDim = 8;

  DenseTensor() : dim_(1), data_(1, 0.0) {}

  DenseTensor(int dim, int rank, Valence v = Valence::Lower)
      : DenseTensor(dim, std::vector<Valence>(static_cast<std::size_t>(rank), v)) {}

  DenseTensor(int dim, std::vector<Valence> valence)
      : dim_(dim), valence_(std::move(valence)) {
    if (dim < 1 || dim > kMaxDim)
      throw bad_input("tensor dimension " + std::to_string(dim) + " outside [1, 8]");
    std::size_t sz = 1;
    for (std::size_t i = 0; i < valence_.size(); ++i) sz *= static_cast<std::size_t>(dim);
    data_.assign(sz, 0.0);
  }

  static DenseTensor scalar(double v) {
    DenseTensor t;
    t.data_[0] = v;
    return t;
  }

  static DenseTensor vector(std::span<const double> v, Valence val = Valence::Upper) {
    DenseTensor t(static_cast<int>(v.size()), 1, val);
    std::copy(v.begin(), v.end(), t.data_.begin());
    return t;
  }

  int dim() const noexcept { return dim_; }
  int rank() const noexcept { return static_cast<int>(valence_.size()); }
  std::size_t size() const noexcept { return data_.size(); }
  const std::vector<Valence>& valence() const noexcept { return valence_; }
  Valence valence(int slot) const { return valence_.at(static_cast<std::size_t>(slot)); }
  void set_valence(std::vector<Valence> v) {
    if (v.size() != valence_.size()) throw bad_input("valence length mismatch");
    valence_ = std::move(v);
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  template <class... I>
  double& operator()(I... idx) {
    return data_[offset_of(idx...)];
  }
  template <class... I>
  double operator()(I... idx) const {
    return data_[offset_of(idx...)];
  }

  std::size_t offset(std::span<const int> idx) const {
    std::size_t off = 0;
    for (int i : idx) off = off * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(i);
    return off;
  }
  double& at(std::span<const int> idx) { return data_[offset(idx)]; }
  double at(std::span<const int> idx) const { return data_[offset(idx)]; }

  // Multi-index of a flat position.
  void decode(std::size_t flat, std::span<int> idx) const {
    for (int s = rank() - 1; s >= 0; --s) {
      idx[static_cast<std::size_t>(s)] = static_cast<int>(flat % static_cast<std::size_t>(dim_));
      flat /= static_cast<std::size_t>(dim_);
    }
  }

  double norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }
  double max_abs() const {
    double s = 0.0;
    for (double v : data_) s = std::max(s, std::abs(v));
    return s;
  }

  DenseTensor& operator+=(const DenseTensor& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseTensor& operator-=(const DenseTensor& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  DenseTensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  void check_same_shape(const DenseTensor& o) const {
    if (o.dim_ != dim_ || o.rank() != rank())
      throw bad_input("tensor shape mismatch");
  }

 private:
  template <class... I>
  std::size_t offset_of(I... idx) const {
    std::size_t off = 0;
    ((off = off * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(idx)), ...);
    return off;
  }

  int dim_;
  std::vector<Valence> valence_;
  std::vector<double> data_;
};

inline DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
inline DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
inline DenseTensor operator*(double s, DenseTensor a) { return a *= s; }
inline DenseTensor operator*(DenseTensor a, double s) { return a *= s; }

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  a.check_same_shape(b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace detail {

inline void check_slots(const DenseTensor& t, std::span<const int> slots) {
  std::vector<bool> seen(static_cast<std::size_t>(t.rank()), false);
  for (int s : slots) {
    if (s < 0 || s >= t.rank())
      throw bad_input("slot " + std::to_string(s) + " out of range for rank " +
                      std::to_string(t.rank()));
    if (seen[static_cast<std::size_t>(s)]) throw bad_input("repeated slot " + std::to_string(s));
    seen[static_cast<std::size_t>(s)] = true;
    if (t.valence(s) != t.valence(slots[0])) throw bad_input("mixed valence among slots");
  }
}

inline int permutation_sign(const std::vector<int>& p) {
  int sign = 1;
  std::vector<bool> done(p.size(), false);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (done[i]) continue;
    std::size_t len = 0;
    for (std::size_t j = i; !done[j]; j = static_cast<std::size_t>(p[j])) {
      done[j] = true;
      ++len;
    }
    if (len % 2 == 0) sign = -sign;
  }
  return sign;
}

// Signed (or plain) average over permutations of the given slots.
inline DenseTensor young_average(const DenseTensor& t, std::span<const int> slots, bool alternate) {
  check_slots(t, slots);
  DenseTensor out(t.dim(), t.valence());
  const std::size_t k = slots.size();
  if (k < 2) return t;
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::pair<std::vector<int>, int>> perms;
  do perms.emplace_back(perm, alternate ? permutation_sign(perm) : 1);
  while (std::next_permutation(perm.begin(), perm.end()));
  const double inv = 1.0 / static_cast<double>(perms.size());

  std::vector<int> idx(static_cast<std::size_t>(t.rank())), src(idx.size());
  for (std::size_t f = 0; f < t.size(); ++f) {
    t.decode(f, idx);
    double acc = 0.0;
    for (const auto& [p, sgn] : perms) {
      src = idx;
      for (std::size_t i = 0; i < k; ++i)
        src[static_cast<std::size_t>(slots[i])] = idx[static_cast<std::size_t>(slots[static_cast<std::size_t>(p[i])])];
      acc += sgn * t.at(src);
    }
    out[f] = acc * inv;
  }
  return out;
}

}  // namespace detail

inline DenseTensor symmetrize(const DenseTensor& t, std::span<const int> slots) {
  return detail::young_average(t, slots, false);
}
inline DenseTensor symmetrize(const DenseTensor& t, std::initializer_list<int> slots) {
  return symmetrize(t, std::span<const int>(slots.begin(), slots.size()));
}
inline DenseTensor antisymmetrize(const DenseTensor& t, std::span<const int> slots) {
  return detail::young_average(t, slots, true);
}
inline DenseTensor antisymmetrize(const DenseTensor& t, std::initializer_list<int> slots) {
  return antisymmetrize(t, std::span<const int>(slots.begin(), slots.size()));
}

inline std::vector<int> all_slots(const DenseTensor& t) {
  std::vector<int> s(static_cast<std::size_t>(t.rank()));
  std::iota(s.begin(), s.end(), 0);
  return s;
}

inline DenseTensor outer(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() > 0 && b.rank() > 0 && a.dim() != b.dim()) throw bad_input("outer: dimension mismatch");
  std::vector<Valence> v = a.valence();
  v.insert(v.end(), b.valence().begin(), b.valence().end());
  const int dim = a.rank() > 0 ? a.dim() : b.dim();
  DenseTensor out(dim, std::move(v));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i * b.size() + j] = a[i] * b[j];
  return out;
}

// Rearranges slots: result slot i is t's slot perm[i].
inline DenseTensor permute(const DenseTensor& t, std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != t.rank()) throw bad_input("permute: wrong length");
  std::vector<Valence> v(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) v[i] = t.valence(perm[i]);
  DenseTensor out(t.dim(), v);
  std::vector<int> idx(perm.size()), src(perm.size());
  for (std::size_t f = 0; f < out.size(); ++f) {
    out.decode(f, idx);
    for (std::size_t i = 0; i < perm.size(); ++i) src[static_cast<std::size_t>(perm[i])] = idx[i];
    out[f] = t.at(src);
  }
  return out;
}
inline DenseTensor permute(const DenseTensor& t, std::initializer_list<int> perm) {
  return permute(t, std::span<const int>(perm.begin(), perm.size()));
}

// Traces slots a and b. Same-valence slots need a metric of the opposite valence.
inline DenseTensor contract(const DenseTensor& t, int a, int b, const DenseTensor* metric = nullptr) {
  if (a == b || a < 0 || b < 0 || a >= t.rank() || b >= t.rank())
    throw bad_input("contract: invalid slots");
  const bool same = t.valence(a) == t.valence(b);
  if (same && metric == nullptr) throw bad_input("contract: same-valence slots need a metric");
  if (metric != nullptr) {
    if (metric->rank() != 2 || metric->dim() != t.dim())
      throw bad_input("contract: metric dimension mismatch");
    if (same && metric->valence(0) == t.valence(a))
      throw bad_input("contract: metric valence must oppose the contracted slots");
  }
  std::vector<Valence> v;
  for (int s = 0; s < t.rank(); ++s)
    if (s != a && s != b) v.push_back(t.valence(s));
  DenseTensor out(t.dim(), v);
  const int n = t.dim();
  std::vector<int> idx(v.size()), full(static_cast<std::size_t>(t.rank()));
  for (std::size_t f = 0; f < out.size(); ++f) {
    out.decode(f, idx);
    for (int s = 0, k = 0; s < t.rank(); ++s)
      if (s != a && s != b) full[static_cast<std::size_t>(s)] = idx[static_cast<std::size_t>(k++)];
    double acc = 0.0;
    if (same) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double m = (*metric)(i, j);
          if (m == 0.0) continue;
          full[static_cast<std::size_t>(a)] = i;
          full[static_cast<std::size_t>(b)] = j;
          acc += m * t.at(full);
        }
    } else {
      for (int i = 0; i < n; ++i) {
        full[static_cast<std::size_t>(a)] = i;
        full[static_cast<std::size_t>(b)] = i;
        acc += t.at(full);
      }
    }
    out[f] = acc;
  }
  return out;
}

// Moves one slot across with a metric; g must have valence opposite to the slot.
inline DenseTensor move_slot(const DenseTensor& t, int slot, const DenseTensor& g) {
  if (g.rank() != 2 || g.dim() != t.dim()) throw bad_input("move_slot: metric dimension mismatch");
  if (g.valence(0) == t.valence(slot)) throw bad_input("move_slot: metric valence mismatch");
  std::vector<Valence> v = t.valence();
  v[static_cast<std::size_t>(slot)] = flip(v[static_cast<std::size_t>(slot)]);
  DenseTensor out(t.dim(), v);
  std::vector<int> idx(v.size());
  for (std::size_t f = 0; f < out.size(); ++f) {
    out.decode(f, idx);
    const int i = idx[static_cast<std::size_t>(slot)];
    double acc = 0.0;
    for (int p = 0; p < t.dim(); ++p) {
      idx[static_cast<std::size_t>(slot)] = p;
      acc += g(i, p) * t.at(idx);
    }
    out[f] = acc;
  }
  return out;
}

inline DenseTensor move_all_slots(DenseTensor t, const DenseTensor& g_lower, const DenseTensor& g_upper) {
  for (int s = 0; s < t.rank(); ++s)
    t = move_slot(t, s, t.valence(s) == Valence::Upper ? g_lower : g_upper);
  return t;
}

// Full contraction of equal-rank tensors with opposite valence slot by slot.
inline double pair(const DenseTensor& a, const DenseTensor& b) {
  a.check_same_shape(b);
  for (int s = 0; s < a.rank(); ++s)
    if (a.valence(s) == b.valence(s)) throw bad_input("pair: slots must have opposite valence");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline Eigen::MatrixXd to_matrix(const DenseTensor& t) {
  if (t.rank() != 2) throw bad_input("to_matrix: rank must be 2");
  Eigen::MatrixXd m(t.dim(), t.dim());
  for (int i = 0; i < t.dim(); ++i)
    for (int j = 0; j < t.dim(); ++j) m(i, j) = t(i, j);
  return m;
}

inline DenseTensor from_matrix(const Eigen::MatrixXd& m, Valence v0, Valence v1) {
  DenseTensor t(static_cast<int>(m.rows()), std::vector<Valence>{v0, v1});
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t(i, j) = m(i, j);
  return t;
}

inline DenseTensor inverse_metric(const DenseTensor& g) {
  const Eigen::MatrixXd m = to_matrix(g);
  const double det = m.determinant();
  if (!(std::abs(det) > 1e-12)) throw precondition("degenerate metric (|det| <= 1e-12)");
  return from_matrix(m.inverse(), flip(g.valence(0)), flip(g.valence(1)));
}

inline double symmetry_defect(const DenseTensor& t, std::span<const int> perm, double sign) {
  const double scale = std::max(t.max_abs(), 1e-300);
  DenseTensor p = permute(t, perm);
  double m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i] - sign * p[i]));
  return m / scale;
}

inline DenseTensor tracefree_sym2(const DenseTensor& t, const DenseTensor& metric) {
  if (t.rank() != 2 || metric.rank() != 2 || t.dim() != metric.dim())
    throw bad_input("tracefree_sym2: shape mismatch");
  const std::array<int, 2> sw{1, 0};
  if (symmetry_defect(t, sw, 1.0) > 1e-12) throw precondition("tracefree_sym2: input not symmetric");
  const DenseTensor inv = inverse_metric(metric);
  double tr = 0.0;
  for (int a = 0; a < t.dim(); ++a)
    for (int b = 0; b < t.dim(); ++b) tr += inv(a, b) * t(a, b);
  DenseTensor out = t;
  for (int a = 0; a < t.dim(); ++a)
    for (int b = 0; b < t.dim(); ++b) out(a, b) -= tr / t.dim() * metric(a, b);
  return out;
}

// Trace-free part of a totally symmetric rank-3 tensor.
inline DenseTensor tracefree_sym3(const DenseTensor& t, const DenseTensor& metric) {
  if (t.rank() != 3 || metric.rank() != 2 || t.dim() != metric.dim())
    throw bad_input("tracefree_sym3: shape mismatch");
  const int n = t.dim();
  const DenseTensor inv = inverse_metric(metric);
  std::vector<double> tr(static_cast<std::size_t>(n), 0.0);
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) tr[static_cast<std::size_t>(c)] += inv(a, b) * t(a, b, c);
  DenseTensor out = t;
  const double k = 1.0 / (n + 2);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        out(a, b, c) -= k * (metric(a, b) * tr[static_cast<std::size_t>(c)] +
                             metric(a, c) * tr[static_cast<std::size_t>(b)] +
                             metric(b, c) * tr[static_cast<std::size_t>(a)]);
  return out;
}

// Weyl-type projection of a [2,2]-symmetric rank-4 tensor; traces pair slots 1 and 3.
inline DenseTensor cartan_project_22(const DenseTensor& S, const DenseTensor& h) {
  if (S.rank() != 4 || h.rank() != 2 || S.dim() != h.dim())
    throw bad_input("cartan_project_22: shape mismatch");
  for (int s = 1; s < 4; ++s)
    if (S.valence(s) != S.valence(0)) throw bad_input("cartan_project_22: mixed valence");
  const std::array<int, 4> p01{1, 0, 2, 3}, p23{0, 1, 3, 2}, pairs{2, 3, 0, 1};
  if (symmetry_defect(S, p01, -1.0) > 1e-12 || symmetry_defect(S, p23, -1.0) > 1e-12 ||
      symmetry_defect(S, pairs, 1.0) > 1e-12)
    throw precondition("cartan_project_22: [2,2] symmetry violated");

  const bool upper = S.valence(0) == Valence::Upper;
  // Metric that contracts S's slots, and the one appearing in the h-terms.
  const DenseTensor hc = upper ? (h.valence(0) == Valence::Lower ? h : inverse_metric(h))
                               : (h.valence(0) == Valence::Upper ? h : inverse_metric(h));
  const DenseTensor hh = inverse_metric(hc);
  const int N = S.dim();
  const int n = N - 2;

  DenseTensor T(N, 2, S.valence(0));
  for (int a = 0; a < N; ++a)
    for (int c = 0; c < N; ++c) {
      double acc = 0.0;
      for (int b = 0; b < N; ++b)
        for (int d = 0; d < N; ++d) acc += hc(b, d) * S(a, b, c, d);
      T(a, c) = acc;
    }
  double full = 0.0;
  for (int a = 0; a < N; ++a)
    for (int c = 0; c < N; ++c) full += hc(a, c) * T(a, c);

  DenseTensor out = S;
  const double k1 = 1.0 / n, k2 = 1.0 / (n * (n + 1.0));
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < N; ++c)
        for (int d = 0; d < N; ++d)
          out(a, b, c, d) -= k1 * (T(a, c) * hh(b, d) - T(b, c) * hh(a, d) + T(b, d) * hh(a, c) -
                                   T(a, d) * hh(b, c)) -
                             k2 * full * (hh(a, c) * hh(b, d) - hh(b, c) * hh(a, d));
  return out;
}

// v1 ∧ ... ∧ vk as a sum over permutations with unit coefficients.
inline DenseTensor wedge(std::span<const DenseTensor> vs) {
  if (vs.empty()) throw bad_input("wedge: no factors");
  DenseTensor t = vs[0];
  for (std::size_t i = 1; i < vs.size(); ++i) t = outer(t, vs[i]);
  double fact = 1.0;
  for (std::size_t i = 2; i <= vs.size(); ++i) fact *= static_cast<double>(i);
  return antisymmetrize(t, all_slots(t)) * fact;
}
inline DenseTensor wedge(std::initializer_list<DenseTensor> vs) {
  return wedge(std::span<const DenseTensor>(vs.begin(), vs.size()));
}

}  // namespace tractor
