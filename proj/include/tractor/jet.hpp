#pragma once

#include <array>
#include <cmath>

#include "tractor/error.hpp"

namespace tractor {

// Truncated univariate Taylor series: c[k] = f^(k)(0) / k!.
template <int K>
struct Jet {
  std::array<double, K + 1> c{};

  Jet() = default;
  Jet(double v) { c[0] = v; }  // NOLINT: implicit lift of constants
  static Jet variable(double v, double slope) {
    Jet j(v);
    if constexpr (K >= 1) j.c[1] = slope;
    return j;
  }

  double value() const { return c[0]; }
  // k-th derivative at 0.
  double derivative(int k) const {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return c[static_cast<std::size_t>(k)] * f;
  }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i <= K; ++i) c[i] += o.c[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i <= K; ++i) c[i] -= o.c[i];
    return *this;
  }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) {
    for (auto& v : a.c) v = -v;
    return a;
  }
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= K; ++k) {
      double s = 0.0;
      for (int i = 0; i <= k; ++i) s += a.c[i] * b.c[k - i];
      r.c[k] = s;
    }
    return r;
  }
  friend Jet operator/(const Jet& a, const Jet& b) {
    if (b.c[0] == 0.0) throw bad_input("division by zero in expression");
    Jet q;
    for (int k = 0; k <= K; ++k) {
      double s = a.c[k];
      for (int i = 1; i <= k; ++i) s -= b.c[i] * q.c[k - i];
      q.c[k] = s / b.c[0];
    }
    return q;
  }
};

template <int K>
Jet<K> exp(const Jet<K>& a) {
  Jet<K> e;
  e.c[0] = std::exp(a.c[0]);
  for (int k = 1; k <= K; ++k) {
    double s = 0.0;
    for (int j = 1; j <= k; ++j) s += j * a.c[j] * e.c[k - j];
    e.c[k] = s / k;
  }
  return e;
}

template <int K>
Jet<K> log(const Jet<K>& a) {
  if (!(a.c[0] > 0.0)) throw bad_input("log of non-positive value in expression");
  Jet<K> l;
  l.c[0] = std::log(a.c[0]);
  for (int k = 1; k <= K; ++k) {
    double s = 0.0;
    for (int j = 1; j < k; ++j) s += j * l.c[j] * a.c[k - j];
    l.c[k] = (a.c[k] - s / k) / a.c[0];
  }
  return l;
}

template <int K>
void sincos(const Jet<K>& a, Jet<K>& s, Jet<K>& co) {
  s = Jet<K>();
  co = Jet<K>();
  s.c[0] = std::sin(a.c[0]);
  co.c[0] = std::cos(a.c[0]);
  for (int k = 1; k <= K; ++k) {
    double ss = 0.0, cc = 0.0;
    for (int j = 1; j <= k; ++j) {
      ss += j * a.c[j] * co.c[k - j];
      cc -= j * a.c[j] * s.c[k - j];
    }
    s.c[k] = ss / k;
    co.c[k] = cc / k;
  }
}

template <int K>
Jet<K> sin(const Jet<K>& a) {
  Jet<K> s, c;
  sincos(a, s, c);
  return s;
}

template <int K>
Jet<K> cos(const Jet<K>& a) {
  Jet<K> s, c;
  sincos(a, s, c);
  return c;
}

template <int K>
Jet<K> sqrt(const Jet<K>& a) {
  if (!(a.c[0] > 0.0)) throw bad_input("sqrt of non-positive value in expression");
  Jet<K> r;
  r.c[0] = std::sqrt(a.c[0]);
  for (int k = 1; k <= K; ++k) {
    double s = a.c[k];
    for (int j = 1; j < k; ++j) s -= r.c[j] * r.c[k - j];
    r.c[k] = s / (2.0 * r.c[0]);
  }
  return r;
}

template <int K>
Jet<K> pow(const Jet<K>& a, int m) {
  if (m < 0) return Jet<K>(1.0) / pow(a, -m);
  Jet<K> r(1.0), b = a;
  while (m > 0) {
    if (m & 1) r = r * b;
    b = b * b;
    m >>= 1;
  }
  return r;
}

template <int K>
Jet<K> pow(const Jet<K>& a, double p) {
  if (!(a.c[0] > 0.0)) throw bad_input("non-integer power of non-positive value in expression");
  Jet<K> r;
  r.c[0] = std::pow(a.c[0], p);
  for (int k = 1; k <= K; ++k) {
    double s = 0.0;
    for (int j = 1; j <= k; ++j) s += (p * j - (k - j)) * a.c[j] * r.c[k - j];
    r.c[k] = s / (k * a.c[0]);
  }
  return r;
}

template <int K>
Jet<K> pow(const Jet<K>& a, const Jet<K>& b) {
  return exp(b * log(a));
}

using Jet3 = Jet<3>;

}  // namespace tractor
