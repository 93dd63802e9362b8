#pragma once
#include <array>
#include <cmath>

namespace mcf::ad {

/// Forward-mode dual number carrying N directional derivatives. Used to get
/// exact per-row Jacobians of the small SO(3) kernels in reverse mode.
template <int N> struct Dual {
  double v{0.0};
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}

  static Dual variable(double value, int slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }
};

template <int N> Dual<N> operator+(const Dual<N> &a, const Dual<N> &b) {
  Dual<N> r(a.v + b.v);
  for (int i = 0; i < N; i++)
    r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <int N> Dual<N> operator-(const Dual<N> &a, const Dual<N> &b) {
  Dual<N> r(a.v - b.v);
  for (int i = 0; i < N; i++)
    r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <int N> Dual<N> operator-(const Dual<N> &a) {
  Dual<N> r(-a.v);
  for (int i = 0; i < N; i++)
    r.d[i] = -a.d[i];
  return r;
}
template <int N> Dual<N> operator*(const Dual<N> &a, const Dual<N> &b) {
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; i++)
    r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <int N> Dual<N> operator/(const Dual<N> &a, const Dual<N> &b) {
  Dual<N> r(a.v / b.v);
  const double inv = 1.0 / b.v;
  for (int i = 0; i < N; i++)
    r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}
template <int N> Dual<N> operator*(double s, const Dual<N> &a) {
  Dual<N> r(s * a.v);
  for (int i = 0; i < N; i++)
    r.d[i] = s * a.d[i];
  return r;
}
template <int N> Dual<N> operator*(const Dual<N> &a, double s) { return s * a; }
template <int N> Dual<N> operator+(const Dual<N> &a, double s) {
  Dual<N> r = a;
  r.v += s;
  return r;
}
template <int N> Dual<N> operator+(double s, const Dual<N> &a) { return a + s; }
template <int N> Dual<N> operator-(const Dual<N> &a, double s) { return a + (-s); }
template <int N> Dual<N> operator-(double s, const Dual<N> &a) { return (-a) + s; }

namespace detail {
template <int N> Dual<N> chain(const Dual<N> &a, double value, double deriv) {
  Dual<N> r(value);
  for (int i = 0; i < N; i++)
    r.d[i] = deriv * a.d[i];
  return r;
}
} // namespace detail

template <int N> Dual<N> sin(const Dual<N> &a) {
  return detail::chain(a, std::sin(a.v), std::cos(a.v));
}
template <int N> Dual<N> cos(const Dual<N> &a) {
  return detail::chain(a, std::cos(a.v), -std::sin(a.v));
}
template <int N> Dual<N> sqrt(const Dual<N> &a) {
  const double s = std::sqrt(a.v);
  return detail::chain(a, s, 0.5 / s);
}
template <int N> Dual<N> atan2(const Dual<N> &y, const Dual<N> &x) {
  const double r2 = x.v * x.v + y.v * y.v;
  Dual<N> r(std::atan2(y.v, x.v));
  for (int i = 0; i < N; i++)
    r.d[i] = (x.v * y.d[i] - y.v * x.d[i]) / r2;
  return r;
}

inline double value_of(double x) { return x; }
template <int N> double value_of(const Dual<N> &x) { return x.v; }

} // namespace mcf::ad
