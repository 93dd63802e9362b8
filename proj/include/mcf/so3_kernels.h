#pragma once
// Scalar-generic SO(3) exp/log kernels. Instantiated with double for the
// manifold operations and with ad::Dual for exact Jacobians in reverse mode.
// Matrices are 3x3 row-major arrays; rotations act on column vectors.
#include <array>
#include <cmath>
#include <mcf/ad/dual.h>

namespace mcf::so3 {

constexpr double kSmallAngle = 1e-4;
constexpr double kNearPi = 1e-3;

template <typename T> using M3 = std::array<T, 9>;
template <typename T> using V3 = std::array<T, 3>;

template <typename T> M3<T> exp_kernel(const V3<T> &v) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  using ad::value_of;
  const T theta2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  T a, b; // sin(w)/w and (1 - cos(w))/w^2
  if (value_of(theta2) < kSmallAngle * kSmallAngle) {
    const T t4 = theta2 * theta2;
    a = T(1.0) - theta2 * (1.0 / 6.0) + t4 * (1.0 / 120.0);
    b = T(0.5) - theta2 * (1.0 / 24.0) + t4 * (1.0 / 720.0);
  } else {
    const T theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (T(1.0) - cos(theta)) / theta2;
  }
  // R = I + a K + b K^2, K = [v]_x, K^2 = v v^T - |v|^2 I
  M3<T> r;
  r[0] = T(1.0) + b * (v[0] * v[0] - theta2);
  r[4] = T(1.0) + b * (v[1] * v[1] - theta2);
  r[8] = T(1.0) + b * (v[2] * v[2] - theta2);
  r[1] = b * v[0] * v[1] - a * v[2];
  r[3] = b * v[0] * v[1] + a * v[2];
  r[2] = b * v[0] * v[2] + a * v[1];
  r[6] = b * v[0] * v[2] - a * v[1];
  r[5] = b * v[1] * v[2] - a * v[0];
  r[7] = b * v[1] * v[2] + a * v[0];
  return r;
}

/// Canonical logarithm with angle in [0, pi]. At exactly pi the axis sign is
/// chosen so its largest-magnitude component is positive.
template <typename T> V3<T> log_kernel(const M3<T> &r) {
  using std::atan2;
  using std::sqrt;
  using ad::value_of;
  // vee(R - R^T) = 2 sin(w) e
  const V3<T> w{r[7] - r[5], r[2] - r[6], r[3] - r[1]};
  const T c = (r[0] + r[4] + r[8] - 1.0) * 0.5;
  const T s2 = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) * 0.25;
  const double cv = value_of(c);

  // small angle: w^2 = acos(c)^2 ~ 2x + x^2/3 + 8x^3/45 with x = 1 - c
  if (1.0 - cv < 0.5 * kSmallAngle * kSmallAngle) {
    const T x = T(1.0) - c;
    const T theta2 = 2.0 * x + x * x * (1.0 / 3.0) + x * x * x * (8.0 / 45.0);
    const T f = T(0.5) + theta2 * (1.0 / 12.0) + theta2 * theta2 * (7.0 / 720.0);
    return {f * w[0], f * w[1], f * w[2]};
  }
  const T sinw = value_of(s2) > 0.0 ? sqrt(s2) : T(0.0);
  const T theta = atan2(sinw, c);
  const double tv = value_of(theta);
  if (tv < 3.14159265358979323846 - kNearPi) {
    const T f = theta / (2.0 * sinw);
    return {f * w[0], f * w[1], f * w[2]};
  }
  // near pi: e e^T = (B - c I) / (1 - c), B = (R + R^T) / 2
  const T denom = T(1.0) - c;
  const std::array<T, 3> diag{(r[0] - c) / denom, (r[4] - c) / denom,
                              (r[8] - c) / denom};
  int k = 0;
  for (int i = 1; i < 3; i++)
    if (value_of(diag[i]) > value_of(diag[k]))
      k = i;
  const T ek = sqrt(diag[k]);
  V3<T> e;
  for (int i = 0; i < 3; i++) {
    if (i == k) {
      e[i] = ek;
    } else {
      const T bki = (r[3 * k + i] + r[3 * i + k]) * 0.5;
      e[i] = bki / (denom * ek);
    }
  }
  // sign: agree with the antisymmetric part when it is resolvable
  const double dot =
      value_of(e[0]) * value_of(w[0]) + value_of(e[1]) * value_of(w[1]) +
      value_of(e[2]) * value_of(w[2]);
  bool flip = false;
  if (std::abs(dot) > 1e-12) {
    flip = dot < 0.0;
  } else {
    int big = 0;
    for (int i = 1; i < 3; i++)
      if (std::abs(value_of(e[i])) > std::abs(value_of(e[big])) + 1e-12)
        big = i;
    flip = value_of(e[big]) < 0.0;
  }
  if (flip)
    for (auto &x : e)
      x = -x;
  return {theta * e[0], theta * e[1], theta * e[2]};
}

} // namespace mcf::so3
