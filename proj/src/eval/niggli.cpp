#include <array>
#include <cmath>
#include <mcf/core/error.h>
#include <mcf/eval/niggli.h>

namespace mcf::eval {

namespace {
struct Metric {
  double A, B, C, xi, eta, zeta;
};

Metric metric(const Vec3 &a, const Vec3 &b, const Vec3 &c) {
  return {a.dot(a), b.dot(b), c.dot(c), 2 * b.dot(c), 2 * a.dot(c), 2 * a.dot(b)};
}

int tsign(double x, double eps) { return x > eps ? 1 : (x < -eps ? -1 : 0); }
int nzsign(double x) { return x < 0 ? -1 : 1; }

double epsilon(const Lattice &l, double rel_tol) {
  return rel_tol * std::pow(std::abs(l.determinant()), 2.0 / 3.0);
}
} // namespace

Lattice niggli_reduce(const Lattice &l, double rel_tol) {
  if (!(std::abs(l.determinant()) > 1e-12))
    throw Error(ErrorKind::InvalidLattice, "niggli: singular lattice");
  const double eps = epsilon(l, rel_tol);
  Vec3 a = l.row(0).transpose(), b = l.row(1).transpose(), c = l.row(2).transpose();

  for (int iter = 0; iter < 10000; iter++) {
    Metric m = metric(a, b, c);
    // A1
    if (m.A > m.B + eps ||
        (std::abs(m.A - m.B) <= eps && std::abs(m.xi) > std::abs(m.eta) + eps)) {
      std::swap(a, b);
      c = -c;
      continue;
    }
    // A2
    if (m.B > m.C + eps ||
        (std::abs(m.B - m.C) <= eps && std::abs(m.eta) > std::abs(m.zeta) + eps)) {
      std::swap(b, c);
      a = -a;
      continue;
    }
    // A3 / A4: sign normalisation of the off-diagonal terms
    const int sx = tsign(m.xi, eps), se = tsign(m.eta, eps), sz = tsign(m.zeta, eps);
    const bool all_positive = sx * se * sz == 1;
    bool fixed = false;
    for (int pat = 0; pat < 8 && !fixed; pat++) {
      const double i = (pat & 1) ? -1.0 : 1.0, j = (pat & 2) ? -1.0 : 1.0,
                   k = (pat & 4) ? -1.0 : 1.0;
      const double x = j * k * m.xi, e = i * k * m.eta, z = i * j * m.zeta;
      const bool ok = all_positive ? (x > 0 && e > 0 && z > 0)
                                   : (x <= eps && e <= eps && z <= eps);
      if (ok) {
        a *= i;
        b *= j;
        c *= k;
        fixed = true;
      }
    }
    m = metric(a, b, c);
    // A5
    if (std::abs(m.xi) > m.B + eps ||
        (std::abs(m.xi - m.B) <= eps && 2 * m.eta < m.zeta - eps) ||
        (std::abs(m.xi + m.B) <= eps && m.zeta < -eps)) {
      c -= nzsign(m.xi) * b;
      continue;
    }
    // A6
    if (std::abs(m.eta) > m.A + eps ||
        (std::abs(m.eta - m.A) <= eps && 2 * m.xi < m.zeta - eps) ||
        (std::abs(m.eta + m.A) <= eps && m.zeta < -eps)) {
      c -= nzsign(m.eta) * a;
      continue;
    }
    // A7
    if (std::abs(m.zeta) > m.A + eps ||
        (std::abs(m.zeta - m.A) <= eps && 2 * m.xi < m.eta - eps) ||
        (std::abs(m.zeta + m.A) <= eps && m.eta < -eps)) {
      b -= nzsign(m.zeta) * a;
      continue;
    }
    // A8
    const double s = m.xi + m.eta + m.zeta + m.A + m.B;
    if (s < -eps || (std::abs(s) <= eps && 2 * (m.A + m.eta) + m.zeta > eps)) {
      c += a + b;
      continue;
    }
    Lattice out;
    out.row(0) = a.transpose();
    out.row(1) = b.transpose();
    out.row(2) = c.transpose();
    if (out.determinant() < 0)
      out = -out;
    return out;
  }
  throw Error(ErrorKind::InvalidLattice, "niggli: reduction did not converge");
}

bool is_niggli_reduced(const Lattice &l, double rel_tol) {
  const double eps = epsilon(l, rel_tol);
  const Metric m = metric(l.row(0).transpose(), l.row(1).transpose(),
                          l.row(2).transpose());
  if (m.A > m.B + eps || m.B > m.C + eps)
    return false;
  if (std::abs(m.xi) > m.B + eps || std::abs(m.eta) > m.A + eps ||
      std::abs(m.zeta) > m.A + eps)
    return false;
  const bool pos = m.xi > eps && m.eta > eps && m.zeta > eps;
  const bool nonpos = m.xi <= eps && m.eta <= eps && m.zeta <= eps;
  if (!pos && !nonpos)
    return false;
  if (nonpos && m.xi + m.eta + m.zeta + m.A + m.B < -eps)
    return false;
  return true;
}

} // namespace mcf::eval
