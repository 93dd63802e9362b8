#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <mcf/core/error.h>
#include <mcf/manifold.h>
#include <mcf/so3_kernels.h>
#include <numeric>

namespace mcf::manifold {

namespace {

so3::M3<double> to_array(const Mat3 &m) {
  so3::M3<double> a;
  for (int i = 0; i < 3; i++)
    for (int j = 0; j < 3; j++)
      a[3 * i + j] = m(i, j);
  return a;
}

} // namespace

FracPoint wrap(const Vec3 &f) {
  if (!f.allFinite())
    throw Error(ErrorKind::InvalidValue,
                fmt::format("cannot wrap non-finite fractional coordinate "
                            "({}, {}, {})",
                            f(0), f(1), f(2)));
  FracPoint out;
  for (int i = 0; i < 3; i++) {
    double x = f(i) - std::floor(f(i));
    // -tiny - floor(-tiny) rounds to 1.0 or to just below it
    if (x >= 1.0 - kWrapSnap)
      x = 0.0;
    out(i) = x + 0.0; // normalise -0.0
  }
  return out;
}

Vec3 torus_displacement(const FracPoint &f0, const FracPoint &f1) {
  Vec3 d = f1 - f0;
  if (!d.allFinite())
    throw Error(ErrorKind::InvalidValue, "non-finite torus displacement");
  for (int i = 0; i < 3; i++) {
    d(i) -= std::ceil(d(i) - 0.5);
    // ties within rounding of -0.5 take the +0.5 representative
    if (d(i) < -0.5 + kWrapSnap)
      d(i) += 1.0;
  }
  return d;
}

Mat3 hat(const Vec3 &v) {
  Mat3 k;
  k << 0.0, -v(2), v(1), v(2), 0.0, -v(0), -v(1), v(0), 0.0;
  return k;
}

Vec3 vee(const Mat3 &m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

bool is_rotation(const Mat3 &m, double tol) {
  if (!m.allFinite())
    return false;
  return (m.transpose() * m - Mat3::Identity()).norm() <= tol &&
         std::abs(m.determinant() - 1.0) <= tol;
}

void check_rotation(const Mat3 &m, double tol) {
  if (!is_rotation(m, tol))
    throw Error(ErrorKind::InvalidRotation,
                fmt::format("matrix is not a rotation (|R^T R - I| = {:.3e}, "
                            "det = {:.12f})",
                            (m.transpose() * m - Mat3::Identity()).norm(),
                            m.determinant()));
}

Rotation nearest_rotation(const Mat3 &m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0)
    u.col(2) *= -1.0;
  return u * v.transpose();
}

Rotation so3_exp(const AxisAngle &v) {
  const auto r = so3::exp_kernel<double>({v(0), v(1), v(2)});
  Rotation out;
  for (int i = 0; i < 3; i++)
    for (int j = 0; j < 3; j++)
      out(i, j) = r[3 * i + j];
  return out;
}

AxisAngle so3_log(const Rotation &r) {
  check_rotation(r, 1e-6);
  const auto v = so3::log_kernel<double>(to_array(r));
  return AxisAngle(v[0], v[1], v[2]);
}

Rotation so3_geodesic(const Rotation &r0, const Rotation &r1, double t) {
  if (t == 0.0)
    return r0;
  return r0 * so3_exp(t * so3_log(r0.transpose() * r1));
}

double geodesic_distance_so3(const Rotation &r0, const Rotation &r1) {
  return so3_log(r0.transpose() * r1).norm();
}

Spherical axis_angle_to_spherical(const AxisAngle &v) {
  Spherical s;
  s.omega = v.norm();
  if (s.omega == 0.0)
    return s;
  const Vec3 e = v / s.omega;
  s.kappa = std::acos(std::clamp(e(2), -1.0, 1.0));
  double rho = std::atan2(e(1), e(0));
  if (rho < 0.0)
    rho += 2.0 * kPi;
  if (rho >= 2.0 * kPi)
    rho = 0.0;
  s.rho = rho + 0.0;
  return s;
}

StandardizedLattice standardize_lattice(const Lattice &l) {
  const double scale = l.row(0).norm() * l.row(1).norm() * l.row(2).norm();
  const double det = l.determinant();
  if (!l.allFinite() || scale <= 0.0 || det <= 1e-12 * scale)
    throw Error(ErrorKind::InvalidLattice,
                fmt::format("lattice must be right-handed and non-singular "
                            "(det = {:.6g})",
                            det));

  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return l.row(i).squaredNorm() < l.row(j).squaredNorm();
  });
  Mat3 perm = Mat3::Zero();
  for (int i = 0; i < 3; i++)
    perm(i, order[i]) = 1.0;
  if (perm.determinant() < 0.0)
    perm.row(2) *= -1.0;
  const Mat3 lp = perm * l;

  // Gram-Schmidt on the rows: an orthogonal-triangular factorisation of
  // lp^T with a positive-diagonal triangular factor.
  const Vec3 r1 = lp.row(0).transpose();
  const Vec3 r2 = lp.row(1).transpose();
  const Vec3 e1 = r1 / r1.norm();
  Vec3 e2 = r2 - r2.dot(e1) * e1;
  e2 /= e2.norm();
  const Vec3 e3 = e1.cross(e2);

  StandardizedLattice out;
  out.rotation.row(0) = e1.transpose();
  out.rotation.row(1) = e2.transpose();
  out.rotation.row(2) = e3.transpose();
  out.lattice = lp * out.rotation.transpose();
  out.lattice(0, 1) = 0.0;
  out.lattice(0, 2) = 0.0;
  out.lattice(1, 2) = 0.0;
  out.row_transform = perm;
  return out;
}

LatticeParams lattice_params(const Lattice &l) {
  const Vec3 a = l.row(0).transpose(), b = l.row(1).transpose(),
             c = l.row(2).transpose();
  auto angle = [](const Vec3 &x, const Vec3 &y) {
    return rad2deg(
        std::acos(std::clamp(x.dot(y) / (x.norm() * y.norm()), -1.0, 1.0)));
  };
  return {a.norm(),    b.norm(),    c.norm(),
          angle(b, c), angle(a, c), angle(a, b)};
}

Lattice params_to_lattice(const LatticeParams &p) {
  auto bad = [&](const std::string &why) {
    return Error(ErrorKind::InvalidParameter,
                 fmt::format("invalid lattice parameters ({}, {}, {}, {}, {}, "
                             "{}): {}",
                             p.a, p.b, p.c, p.alpha, p.beta, p.gamma, why));
  };
  if (!(p.a > 0.0 && p.b > 0.0 && p.c > 0.0))
    throw bad("lengths must be positive");
  for (double ang : {p.alpha, p.beta, p.gamma})
    if (!(ang > 0.0 && ang < 180.0))
      throw bad("angles must lie in (0, 180)");
  const double ca = std::cos(deg2rad(p.alpha)), cb = std::cos(deg2rad(p.beta)),
               cg = std::cos(deg2rad(p.gamma)), sg = std::sin(deg2rad(p.gamma));
  // determinant of the normalised Gram matrix
  const double g = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg;
  if (g <= 1e-12)
    throw bad("Gram matrix is not positive definite");
  Lattice l = Lattice::Zero();
  l(0, 0) = p.a;
  l(1, 0) = p.b * cg;
  l(1, 1) = p.b * sg;
  l(2, 0) = p.c * cb;
  l(2, 1) = p.c * (ca - cb * cg) / sg;
  l(2, 2) = p.c * std::sqrt(g) / sg;
  return l;
}

} // namespace mcf::manifold
