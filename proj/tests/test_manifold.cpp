#include "catch_amalgamated.hpp"
#include "test_util.h"

#include <mcf/core/error.h>
#include <mcf/manifold.h>

using namespace mcf;
using namespace mcf::manifold;
using Catch::Approx;

namespace {

Mat3 rot_x(double a) { return so3_exp(Vec3(a, 0, 0)); }
Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

// Wrap oracle: shift by whole units until the value is in range.
double wrap_by_shifting(double x) {
  while (x < 0.0)
    x += 1.0;
  while (x >= 1.0)
    x -= 1.0;
  return x;
}

} // namespace

TEST_CASE("wrap reduces into the unit interval", "[manifold]") {
  CHECK(wrap(Vec3::Zero()) == Vec3::Zero());
  const Vec3 w = wrap(Vec3(1.25, -0.25, 2.0));
  CHECK(w(0) == Approx(0.25));
  CHECK(w(1) == Approx(0.75));
  CHECK(w(2) == 0.0);

  const Vec3 tiny = wrap(Vec3(-1e-16, 0.5, 0.5));
  CHECK(tiny(0) == 0.0);
  CHECK(tiny(1) == 0.5);
  // naive shifting lands on the artefact 1 - 2^-53 instead of the 0 side
  const double shifted = wrap_by_shifting(-1e-16);
  CHECK(shifted < 1.0);
  CHECK(1.0 - shifted < kWrapSnap);

  Rng rng(3);
  for (int i = 0; i < 2000; i++) {
    const Vec3 f(rng.uniform(-5, 5), rng.uniform(-1e-15, 1e-15),
                 rng.uniform(-100, 100));
    const Vec3 w2 = wrap(f);
    for (int k = 0; k < 3; k++) {
      CHECK(w2(k) >= 0.0);
      CHECK(w2(k) < 1.0);
      double o = wrap_by_shifting(f(k));
      if (1.0 - o < kWrapSnap)
        o = 0.0;
      CHECK(std::abs(w2(k) - o) < 1e-12);
    }
  }
}

TEST_CASE("wrap rejects non-finite input", "[manifold]") {
  test::require_kind(ErrorKind::InvalidValue,
                     [] { wrap(Vec3(std::nan(""), 0, 0)); });
  test::require_kind(ErrorKind::InvalidValue,
                     [] { wrap(Vec3(0, INFINITY, 0)); });
}

TEST_CASE("torus displacement examples", "[manifold]") {
  const Vec3 d = torus_displacement(Vec3(0.9, 0.9, 0.9), Vec3(0.1, 0.1, 0.1));
  CHECK((d - Vec3(0.2, 0.2, 0.2)).norm() < 1e-12);
  CHECK(torus_displacement(Vec3(0.3, 0.4, 0.5), Vec3(0.3, 0.4, 0.5)).norm() ==
        0.0);
  const Vec3 tie = torus_displacement(Vec3(0.2, 0, 0), Vec3(0.7, 0, 0));
  CHECK(tie(0) == Approx(0.5).margin(1e-15));
  const Vec3 tie2 = torus_displacement(Vec3(0.7, 0, 0), Vec3(0.2, 0, 0));
  CHECK(tie2(0) == Approx(0.5).margin(1e-15));
  CHECK(torus_displacement(Vec3(0.25, 0, 0), Vec3(0.75, 0, 0))(0) == 0.5);
  CHECK(torus_displacement(Vec3(0.75, 0, 0), Vec3(0.25, 0, 0))(0) == 0.5);
}

TEST_CASE("torus displacement is the 27-image minimiser", "[manifold]") {
  Rng rng(11);
  for (int i = 0; i < 10000; i++) {
    const Vec3 f0(rng.uniform(), rng.uniform(), rng.uniform());
    const Vec3 f1(rng.uniform(), rng.uniform(), rng.uniform());
    Vec3 best = Vec3::Zero();
    double best_norm = INFINITY;
    for (int a = -1; a <= 1; a++)
      for (int b = -1; b <= 1; b++)
        for (int c = -1; c <= 1; c++) {
          const Vec3 d = f1 + Vec3(a, b, c) - f0;
          if (d.norm() < best_norm) {
            best_norm = d.norm();
            best = d;
          }
        }
    const Vec3 d = torus_displacement(f0, f1);
    REQUIRE((d - best).norm() < 1e-12);
    REQUIRE((wrap(f0 + d) - f1).cwiseAbs().maxCoeff() < 1e-12);
    for (int k = 0; k < 3; k++) {
      CHECK(d(k) > -0.5 + kWrapSnap);
      CHECK(d(k) <= 0.5);
    }
  }
}

TEST_CASE("so3 exp fixed values", "[manifold]") {
  CHECK(so3_exp(Vec3::Zero()) == Mat3::Identity());
  Mat3 expect;
  expect << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((so3_exp(Vec3(0, 0, kPi / 2)) - expect).norm() < 1e-15);
  // column action: e_x goes to e_y
  CHECK((so3_exp(Vec3(0, 0, kPi / 2)) * Vec3::UnitX() - Vec3::UnitY()).norm() <
        1e-15);
}

TEST_CASE("so3 exp/log roundtrip", "[manifold]") {
  Rng rng(5);
  double worst_v = 0.0, worst_r = 0.0;
  for (int i = 0; i < 10000; i++) {
    const Vec3 axis = test::random_unit(rng);
    const double angle = rng.uniform(0.0, kPi - 1e-3);
    const Vec3 v = angle * axis;
    const Mat3 r = so3_exp(v);
    REQUIRE(is_rotation(r));
    worst_v = std::max(worst_v, (so3_log(r) - v).norm());
    worst_r = std::max(worst_r, (so3_exp(so3_log(r)) - r).norm());
  }
  CHECK(worst_v < 1e-8);
  CHECK(worst_r < 1e-8);

  const Vec3 v(0.3, -0.2, 0.1);
  CHECK((so3_log(so3_exp(v)) - v).norm() < 1e-9);
}

TEST_CASE("so3 small-angle and near-pi branches", "[manifold]") {
  for (double a : {0.0, 1e-12, 1e-9, 1e-6, 5e-5, 1e-4, 2e-4}) {
    const Vec3 v = a * Vec3(1, 2, -2).normalized();
    const Mat3 r = so3_exp(v);
    CHECK(is_rotation(r));
    CHECK((so3_log(r) - v).norm() < 1e-12);
  }
  for (double eps : {0.0, 1e-12, 1e-8, 1e-5, 5e-4, 2e-3}) {
    const Vec3 axis = Vec3(0.3, -0.5, 0.8).normalized();
    const Vec3 v = (kPi - eps) * axis;
    const Mat3 r = so3_exp(v);
    const Vec3 back = so3_log(r);
    CHECK(back.norm() == Approx(kPi - eps).margin(1e-9));
    CHECK((so3_exp(back) - r).norm() < 1e-8);
    if (eps > 0.0)
      CHECK((back - v).norm() < 1e-6);
  }
}

TEST_CASE("so3 log of a half turn", "[manifold]") {
  const Vec3 v = so3_log(rot_x(kPi));
  CHECK(v(0) == Approx(kPi));
  CHECK(std::abs(v(1)) < 1e-12);
  CHECK(std::abs(v(2)) < 1e-12);
  // the same rotation reached from the other side gives the same branch
  const Vec3 w = so3_log(so3_exp(Vec3(-kPi, 0, 0)));
  CHECK((w - v).norm() < 1e-9);
  CHECK(so3_log(Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("so3 log rejects non-rotations", "[manifold]") {
  Mat3 m = Mat3::Identity();
  m(0, 0) = -1.0;
  test::require_kind(ErrorKind::InvalidRotation, [&] { so3_log(m); });
  test::require_kind(ErrorKind::InvalidRotation,
                     [] { so3_log(Mat3::Identity() * 1.01); });
}

TEST_CASE("so3 geodesic endpoints and midpoint", "[manifold]") {
  Rng rng(8);
  for (int i = 0; i < 200; i++) {
    const Mat3 r0 = test::random_rotation(rng);
    const Mat3 r1 = test::random_rotation(rng);
    CHECK((so3_geodesic(r0, r1, 0.0) - r0).norm() <= 1e-9);
    CHECK((so3_geodesic(r0, r1, 1.0) - r1).norm() <= 1e-9);
    const Mat3 mid = so3_geodesic(r0, r1, 0.5);
    CHECK(geodesic_distance_so3(r0, mid) ==
          Approx(0.5 * geodesic_distance_so3(r0, r1)).margin(1e-9));
  }
  const Mat3 half = so3_geodesic(Mat3::Identity(), rot_z(kPi / 2), 0.5);
  CHECK((half - rot_z(kPi / 4)).norm() < 1e-12);
  // exactly antipodal pair still yields a rotation
  const Mat3 anti = so3_geodesic(Mat3::Identity(), rot_x(kPi), 0.5);
  CHECK(is_rotation(anti));
  CHECK((anti - rot_x(kPi / 2)).norm() < 1e-12);
}

TEST_CASE("geodesic distance is a left-invariant metric", "[manifold]") {
  Rng rng(9);
  CHECK(geodesic_distance_so3(Mat3::Identity(), rot_x(kPi)) == Approx(kPi));
  for (int i = 0; i < 1000; i++) {
    const Mat3 a = test::random_rotation(rng);
    const Mat3 b = test::random_rotation(rng);
    const Mat3 c = test::random_rotation(rng);
    const Mat3 q = test::random_rotation(rng);
    CHECK(geodesic_distance_so3(a, a) < 1e-7);
    const double ab = geodesic_distance_so3(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= kPi + 1e-12);
    CHECK(std::abs(ab - geodesic_distance_so3(b, a)) < 1e-9);
    CHECK(std::abs(ab - geodesic_distance_so3(q * a, q * b)) < 1e-9);
    CHECK(geodesic_distance_so3(a, c) <=
          ab + geodesic_distance_so3(b, c) + 1e-9);
  }
}

TEST_CASE("axis-angle to spherical", "[manifold]") {
  const Spherical z = axis_angle_to_spherical(Vec3(0, 0, 0.7));
  CHECK(z.omega == Approx(0.7));
  CHECK(z.kappa == 0.0);
  CHECK(z.rho == 0.0);
  const Spherical x = axis_angle_to_spherical(Vec3(0.7, 0, 0));
  CHECK(x.omega == Approx(0.7));
  CHECK(x.kappa == Approx(kPi / 2));
  CHECK(x.rho == 0.0);
  const Spherical o = axis_angle_to_spherical(Vec3::Zero());
  CHECK(o.omega == 0.0);
  CHECK(o.kappa == 0.0);
  CHECK(o.rho == 0.0);

  Rng rng(10);
  for (int i = 0; i < 500; i++) {
    const Vec3 v = rng.uniform(0.01, kPi) * test::random_unit(rng);
    const Spherical s = axis_angle_to_spherical(v);
    CHECK(s.kappa >= 0.0);
    CHECK(s.kappa <= kPi);
    CHECK(s.rho >= 0.0);
    CHECK(s.rho < 2 * kPi);
    const Vec3 back = s.omega * Vec3(std::sin(s.kappa) * std::cos(s.rho),
                                     std::sin(s.kappa) * std::sin(s.rho),
                                     std::cos(s.kappa));
    CHECK((back - v).norm() < 1e-12);
  }
}

TEST_CASE("standardize lattice examples", "[manifold]") {
  const auto id = standardize_lattice(Mat3::Identity());
  CHECK((id.lattice - Mat3::Identity()).norm() < 1e-15);
  const auto d = standardize_lattice(Vec3(3, 2, 1).asDiagonal().toDenseMatrix());
  CHECK((d.lattice - Vec3(1, 2, 3).asDiagonal().toDenseMatrix()).norm() < 1e-12);
}

TEST_CASE("standardize lattice postconditions", "[manifold]") {
  Rng rng(12);
  for (int i = 0; i < 2000; i++) {
    const Mat3 l = test::random_lattice(rng);
    const auto s = standardize_lattice(l);
    const Mat3 &ls = s.lattice;
    CHECK(std::abs(ls(0, 1)) < 1e-12);
    CHECK(std::abs(ls(0, 2)) < 1e-12);
    CHECK(std::abs(ls(1, 2)) < 1e-12);
    CHECK(ls(0, 0) > 0);
    CHECK(ls(1, 1) > 0);
    CHECK(ls(2, 2) > 0);
    CHECK(ls.row(0).norm() <= ls.row(1).norm() + 1e-12);
    CHECK(ls.row(1).norm() <= ls.row(2).norm() + 1e-12);
    CHECK(std::abs(volume(ls) / std::abs(l.determinant()) - 1.0) < 1e-9);
    CHECK(is_rotation(s.rotation));
    CHECK((s.row_transform * l * s.rotation.transpose() - ls).norm() <
          1e-9 * l.norm());
    CHECK((s.row_transform.cwiseAbs().colwise().sum().array() == 1.0).all());

    const auto again = standardize_lattice(ls);
    CHECK((again.lattice - ls).norm() <= 1e-12 * ls.norm());
  }
}

TEST_CASE("standardize lattice rejects bad cells", "[manifold]") {
  Mat3 left = Mat3::Identity();
  left(2, 2) = -1;
  test::require_kind(ErrorKind::InvalidLattice,
                     [&] { standardize_lattice(left); });
  Mat3 flat = Mat3::Identity();
  flat.row(2) = flat.row(0) + flat.row(1);
  test::require_kind(ErrorKind::InvalidLattice,
                     [&] { standardize_lattice(flat); });
}

TEST_CASE("lattice parameters roundtrip", "[manifold]") {
  const Mat3 cubic = params_to_lattice({5, 5, 5, 90, 90, 90});
  CHECK((cubic - 5 * Mat3::Identity()).norm() < 1e-12);

  const Mat3 hex = params_to_lattice({3, 4, 5, 90, 90, 120});
  CHECK(hex(0, 1) == 0.0);
  CHECK(hex(0, 2) == 0.0);
  CHECK(hex(1, 2) == 0.0);
  const auto p = lattice_params(hex);
  CHECK(p.a == Approx(3).epsilon(1e-12));
  CHECK(p.b == Approx(4).epsilon(1e-12));
  CHECK(p.c == Approx(5).epsilon(1e-12));
  CHECK(p.alpha == Approx(90).epsilon(1e-12));
  CHECK(p.gamma == Approx(120).epsilon(1e-12));

  Rng rng(13);
  for (int i = 0; i < 1000; i++) {
    const Mat3 l = test::random_lattice(rng);
    const auto q = lattice_params(l);
    const auto r = lattice_params(params_to_lattice(q));
    CHECK(std::abs(q.a - r.a) < 1e-9);
    CHECK(std::abs(q.b - r.b) < 1e-9);
    CHECK(std::abs(q.c - r.c) < 1e-9);
    CHECK(std::abs(q.alpha - r.alpha) < 1e-9);
    CHECK(std::abs(q.beta - r.beta) < 1e-9);
    CHECK(std::abs(q.gamma - r.gamma) < 1e-9);
  }
}

TEST_CASE("impossible angle triples are rejected", "[manifold]") {
  // Gram matrix of the triple has a negative eigenvalue
  const double ca = std::cos(deg2rad(179.9)), cb = std::cos(deg2rad(1.0));
  Mat3 g;
  g << 1, cb, cb, cb, 1, ca, cb, ca, 1;
  Eigen::SelfAdjointEigenSolver<Mat3> es(g);
  CHECK(es.eigenvalues().minCoeff() < 0.0);
  test::require_kind(ErrorKind::InvalidParameter,
                     [] { params_to_lattice({1, 1, 1, 179.9, 1, 1}); });
  test::require_kind(ErrorKind::InvalidParameter,
                     [] { params_to_lattice({-1, 1, 1, 90, 90, 90}); });
}
