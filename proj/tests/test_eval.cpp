#include "catch_amalgamated.hpp"
#include "test_util.h"

#include <cmath>
#include <mcf/elements.h>
#include <mcf/eval/matcher.h>
#include <mcf/eval/niggli.h>
#include <mcf/manifold.h>
#include <mcf/synthetic.h>

using namespace mcf;
using namespace mcf::eval;
using Catch::Approx;

namespace {

Mat3 random_unimodular(Rng &rng) {
  for (;;) {
    Mat3 m;
    for (int i = 0; i < 3; i++)
      for (int j = 0; j < 3; j++)
        m(i, j) = static_cast<double>(static_cast<int>(rng.index(5)) - 2);
    if (std::abs(std::abs(m.determinant()) - 1.0) < 1e-9 && m.determinant() > 0)
      return m;
  }
}

double spacing(const crystal::AtomicStructure &s) {
  return std::cbrt(std::abs(s.lattice.determinant()) / static_cast<double>(s.size()));
}

/// One atom of every tabulated element at random positions in a long
/// tetragonal cell, so displacements along the long axis stay well inside
/// the minimum image.
crystal::AtomicStructure distinct_species(Rng &rng, double side, double length) {
  crystal::AtomicStructure s;
  s.id = "distinct";
  s.lattice = Vec3(side, side, length).asDiagonal();
  const auto n = static_cast<Eigen::Index>(element_table().size());
  s.cart.resize(n, 3);
  for (Eigen::Index i = 0; i < n; i++) {
    s.species.emplace_back(element_table()[static_cast<std::size_t>(i)].symbol);
    s.cart.row(i) << rng.uniform(0.0, side), rng.uniform(0.0, side),
        rng.uniform(0.0, length);
  }
  return s;
}

/// Displaces atoms in +/- pairs so the mean displacement is zero and every
/// atom moves by exactly `amount`.
crystal::AtomicStructure paired_displacement(const crystal::AtomicStructure &s,
                                             const std::vector<Vec3> &dirs,
                                             double amount) {
  auto out = s;
  for (Eigen::Index i = 0; i + 1 < static_cast<Eigen::Index>(s.size()); i += 2) {
    const Vec3 &d = dirs[static_cast<std::size_t>(i / 2)];
    out.cart.row(i) += amount * d.transpose();
    out.cart.row(i + 1) -= amount * d.transpose();
  }
  return out;
}

crystal::AtomicStructure molecular(std::uint64_t seed, const std::string &mol = "benzene") {
  Rng rng(seed);
  synthetic::CrystalOptions opts;
  opts.z = 2;
  return synthetic::random_crystal(synthetic::molecule(mol), opts, rng, mol);
}

} // namespace

TEST_CASE("niggli reduction", "[eval][niggli]") {
  Rng rng(1);
  for (int trial = 0; trial < 200; trial++) {
    const Lattice l = test::random_lattice(rng);
    const Lattice r = niggli_reduce(l);
    CHECK(is_niggli_reduced(r));
    CHECK(std::abs(r.determinant()) == Approx(std::abs(l.determinant())).epsilon(1e-9));
    // same lattice: integer change of basis
    const Mat3 m = r * l.inverse();
    CHECK((m - m.array().round().matrix()).norm() < 1e-6);

    const Lattice other = random_unimodular(rng) * l;
    const Lattice r2 = niggli_reduce(other);
    const auto p1 = manifold::lattice_params(r), p2 = manifold::lattice_params(r2);
    CHECK(p1.a == Approx(p2.a).epsilon(1e-6));
    CHECK(p1.b == Approx(p2.b).epsilon(1e-6));
    CHECK(p1.c == Approx(p2.c).epsilon(1e-6));
  }
  CHECK(is_niggli_reduced(Lattice(4.0 * Lattice::Identity())));
  Lattice skewed = Lattice::Identity();
  skewed.row(1) << 3.0, 1.0, 0.0;
  CHECK_FALSE(is_niggli_reduced(skewed));
}

TEST_CASE("self match and rigid translations", "[eval][matcher]") {
  Rng rng(2);
  for (const char *name : {"benzene", "methanol", "chfclbr"}) {
    const auto s = molecular(rng.index(1000) + 1, name);
    const auto self = structures_match(s, s);
    CHECK(self.matched);
    CHECK(self.rms < 1e-9);

    auto moved = s;
    const RowVec3 shift = RowVec3(rng.uniform(), rng.uniform(), rng.uniform()) * s.lattice;
    moved.cart.rowwise() += shift;
    const auto rep = structures_match(s, moved);
    CHECK(rep.matched);
    CHECK(rep.rms < 1e-9);

    // same crystal in another basis
    auto rebased = s;
    rebased.lattice = random_unimodular(rng) * s.lattice;
    const auto rb = structures_match(s, rebased);
    CHECK(rb.matched);
    CHECK(rb.rms < 1e-9);
  }
}

TEST_CASE("composition mismatch never matches", "[eval][matcher]") {
  const auto s = molecular(3);
  auto other = s;
  other.species[0] = "N";
  CHECK_FALSE(structures_match(s, other).matched);
  auto fewer = s;
  fewer.species.pop_back();
  fewer.cart.conservativeResize(fewer.cart.rows() - 1, 3);
  CHECK_FALSE(structures_match(s, fewer).matched);
}

TEST_CASE("one large displacement breaks the match", "[eval][matcher]") {
  Rng rng(4);
  const auto s = distinct_species(rng, 3.0, 40.0);
  const MatchCriteria crit;
  auto moved = s;
  const double n = static_cast<double>(s.size());
  const Vec3 dir(0.0, 0.0, 1.0);
  moved.cart.row(0) += 2.0 * crit.stol * spacing(s) * dir.transpose();
  // oracle: after removing the mean the moved atom is off by (1 - 1/N) of it
  const double expect = 2.0 * crit.stol * (1.0 - 1.0 / n);
  const auto rep = structures_match(s, moved, crit);
  CHECK_FALSE(rep.matched);
  CHECK(rep.max_dist == Approx(expect).epsilon(1e-6));
}

TEST_CASE("match is symmetric", "[eval][matcher]") {
  Rng rng(5);
  const auto base = molecular(5);
  for (int trial = 0; trial < 10; trial++) {
    auto other = base;
    for (Eigen::Index i = 0; i < other.cart.rows(); i++)
      other.cart.row(i) += rng.uniform(0.0, 0.6) * test::random_unit(rng).transpose();
    other.lattice *= rng.uniform(0.97, 1.03);
    const auto ab = structures_match(base, other);
    const auto ba = structures_match(other, base);
    CHECK(ab.matched == ba.matched);
    CHECK(ab.rms == Approx(ba.rms).margin(1e-12));
  }
}

TEST_CASE("perturbation ladder threshold", "[eval][matcher]") {
  Rng rng(6);
  const auto s = distinct_species(rng, 3.0, 40.0);
  std::vector<Vec3> dirs;
  for (std::size_t i = 0; i < s.size() / 2; i++)
    dirs.push_back(Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 1.0).normalized());
  const double unit = spacing(s);
  for (double stol = 0.5; stol < 1.25; stol += 0.1) {
    MatchCriteria crit;
    crit.stol = stol;
    for (int step = 30; step <= 140; step++) {
      const double eps = step / 100.0;
      const auto rep = structures_match(s, paired_displacement(s, dirs, eps * unit), crit);
      INFO("stol " << stol << " eps " << eps << " max " << rep.max_dist);
      if (eps <= stol - 0.01)
        CHECK(rep.matched);
      if (eps >= stol + 0.01)
        CHECK_FALSE(rep.matched);
    }
  }
}

TEST_CASE("loosening stol never loses a match", "[eval][matcher]") {
  Rng rng(7);
  const auto base = molecular(7);
  for (int trial = 0; trial < 6; trial++) {
    auto other = base;
    const double amp = 0.3 * trial;
    for (Eigen::Index i = 0; i < other.cart.rows(); i++)
      other.cart.row(i) += amp * test::random_unit(rng).transpose();
    bool seen = false;
    for (int k = 0; k <= 7; k++) {
      MatchCriteria crit;
      crit.stol = 0.5 + 0.1 * k;
      const bool m = structures_match(base, other, crit).matched;
      CHECK((m || !seen));
      seen = seen || m;
    }
  }
}

TEST_CASE("lattice tolerance gates matching", "[eval][matcher]") {
  const auto s = molecular(8);
  auto stretched = s;
  Mat3 stretch = Mat3::Identity();
  stretch(0, 0) = 1.5;
  stretched.lattice = s.lattice * stretch;
  stretched.cart = s.cart * stretch;
  const auto rep = structures_match(s, stretched);
  CHECK_FALSE(rep.matched);
  MatchCriteria bad;
  bad.stol = 0.0;
  test::require_kind(ErrorKind::InvalidParameter, [&] { structures_match(s, s, bad); });
}

TEST_CASE("match rate over targets", "[eval][rate]") {
  const auto a = molecular(10), b = molecular(11), c = molecular(12);
  auto ra = a, rb = b, rc = c;
  ra.id = "a";
  rb.id = "b";
  rc.id = "c";
  std::vector<crystal::AtomicStructure> refs{ra, rb, rc};

  std::vector<TargetPredictions> all{{"a", {a}}, {"b", {b}}, {"c", {c}}};
  CHECK(match_rate(all, refs).rate == 1.0);

  std::vector<TargetPredictions> one{{"a", {b, a}}, {"b", {c}}, {"c", {}}};
  const auto r = match_rate(one, refs);
  CHECK(r.rate == Approx(1.0 / 3.0));
  CHECK(r.targets[0].first_match == 1);
  CHECK(r.targets[2].n_samples == 0);
  CHECK_FALSE(r.targets[2].matched);

  CHECK(match_rate({}, {}).rate == 0.0);
  std::vector<TargetPredictions> empty{{"a", {}}, {"b", {}}, {"c", {}}};
  CHECK(match_rate(empty, refs).rate == 0.0);

  std::vector<TargetPredictions> wrong{{"a", {a}}, {"x", {b}}, {"c", {c}}};
  test::require_kind(ErrorKind::InvalidInput, [&] { match_rate(wrong, refs); });
  std::vector<TargetPredictions> partial{{"a", {a}}};
  test::require_kind(ErrorKind::InvalidInput, [&] { match_rate(partial, refs); });
}

TEST_CASE("volume deviation", "[eval][volume]") {
  const Lattice ref = 5.0 * Lattice::Identity();
  const Lattice big = std::cbrt(1.1) * ref, small = std::cbrt(0.9) * ref;
  CHECK(volume_rmad({ref, ref}, {ref, ref}).mean_percent == 0.0);
  CHECK(volume_rmad({big, big}, {ref, ref}).mean_percent == Approx(10.0));
  const auto mixed = volume_rmad({big, small}, {ref, ref});
  CHECK(mixed.mean_percent == Approx(10.0));
  CHECK(mixed.per_structure.size() == 2);
  CHECK(volume_rmad({}, {}).mean_percent == 0.0);
  test::require_kind(ErrorKind::InvalidInput, [&] { volume_rmad({ref}, {}); });
}
