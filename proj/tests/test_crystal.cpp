#include "catch_amalgamated.hpp"
#include "test_util.h"

#include <mcf/crystal.h>
#include <mcf/elements.h>
#include <mcf/synthetic.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace mcf;
using namespace mcf::crystal;
using Catch::Approx;

namespace {

AtomicStructure cubic(double a, std::vector<std::string> species,
                      std::vector<RowVec3> pos) {
  AtomicStructure s;
  s.id = "test";
  s.species = std::move(species);
  s.lattice = a * Mat3::Identity();
  s.cart.resize(static_cast<Eigen::Index>(pos.size()), 3);
  for (std::size_t i = 0; i < pos.size(); i++)
    s.cart.row(static_cast<Eigen::Index>(i)) = pos[i];
  return s;
}

AtomicStructure place(const synthetic::MoleculeTemplate &m, const Mat3 &lattice,
                      const std::vector<std::pair<RowVec3, Mat3>> &copies) {
  AtomicStructure s;
  s.id = m.name;
  s.lattice = lattice;
  const Eigen::Index n = m.coords.rows();
  s.cart.resize(n * static_cast<Eigen::Index>(copies.size()), 3);
  const RowVec3 c = m.coords.colwise().mean();
  Eigen::Index row = 0;
  for (const auto &[centre, rot] : copies) {
    for (Eigen::Index i = 0; i < n; i++)
      s.cart.row(row++) = centre + (m.coords.row(i) - c) * rot.transpose();
    s.species.insert(s.species.end(), m.species.begin(), m.species.end());
  }
  return s;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x)
      x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Components on an explicit 3x3x3 supercell with plain Cartesian distances,
// folded back onto the original atom indices.
std::set<std::set<int>> supercell_components(const AtomicStructure &s,
                                             const RadiiTable &radii) {
  const int n = static_cast<int>(s.size());
  std::vector<RowVec3> pos;
  std::vector<int> origin;
  for (int a = -1; a <= 1; a++)
    for (int b = -1; b <= 1; b++)
      for (int c = -1; c <= 1; c++)
        for (int i = 0; i < n; i++) {
          pos.push_back(s.cart.row(i) + RowVec3(a, b, c) * s.lattice);
          origin.push_back(i);
        }
  UnionFind super(pos.size());
  for (std::size_t i = 0; i < pos.size(); i++)
    for (std::size_t j = i + 1; j < pos.size(); j++)
      if ((pos[i] - pos[j]).norm() <=
          radii.cutoff(s.species[origin[i]], s.species[origin[j]]))
        super.unite(static_cast<int>(i), static_cast<int>(j));
  UnionFind folded(s.size());
  std::vector<int> first(pos.size(), -1);
  for (std::size_t i = 0; i < pos.size(); i++) {
    const int root = super.find(static_cast<int>(i));
    if (first[root] < 0)
      first[root] = origin[i];
    else
      folded.unite(first[root], origin[i]);
  }
  std::map<int, std::set<int>> groups;
  for (int i = 0; i < n; i++)
    groups[folded.find(i)].insert(i);
  std::set<std::set<int>> out;
  for (auto &[k, g] : groups)
    out.insert(g);
  return out;
}

std::set<std::set<int>> as_sets(const std::vector<std::vector<int>> &blocks) {
  std::set<std::set<int>> out;
  for (const auto &b : blocks)
    out.insert(std::set<int>(b.begin(), b.end()));
  return out;
}

// chi by direct evaluation: sorted symmetric eigenvectors, det +1, then the
// parity of negative projections onto the mass-minus-geometric centroid.
int chi_by_hand(const MatN3 &x, const std::vector<double> &m) {
  const RowVec3 mean = x.colwise().mean();
  const MatN3 y = x.rowwise() - mean;
  const Mat3 cov = y.transpose() * y / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Mat3 u;
  for (int k = 0; k < 3; k++)
    u.col(k) = es.eigenvectors().col(2 - k);
  if (u.determinant() < 0)
    u.col(2) *= -1;
  RowVec3 com = RowVec3::Zero();
  double total = 0;
  for (Eigen::Index i = 0; i < x.rows(); i++) {
    com += m[i] * x.row(i);
    total += m[i];
  }
  const Vec3 d = (com / total - mean).transpose();
  int neg = 0;
  for (int k = 0; k < 3; k++)
    if (u.col(k).dot(d) < 0)
      neg++;
  return neg % 2;
}

MatN3 random_molecule(Rng &rng, int n) {
  MatN3 x(n, 3);
  for (int i = 0; i < n; i++)
    x.row(i) = RowVec3(2.0 * rng.normal(), 1.2 * rng.normal(), 0.6 * rng.normal());
  return x;
}

} // namespace

TEST_CASE("two hydrogen molecules give two blocks", "[crystal]") {
  const auto s = cubic(10.0, {"H", "H", "H", "H"},
                       {{1, 1, 1}, {1.74, 1, 1}, {6, 1, 1}, {6.74, 1, 1}});
  const auto blocks = identify_building_blocks(s, RadiiTable::defaults());
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0] == std::vector<int>{0, 1});
  CHECK(blocks[1] == std::vector<int>{2, 3});
}

TEST_CASE("lone atom is a singleton block", "[crystal]") {
  const auto s = cubic(8.0, {"Ar"}, {{4, 4, 4}});
  const auto blocks = identify_building_blocks(s, RadiiTable::defaults());
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0] == std::vector<int>{0});
  const MatN3 u = unwrap_block(s, blocks[0], RadiiTable::defaults());
  CHECK((u - s.cart).norm() == 0.0);
}

TEST_CASE("empty structures are rejected", "[crystal]") {
  AtomicStructure s;
  s.lattice = Mat3::Identity() * 5;
  s.cart.resize(0, 3);
  test::require_kind(ErrorKind::InvalidInput, [&] {
    identify_building_blocks(s, RadiiTable::defaults());
  });
}

TEST_CASE("molecule straddling the cell corner is one block", "[crystal]") {
  const auto &benzene = synthetic::molecule("benzene");
  Rng rng(4);
  const Mat3 lattice = 9.0 * Mat3::Identity();
  auto s = place(benzene, lattice,
                 {{RowVec3::Zero(), synthetic::random_rotation(rng)}});
  const Mat3 inv = lattice.inverse();
  for (Eigen::Index i = 0; i < s.cart.rows(); i++) {
    const Vec3 f = manifold::wrap((s.cart.row(i) * inv).transpose());
    s.cart.row(i) = f.transpose() * lattice;
  }
  const auto radii = RadiiTable::defaults();
  const auto blocks = identify_building_blocks(s, radii);
  CHECK(blocks.size() == 1);
  CHECK(as_sets(blocks) == supercell_components(s, radii));

  const MatN3 u = unwrap_block(s, blocks[0], radii);
  double worst_bond = 0.0;
  for (Eigen::Index i = 0; i < u.rows(); i++)
    for (Eigen::Index j = i + 1; j < u.rows(); j++) {
      const double d0 = (benzene.coords.row(i) - benzene.coords.row(j)).norm();
      const double d = (u.row(i) - u.row(j)).norm();
      // intramolecular geometry is recovered exactly
      CHECK(d == Approx(d0).margin(1e-9));
      if (d0 <= radii.cutoff(benzene.species[i], benzene.species[j]))
        worst_bond = std::max(worst_bond, d);
    }
  CHECK(worst_bond < 1.6);
}

TEST_CASE("block identification matches the supercell oracle", "[crystal]") {
  const auto radii = RadiiTable::defaults();
  for (const auto &s : synthetic::corpus(24, 77)) {
    INFO(s.id);
    const auto blocks = identify_building_blocks(s, radii);
    CHECK(as_sets(blocks) == supercell_components(s, radii));
    std::vector<int> all;
    for (const auto &b : blocks)
      all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    std::vector<int> expect(s.size());
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
  }
}

TEST_CASE("unwrap rejects disconnected indices", "[crystal]") {
  const auto s = cubic(10.0, {"H", "H", "H", "H"},
                       {{1, 1, 1}, {1.74, 1, 1}, {6, 1, 1}, {6.74, 1, 1}});
  test::require_kind(ErrorKind::InvalidInput, [&] {
    unwrap_block(s, {0, 2}, RadiiTable::defaults());
  });
}

TEST_CASE("interior molecule unwraps unchanged", "[crystal]") {
  const auto &m = synthetic::molecule("ethanol");
  const auto s = place(m, 12.0 * Mat3::Identity(),
                       {{RowVec3(6, 6, 6), Mat3::Identity()}});
  std::vector<int> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  const MatN3 u = unwrap_block(s, idx, RadiiTable::defaults());
  CHECK((u - s.cart).norm() < 1e-12);
}

TEST_CASE("pca frame of simple shapes", "[crystal]") {
  MatN3 line(4, 3);
  line << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  const auto pl = pca_frame(line);
  CHECK(std::abs(std::abs(pl.axes(0, 0)) - 1.0) < 1e-12);
  CHECK(pl.eigenvalues(1) == Approx(0).margin(1e-15));
  CHECK(pl.eigenvalues(2) == Approx(0).margin(1e-15));
  CHECK(pl.axes.determinant() == Approx(1.0));

  const auto &benzene = synthetic::molecule("benzene");
  Rng rng(2);
  const Mat3 q = synthetic::random_rotation(rng);
  const MatN3 rotated = benzene.coords * q.transpose();
  const auto pb = pca_frame(rotated);
  CHECK(pb.eigenvalues(2) == Approx(0).margin(1e-10));
  // u3 is normal to the ring plane
  const MatN3 centred = rotated.rowwise() - rotated.colwise().mean();
  CHECK((centred * pb.axes.col(2)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("pca frame diagonalises the covariance", "[crystal]") {
  Rng rng(6);
  for (int t = 0; t < 200; t++) {
    const MatN3 x = random_molecule(rng, 3 + static_cast<int>(rng.index(20)));
    const auto p = pca_frame(x);
    const MatN3 y = x.rowwise() - x.colwise().mean();
    const Mat3 cov = y.transpose() * y / static_cast<double>(x.rows());
    const Mat3 resid = cov * p.axes - p.axes * p.eigenvalues.asDiagonal();
    CHECK(resid.norm() < 1e-9);
    CHECK(p.eigenvalues(0) >= p.eigenvalues(1));
    CHECK(p.eigenvalues(1) >= p.eigenvalues(2));
    CHECK(manifold::is_rotation(p.axes));
  }
}

TEST_CASE("pca ties break deterministically", "[crystal]") {
  // square in the xy plane: lambda1 == lambda2
  MatN3 sq(4, 3);
  sq << 1, 0, 0, 0, 1, 0, -1, 0, 0, 0, -1, 0;
  const auto a = pca_frame(sq);
  const auto b = pca_frame(sq);
  CHECK(a.axes == b.axes);
  CHECK(manifold::is_rotation(a.axes));
  CHECK(std::abs(a.axes(2, 2)) == Approx(1.0));
}

TEST_CASE("equivariant reference", "[crystal]") {
  MatN3 hf(2, 3);
  hf << 0, 0, 0, 0.92, 0, 0;
  const Vec3 d = equivariant_reference(hf, atomic_masses({"H", "F"}));
  const double mh = element("H").mass, mf = element("F").mass;
  const double expect = (mf * 0.92) / (mh + mf) - 0.46;
  CHECK(d(0) == Approx(expect).epsilon(1e-12));
  CHECK(d(0) > 0);

  MatN3 h2(2, 3);
  h2 << 0, 0, 0, 0, 0.74, 0;
  const Vec3 dh = equivariant_reference(h2, atomic_masses({"H", "H"}));
  CHECK(dh.norm() == Approx(0.37));
  CHECK(std::abs(std::abs(dh(1)) - 0.37) < 1e-12);

  MatN3 one(1, 3);
  one << 3, 4, 5;
  CHECK(equivariant_reference(one, {40.0}) == Vec3::UnitX());
}

TEST_CASE("chi follows the projection parity", "[crystal]") {
  Rng rng(21);
  for (int t = 0; t < 300; t++) {
    const MatN3 x = random_molecule(rng, 4 + static_cast<int>(rng.index(8)));
    std::vector<double> m;
    for (Eigen::Index i = 0; i < x.rows(); i++)
      m.push_back(rng.uniform(1.0, 80.0));
    const auto st = extract_chi(x, m);
    CHECK(st.chi == chi_by_hand(x, m));
    const int neg = static_cast<int>(
        std::count(st.eta.begin(), st.eta.end(), -1));
    CHECK(st.chi == neg % 2);
    CHECK(manifold::is_rotation(st.frame));
  }
}

TEST_CASE("chi of a chiral molecule and its mirror image", "[crystal]") {
  MatN3 x(4, 3);
  x << 0, 0, 0, 1.5, 0, 0, 0.3, 1.1, 0, 0.2, 0.4, 0.8;
  const auto m = atomic_masses({"C", "N", "O", "F"});
  MatN3 mirror = x;
  mirror.col(0) *= -1.0;
  const auto a = extract_chi(x, m);
  const auto b = extract_chi(mirror, m);
  CHECK(a.chi == chi_by_hand(x, m));
  CHECK(b.chi == chi_by_hand(mirror, m));
  CHECK(a.chi != b.chi);
}

TEST_CASE("chi is invariant under rigid motion and flips under reflection",
          "[crystal]") {
  Rng rng(31);
  std::vector<std::pair<MatN3, std::vector<double>>> mols;
  const auto &c = synthetic::molecule("chfclbr");
  mols.emplace_back(c.coords, atomic_masses(c.species));
  for (int i = 0; i < 10; i++) {
    const MatN3 x = random_molecule(rng, 6);
    std::vector<double> m;
    for (int k = 0; k < 6; k++)
      m.push_back(rng.uniform(1.0, 30.0));
    mols.emplace_back(x, m);
  }
  for (const auto &[x, m] : mols) {
    REQUIRE(equivariant_reference(x, m).norm() > 1e-6);
    const int chi = extract_chi(x, m).chi;
    for (int t = 0; t < 100; t++) {
      const Mat3 q = test::random_rotation(rng);
      const RowVec3 shift(rng.uniform(-20, 20), rng.uniform(-20, 20),
                          rng.uniform(-20, 20));
      const MatN3 moved = (x * q.transpose()).rowwise() + shift;
      REQUIRE(extract_chi(moved, m).chi == chi);
    }
    const Vec3 normal = test::random_unit(rng);
    const Mat3 reflect = Mat3::Identity() - 2.0 * normal * normal.transpose();
    CHECK(extract_chi(x * reflect, m).chi == 1 - chi);
  }
}

TEST_CASE("decompose roundtrip on a synthetic corpus", "[crystal]") {
  double worst = 0.0;
  for (const auto &s : synthetic::corpus(40, 123)) {
    INFO(s.id);
    const auto c = decompose(s);
    const double r = roundtrip_residual(s, c);
    worst = std::max(worst, r);
    CHECK(r < 1e-6);
    for (const auto &b : c.blocks) {
      CHECK(b.internal.colwise().mean().norm() < 1e-10);
      CHECK(manifold::is_rotation(b.rotation));
      for (int k = 0; k < 3; k++) {
        CHECK(b.centroid_frac(k) >= 0.0);
        CHECK(b.centroid_frac(k) < 1.0);
      }
    }
    // rigid copies: one internal array per (type, chi) group
    for (const auto &a : c.blocks)
      for (const auto &b : c.blocks)
        if (a.type_id == b.type_id && a.chi == b.chi)
          CHECK((a.internal - b.internal).norm() < 1e-6);
    const Mat3 &l = c.lattice;
    CHECK(l(0, 1) == 0.0);
    CHECK(l(0, 2) == 0.0);
    CHECK(l(1, 2) == 0.0);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("decompose reports Z and keeps standard lattices", "[crystal]") {
  Rng rng(41);
  synthetic::CrystalOptions opts;
  opts.z = 4;
  const auto s = synthetic::random_crystal(synthetic::molecule("methanol"), opts,
                                           rng, "z4");
  const auto c = decompose(s);
  CHECK(c.z() == 4);

  const Mat3 std_l = manifold::standardize_lattice(s.lattice).lattice;
  AtomicStructure s2 = s;
  s2.lattice = std_l;
  s2.cart = s.cart * manifold::standardize_lattice(s.lattice).rotation.transpose();
  const auto c2 = decompose(s2);
  CHECK((c2.lattice - std_l).norm() < 1e-12);
  CHECK(roundtrip_residual(s2, c2) < 1e-6);
}

TEST_CASE("translated copies share internal coordinates and rotation",
          "[crystal]") {
  const auto &m = synthetic::molecule("chfclbr");
  Rng rng(5);
  const Mat3 r = synthetic::random_rotation(rng);
  const auto s = place(m, 14.0 * Mat3::Identity(),
                       {{RowVec3(3, 3, 3), r}, {RowVec3(10, 9, 8), r}});
  const auto c = decompose(s);
  REQUIRE(c.z() == 2);
  CHECK(c.blocks[0].chi == c.blocks[1].chi);
  CHECK((c.blocks[0].internal - c.blocks[1].internal).norm() < 1e-6);
  CHECK((c.blocks[0].rotation - c.blocks[1].rotation).norm() < 1e-6);
}

TEST_CASE("inversion-related copies have opposite chi", "[crystal]") {
  const auto &m = synthetic::molecule("chfclbr");
  Rng rng(6);
  const Mat3 r = synthetic::random_rotation(rng);
  auto s = place(m, 14.0 * Mat3::Identity(),
                 {{RowVec3(3.5, 3.5, 3.5), r}, {RowVec3(10.5, 10.5, 10.5), r}});
  // invert the second copy through its centroid
  const Eigen::Index n = m.coords.rows();
  const RowVec3 centre(10.5, 10.5, 10.5);
  for (Eigen::Index i = n; i < 2 * n; i++)
    s.cart.row(i) = 2.0 * centre - s.cart.row(i);

  const auto c = decompose(s);
  REQUIRE(c.z() == 2);
  CHECK(c.blocks[0].chi != c.blocks[1].chi);
  const MatN3 &a = c.blocks[0].internal;
  const MatN3 &b = c.blocks[1].internal;
  int flipped = 0;
  for (int k = 0; k < 3; k++) {
    if ((a.col(k) + b.col(k)).norm() < 1e-6 && a.col(k).norm() > 1e-3)
      flipped++;
    else
      CHECK((a.col(k) - b.col(k)).norm() < 1e-6);
  }
  CHECK(flipped == 1);
  CHECK(roundtrip_residual(s, c) < 1e-6);
}

TEST_CASE("single block crystal is trivially canonical", "[crystal]") {
  const auto &m = synthetic::molecule("ethanol");
  const auto s = place(m, 9.0 * Mat3::Identity(),
                       {{RowVec3(4, 4, 4), Mat3::Identity()}});
  const auto c = decompose(s);
  CHECK(c.z() == 1);
  CHECK(roundtrip_residual(s, c) < 1e-6);
}

TEST_CASE("inconsistent atom ordering fails canonicalisation", "[crystal]") {
  const auto &m = synthetic::molecule("methanol");
  auto s = place(m, 12.0 * Mat3::Identity(),
                 {{RowVec3(3, 3, 3), Mat3::Identity()},
                  {RowVec3(9, 9, 9), Mat3::Identity()}});
  const Eigen::Index n = m.coords.rows();
  // swap the first two atoms of the second copy: same formula, new order
  std::swap(s.species[n], s.species[n + 1]);
  s.cart.row(n).swap(s.cart.row(n + 1));
  REQUIRE(s.species[n] != s.species[n + 1]);
  test::require_kind(ErrorKind::CanonicalizationFailure,
                     [&] { decompose(s); });
}

TEST_CASE("reconstruct basics", "[crystal]") {
  MolecularCrystal c;
  c.lattice = 7.0 * Mat3::Identity();
  BuildingBlock b;
  b.species = {"O", "H"};
  b.internal.resize(2, 3);
  b.internal << 0.1, 0.2, 0.3, -0.1, -0.2, -0.3;
  b.atom_indices = {0, 1};
  c.blocks.push_back(b);
  const auto s = reconstruct(c);
  CHECK((s.cart - b.internal).norm() == 0.0);
  CHECK(s.species == b.species);
}

TEST_CASE("reconstruct is periodic and order independent", "[crystal]") {
  const auto structures = synthetic::corpus(6, 9);
  for (const auto &s : structures) {
    const auto c = decompose(s);
    const auto base = reconstruct(c);

    auto shifted = c;
    for (auto &b : shifted.blocks)
      b.centroid_frac += Vec3(1, -2, 3);
    const auto moved = reconstruct(shifted);
    std::vector<int> ident(base.size());
    std::iota(ident.begin(), ident.end(), 0);
    CHECK(max_min_image_deviation(base, moved, ident) < 1e-9);

    auto reversed = c;
    std::reverse(reversed.blocks.begin(), reversed.blocks.end());
    const auto rev = reconstruct(reversed);
    // map atoms of base to the reversed layout through atom_indices
    std::map<int, int> row_of;
    int row = 0;
    for (const auto &b : reversed.blocks)
      for (int idx : b.atom_indices)
        row_of[idx] = row++;
    std::vector<int> map;
    for (const auto &b : c.blocks)
      for (int idx : b.atom_indices)
        map.push_back(row_of[idx]);
    CHECK(max_min_image_deviation(base, rev, map) < 1e-12);
  }
}

TEST_CASE("axis-flip table for all negative-count cases", "[crystal]") {
  // axis-aligned octahedron with distinct half-widths; the unweighted
  // covariance is diagonal, so the principal axes are +x, +y, +z and the
  // heavier vertex on each axis sets the sign of that projection
  const std::array<double, 3> half{2.0, 1.4, 0.8};
  for (int mask = 0; mask < 8; mask++) {
    MatN3 x(6, 3);
    std::vector<double> m(6, 1.0);
    std::array<int, 3> sign{};
    for (int k = 0; k < 3; k++) {
      sign[k] = (mask >> k) & 1 ? -1 : 1;
      x.row(2 * k) = RowVec3::Zero();
      x.row(2 * k + 1) = RowVec3::Zero();
      x(2 * k, k) = sign[k] * half[k];
      x(2 * k + 1, k) = -sign[k] * half[k];
      m[2 * k] = 3.0;
    }
    const auto st = extract_chi(x, m);
    const int n_minus = static_cast<int>(std::count(sign.begin(), sign.end(), -1));
    INFO("mask " << mask);
    CHECK(st.eta == sign);
    CHECK(st.chi == (n_minus == 1 || n_minus == 3 ? 1 : 0));
    CHECK(manifold::is_rotation(st.frame));
  }
}
