#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <mcf/core/error.h>
#include <mcf/crystal.h>
#include <mcf/elements.h>
#include <mcf/manifold.h>
#include <numeric>
#include <queue>
#include <set>

namespace mcf::crystal {

void AtomicStructure::validate() const {
  if (species.empty())
    throw Error(ErrorKind::InvalidInput,
                fmt::format("structure '{}' has no atoms", id));
  if (static_cast<Eigen::Index>(species.size()) != cart.rows())
    throw Error(ErrorKind::InvalidInput,
                fmt::format("structure '{}': {} species but {} positions", id,
                            species.size(), cart.rows()));
  if (!cart.allFinite())
    throw Error(ErrorKind::InvalidInput,
                fmt::format("structure '{}' has non-finite positions", id));
  if (!lattice.allFinite() || lattice.determinant() <= 0.0)
    throw Error(ErrorKind::InvalidLattice,
                fmt::format("structure '{}': lattice determinant {:.6g} <= 0",
                            id, lattice.determinant()));
}

MatN3 AtomicStructure::frac() const { return cart * lattice.inverse(); }

RadiiTable RadiiTable::defaults() {
  RadiiTable t;
  for (const auto &e : element_table())
    t.radii[std::string(e.symbol)] = e.covalent_radius;
  return t;
}

double RadiiTable::radius(const std::string &symbol) const {
  auto it = radii.find(symbol);
  if (it == radii.end())
    throw Error(ErrorKind::UnknownElement,
                fmt::format("no covalent radius for element '{}'", symbol));
  return it->second;
}

double RadiiTable::cutoff(const std::string &a, const std::string &b) const {
  return bond_scale * (radius(a) + radius(b)) + bond_tolerance;
}

std::vector<int> MolecularCrystal::chis() const {
  std::vector<int> out;
  for (const auto &b : blocks)
    out.push_back(b.chi);
  return out;
}

RowVec3 min_image(const Lattice &l, const Mat3 &inv_l, const RowVec3 &delta) {
  RowVec3 f = delta * inv_l;
  for (int i = 0; i < 3; i++)
    f(i) -= std::round(f(i));
  RowVec3 best = f * l;
  double best_d2 = best.squaredNorm();
  // rounding in fractional space is not the minimum image for skewed cells
  for (int i = -1; i <= 1; i++)
    for (int j = -1; j <= 1; j++)
      for (int k = -1; k <= 1; k++) {
        if (i == 0 && j == 0 && k == 0)
          continue;
        RowVec3 c = (f + RowVec3(i, j, k)) * l;
        double d2 = c.squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = c;
        }
      }
  return best;
}

namespace {

std::vector<std::vector<int>> bond_graph(const AtomicStructure &s,
                                         const RadiiTable &radii) {
  const auto n = s.size();
  const Mat3 inv = s.lattice.inverse();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; i++)
    r[i] = radii.radius(s.species[i]);
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 0; i < n; i++) {
    for (std::size_t j = i + 1; j < n; j++) {
      const double cut = radii.bond_scale * (r[i] + r[j]) + radii.bond_tolerance;
      RowVec3 d = min_image(s.lattice, inv, s.cart.row(j) - s.cart.row(i));
      if (d.norm() <= cut) {
        adj[i].push_back(static_cast<int>(j));
        adj[j].push_back(static_cast<int>(i));
      }
    }
  }
  return adj;
}

} // namespace

std::vector<std::vector<int>>
identify_building_blocks(const AtomicStructure &s, const RadiiTable &radii) {
  s.validate();
  const auto adj = bond_graph(s, radii);
  std::vector<int> label(s.size(), -1);
  std::vector<std::vector<int>> blocks;
  for (std::size_t start = 0; start < s.size(); start++) {
    if (label[start] >= 0)
      continue;
    const int id = static_cast<int>(blocks.size());
    blocks.emplace_back();
    std::queue<int> q;
    q.push(static_cast<int>(start));
    label[start] = id;
    while (!q.empty()) {
      int a = q.front();
      q.pop();
      blocks[id].push_back(a);
      for (int b : adj[a])
        if (label[b] < 0) {
          label[b] = id;
          q.push(b);
        }
    }
    std::sort(blocks[id].begin(), blocks[id].end());
  }
  return blocks;
}

MatN3 unwrap_block(const AtomicStructure &s, const std::vector<int> &indices,
                   const RadiiTable &radii) {
  if (indices.empty())
    throw Error(ErrorKind::InvalidInput, "unwrap_block: empty index set");
  std::vector<int> idx = indices;
  std::sort(idx.begin(), idx.end());
  const std::size_t m = idx.size();
  const Mat3 inv = s.lattice.inverse();

  MatN3 out(m, 3);
  std::vector<bool> placed(m, false);
  std::queue<std::size_t> q;
  out.row(0) = s.cart.row(idx[0]);
  placed[0] = true;
  q.push(0);
  std::size_t n_placed = 1;
  while (!q.empty()) {
    const std::size_t a = q.front();
    q.pop();
    for (std::size_t b = 0; b < m; b++) {
      if (b == a)
        continue;
      const double cut = radii.cutoff(s.species[idx[a]], s.species[idx[b]]);
      RowVec3 d =
          min_image(s.lattice, inv, s.cart.row(idx[b]) - s.cart.row(idx[a]));
      if (d.norm() > cut)
        continue;
      const RowVec3 pos = out.row(a) + d;
      if (!placed[b]) {
        out.row(b) = pos;
        placed[b] = true;
        n_placed++;
        q.push(b);
      } else if ((out.row(b) - pos).norm() > 1e-6) {
        throw Error(ErrorKind::InvalidInput,
                    fmt::format("structure '{}': building block containing "
                                "atom {} is bonded to its own periodic image",
                                s.id, idx[0]));
      }
    }
  }
  if (n_placed != m)
    throw Error(ErrorKind::InvalidInput,
                fmt::format("structure '{}': atom indices do not form one "
                            "connected component ({} of {} reached)",
                            s.id, n_placed, m));
  return out;
}

PcaFrame pca_frame(const MatN3 &coords) {
  const auto n = coords.rows();
  const RowVec3 mean = coords.colwise().mean();
  const MatN3 y = coords.rowwise() - mean;
  const Mat3 cov = (y.transpose() * y) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);

  struct Axis {
    double lambda;
    Vec3 u;
  };
  std::array<Axis, 3> axes;
  for (int k = 0; k < 3; k++) {
    Vec3 u = es.eigenvectors().col(2 - k);
    // deterministic sign: largest-magnitude component positive
    int big = 0;
    for (int i = 1; i < 3; i++)
      if (std::abs(u(i)) > std::abs(u(big)) + 1e-12)
        big = i;
    if (u(big) < 0.0)
      u = -u;
    axes[k] = {std::max(es.eigenvalues()(2 - k), 0.0), u};
  }
  // eigenvalue ties: order by lexicographic absolute components
  auto lex_greater = [](const Vec3 &a, const Vec3 &b) {
    for (int i = 0; i < 3; i++) {
      if (std::abs(std::abs(a(i)) - std::abs(b(i))) > 1e-12)
        return std::abs(a(i)) > std::abs(b(i));
    }
    return false;
  };
  for (int pass = 0; pass < 2; pass++)
    for (int k = 0; k < 2; k++) {
      if (axes[k].lambda - axes[k + 1].lambda < 1e-10 &&
          lex_greater(axes[k + 1].u, axes[k].u))
        std::swap(axes[k], axes[k + 1]);
    }

  PcaFrame f;
  for (int k = 0; k < 3; k++) {
    f.axes.col(k) = axes[k].u;
    f.eigenvalues(k) = axes[k].lambda;
  }
  if (f.axes.determinant() < 0.0)
    f.axes.col(2) *= -1.0;
  return f;
}

Vec3 equivariant_reference(const MatN3 &coords,
                           const std::vector<double> &masses) {
  const auto n = coords.rows();
  const RowVec3 centroid = coords.colwise().mean();
  RowVec3 cm = RowVec3::Zero();
  double mtot = 0.0;
  for (Eigen::Index i = 0; i < n; i++) {
    cm += masses[i] * coords.row(i);
    mtot += masses[i];
  }
  cm /= mtot;
  Vec3 d = (cm - centroid).transpose();
  if (d.norm() >= 1e-8)
    return d;
  // symmetric mass distribution: point at the nearest off-centre atom
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; i++) {
    const RowVec3 r = coords.row(i) - centroid;
    const double dist = r.norm();
    if (dist > 1e-8 && dist < best - 1e-12) {
      best = dist;
      d = r.transpose();
    }
  }
  if (std::isfinite(best))
    return d;
  return Vec3::UnitX();
}

ChiState extract_chi(const MatN3 &coords, const std::vector<double> &masses) {
  const PcaFrame pca = pca_frame(coords);
  const Vec3 d = equivariant_reference(coords, masses);
  ChiState st;
  int n_minus = 0;
  Rotation frame = pca.axes;
  for (int k = 0; k < 3; k++) {
    const double nu = pca.axes.col(k).dot(d);
    st.eta[k] = nu < 0.0 ? -1 : 1;
    if (st.eta[k] < 0) {
      n_minus++;
      frame.col(k) *= -1.0;
    }
  }
  st.chi = (n_minus % 2 == 0) ? 0 : 1;
  // sign-fixed by D, then restore right-handedness on the third axis
  if (frame.determinant() < 0.0)
    frame.col(2) *= -1.0;
  st.frame = frame;
  return st;
}

namespace {

/// Rotation R minimising |y - x R^T| (rows are points).
Rotation kabsch(const MatN3 &x, const MatN3 &y) {
  const Mat3 h = x.transpose() * y;
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 dfix = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0)
    dfix(2, 2) = -1.0;
  return v * dfix * u.transpose();
}

double rmsd(const MatN3 &a, const MatN3 &b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.rows()));
}

std::string formula_key(const std::vector<std::string> &species) {
  std::vector<std::string> s = species;
  std::sort(s.begin(), s.end());
  std::string key;
  for (const auto &x : s)
    key += x + ",";
  return key;
}

} // namespace

std::vector<CanonicalFrame>
canonicalize_frames(const std::vector<FrameCandidate> &blocks,
                    double rmsd_tol) {
  const Mat3 mirror = Vec3(1.0, 1.0, -1.0).asDiagonal();
  struct TypeInfo {
    std::vector<std::string> species;
    std::array<MatN3, 2> reference;
    std::array<bool, 2> has{false, false};
  };
  std::vector<TypeInfo> types;
  std::map<std::string, int> type_of_formula;

  std::vector<CanonicalFrame> out;
  out.reserve(blocks.size());
  for (std::size_t bi = 0; bi < blocks.size(); bi++) {
    const auto &b = blocks[bi];
    const std::string key = formula_key(b.species);
    auto it = type_of_formula.find(key);
    int type_id;
    if (it == type_of_formula.end()) {
      type_id = static_cast<int>(types.size());
      type_of_formula[key] = type_id;
      types.push_back({b.species, {}, {false, false}});
    } else {
      type_id = it->second;
      if (types[type_id].species != b.species)
        throw Error(ErrorKind::CanonicalizationFailure,
                    fmt::format("building block {} has the same composition "
                                "as an earlier block but a different atom "
                                "ordering",
                                bi));
    }
    TypeInfo &t = types[type_id];
    CanonicalFrame cf;
    cf.type_id = type_id;
    cf.chi = b.chi;
    cf.rmsd = 0.0;

    const MatN3 own = b.centred * b.frame; // rows x = R^T y
    if (!t.has[0] && !t.has[1]) {
      cf.rotation = b.frame;
      t.reference[b.chi] = own;
      t.has[b.chi] = true;
    } else {
      auto target_for = [&](int chi) {
        return t.has[chi] ? t.reference[chi]
                          : MatN3(t.reference[1 - chi] * mirror);
      };
      auto align = [&](const MatN3 &target, Rotation &r) {
        r = kabsch(target, b.centred);
        return rmsd(b.centred, target * r.transpose());
      };
      MatN3 target = target_for(b.chi);
      Rotation r;
      double err = align(target, r);
      if (err > rmsd_tol) {
        // A symmetric molecule can have a projection onto D that vanishes,
        // leaving its chi at the mercy of rounding. Such a block still
        // aligns by a proper rotation to the other group; adopt that chi.
        MatN3 alt = target_for(1 - b.chi);
        Rotation r_alt;
        const double err_alt = align(alt, r_alt);
        if (err_alt > rmsd_tol)
          throw Error(ErrorKind::CanonicalizationFailure,
                      fmt::format("building block {} deviates from its group "
                                  "reference by {:.4f} A RMSD (tolerance {})",
                                  bi, std::min(err, err_alt), rmsd_tol));
        cf.chi = 1 - b.chi;
        target = std::move(alt);
        r = r_alt;
        err = err_alt;
      }
      cf.rotation = r;
      cf.rmsd = err;
      if (!t.has[cf.chi]) {
        t.reference[cf.chi] = target;
        t.has[cf.chi] = true;
      }
    }
    cf.internal = b.centred * cf.rotation;
    out.push_back(std::move(cf));
  }
  return out;
}

MolecularCrystal decompose(const AtomicStructure &input,
                           const DecomposeOptions &opts) {
  input.validate();
  const auto std_lat = manifold::standardize_lattice(input.lattice);

  AtomicStructure s = input;
  s.lattice = std_lat.lattice;
  s.cart = input.cart * std_lat.rotation.transpose();

  const auto components = identify_building_blocks(s, opts.radii);
  const Mat3 inv = s.lattice.inverse();

  std::vector<FrameCandidate> candidates;
  std::vector<Vec3> centroids;
  for (const auto &comp : components) {
    FrameCandidate fc;
    const MatN3 coords = unwrap_block(s, comp, opts.radii);
    const RowVec3 centroid = coords.colwise().mean();
    fc.centred = coords.rowwise() - centroid;
    for (int i : comp)
      fc.species.push_back(s.species[i]);
    const auto st = extract_chi(fc.centred, atomic_masses(fc.species));
    fc.chi = st.chi;
    fc.frame = st.frame;
    candidates.push_back(std::move(fc));
    centroids.push_back((centroid * inv).transpose());
  }
  const auto frames = canonicalize_frames(candidates, opts.canonical_rmsd_tol);

  MolecularCrystal c;
  c.id = input.id;
  c.lattice = s.lattice;
  c.frame_rotation = std_lat.rotation;
  for (std::size_t i = 0; i < components.size(); i++) {
    BuildingBlock b;
    b.atom_indices = components[i];
    b.species = candidates[i].species;
    b.masses = atomic_masses(b.species);
    b.internal = frames[i].internal;
    b.rotation = frames[i].rotation;
    b.chi = frames[i].chi;
    b.type_id = frames[i].type_id;
    b.centroid_frac = manifold::wrap(centroids[i]);
    c.blocks.push_back(std::move(b));
  }
  return c;
}

AtomicStructure reconstruct(const MolecularCrystal &c) {
  AtomicStructure s;
  s.id = c.id;
  s.lattice = c.lattice;
  std::size_t n = 0;
  for (const auto &b : c.blocks)
    n += b.size();
  s.cart.resize(static_cast<Eigen::Index>(n), 3);
  Eigen::Index row = 0;
  for (const auto &b : c.blocks) {
    const RowVec3 centre = b.centroid_frac.transpose() * c.lattice;
    for (Eigen::Index i = 0; i < b.internal.rows(); i++) {
      s.cart.row(row++) = centre + b.internal.row(i) * b.rotation.transpose();
    }
    s.species.insert(s.species.end(), b.species.begin(), b.species.end());
  }
  return s;
}

double max_min_image_deviation(const AtomicStructure &a,
                               const AtomicStructure &b,
                               const std::vector<int> &map) {
  const Mat3 inv = a.lattice.inverse();
  double worst = 0.0;
  for (std::size_t i = 0; i < map.size(); i++) {
    const RowVec3 d = min_image(a.lattice, inv,
                                b.cart.row(map[i]) - a.cart.row(i));
    worst = std::max(worst, d.norm());
  }
  return worst;
}

double roundtrip_residual(const AtomicStructure &s, const MolecularCrystal &c) {
  AtomicStructure rotated = s;
  rotated.lattice = c.lattice;
  rotated.cart = s.cart * c.frame_rotation.transpose();
  std::vector<int> map(s.size(), -1);
  int row = 0;
  for (const auto &b : c.blocks)
    for (int idx : b.atom_indices)
      map.at(static_cast<std::size_t>(idx)) = row++;
  if (static_cast<std::size_t>(row) != s.size() ||
      std::find(map.begin(), map.end(), -1) != map.end())
    throw Error(ErrorKind::InvalidInput,
                "crystal blocks do not partition the structure's atoms");
  return max_min_image_deviation(rotated, reconstruct(c), map);
}

} // namespace mcf::crystal
