#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <mcf/core/error.h>
#include <mcf/flowmatch.h>
#include <mcf/manifold.h>
#include <mcf/synthetic.h>

namespace mcf::synthetic {

namespace {
MoleculeTemplate make(const std::string &name, std::vector<std::string> species,
                      std::vector<std::array<double, 3>> xyz) {
  MoleculeTemplate m;
  m.name = name;
  m.species = std::move(species);
  m.coords.resize(static_cast<Eigen::Index>(xyz.size()), 3);
  for (std::size_t i = 0; i < xyz.size(); i++)
    m.coords.row(static_cast<Eigen::Index>(i)) << xyz[i][0], xyz[i][1], xyz[i][2];
  return m;
}

MoleculeTemplate tetrahedral(const std::string &name, const std::string &centre,
                             const std::vector<std::string> &ligands,
                             const std::vector<double> &lengths) {
  const double s = 1.0 / std::sqrt(3.0);
  const std::array<std::array<double, 3>, 4> dirs = {
      {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}}};
  std::vector<std::string> species{centre};
  std::vector<std::array<double, 3>> xyz{{0.0, 0.0, 0.0}};
  for (int k = 0; k < 4; k++) {
    species.push_back(ligands[k]);
    xyz.push_back({dirs[k][0] * lengths[k], dirs[k][1] * lengths[k],
                   dirs[k][2] * lengths[k]});
  }
  return make(name, species, xyz);
}

MoleculeTemplate benzene() {
  std::vector<std::string> species;
  std::vector<std::array<double, 3>> xyz;
  for (int k = 0; k < 6; k++) {
    const double a = k * kPi / 3.0;
    species.push_back("C");
    xyz.push_back({1.39 * std::cos(a), 1.39 * std::sin(a), 0.0});
  }
  for (int k = 0; k < 6; k++) {
    const double a = k * kPi / 3.0;
    species.push_back("H");
    xyz.push_back({2.48 * std::cos(a), 2.48 * std::sin(a), 0.0});
  }
  return make("benzene", species, xyz);
}

std::vector<MoleculeTemplate> build_templates() {
  std::vector<MoleculeTemplate> t;
  t.push_back(make("water", {"O", "H", "H"},
                   {{0.0, 0.0, 0.0}, {0.9572, 0.0, 0.0}, {-0.2400, 0.9266, 0.0}}));
  // pyramidal NH3, H-N-H 106.7 degrees
  t.push_back(make("ammonia", {"N", "H", "H", "H"},
                   {{0.0, 0.0, 0.0},
                    {0.9375, 0.0, -0.3809},
                    {-0.4688, 0.8119, -0.3809},
                    {-0.4688, -0.8119, -0.3809}}));
  t.push_back(tetrahedral("methane", "C", {"H", "H", "H", "H"},
                          {1.09, 1.09, 1.09, 1.09}));
  t.push_back(make("methanol", {"C", "O", "H", "H", "H", "H"},
                   {{-0.0469, 0.6618, 0.0},
                    {-0.0469, -0.7570, 0.0},
                    {-1.0872, 0.9755, 0.0},
                    {0.4397, 1.0846, 0.8953},
                    {0.4397, 1.0846, -0.8953},
                    {0.8620, -1.0846, 0.0}}));
  t.push_back(make("ethanol", {"O", "C", "C", "H", "H", "H", "H", "H", "H"},
                   {{-1.1712, 0.2997, 0.0},
                    {0.0463, -0.5665, 0.0},
                    {1.2175, 0.4030, 0.0},
                    {0.0958, -1.2120, 0.8819},
                    {0.0952, -1.1966, -0.8918},
                    {2.1566, -0.1565, 0.0},
                    {1.2175, 1.0373, 0.8876},
                    {1.2175, 1.0373, -0.8876},
                    {-1.9260, -0.3112, 0.0}}));
  t.push_back(benzene());
  t.push_back(tetrahedral("chfclbr", "C", {"H", "F", "Cl", "Br"},
                          {1.09, 1.35, 1.77, 1.94}));
  return t;
}

double max_cutoff(const std::vector<std::string> &species,
                  const crystal::RadiiTable &radii) {
  double r = 0.0;
  for (const auto &s : species)
    r = std::max(r, radii.radius(s));
  return 2.0 * r * radii.bond_scale + radii.bond_tolerance;
}
} // namespace

const std::vector<MoleculeTemplate> &templates() {
  static const std::vector<MoleculeTemplate> t = build_templates();
  return t;
}

const MoleculeTemplate &molecule(const std::string &name) {
  for (const auto &m : templates())
    if (m.name == name)
      return m;
  throw Error(ErrorKind::InvalidParameter, "unknown molecule template: " + name);
}

Rotation random_rotation(Rng &rng) { return flow::uniform_rotation(rng); }

crystal::AtomicStructure random_crystal(const MoleculeTemplate &mol,
                                        const CrystalOptions &opts, Rng &rng,
                                        const std::string &id) {
  if (opts.z < 1)
    throw Error(ErrorKind::InvalidParameter, "synthetic crystal needs z >= 1");
  const auto radii = crystal::RadiiTable::defaults();
  const double contact = max_cutoff(mol.species, radii) + opts.contact_margin;
  const RowVec3 centroid = mol.coords.colwise().mean();
  const MatN3 centred = mol.coords.rowwise() - centroid;
  double extent = 0.0;
  for (Eigen::Index i = 0; i < centred.rows(); i++)
    extent = std::max(extent, centred.row(i).norm());
  const double box = 2.0 * extent + contact + 0.5;
  double scale = opts.packing * std::cbrt(static_cast<double>(opts.z)) * box;
  const auto m = mol.coords.rows();

  for (int attempt = 0; attempt < opts.max_attempts; attempt++) {
    if (attempt > 0 && attempt % 20 == 0)
      scale *= 1.1;
    manifold::LatticeParams p{scale * rng.uniform(0.8, 1.2),
                              scale * rng.uniform(0.8, 1.2),
                              scale * rng.uniform(0.8, 1.2),
                              rng.uniform(opts.angle_low, opts.angle_high),
                              rng.uniform(opts.angle_low, opts.angle_high),
                              rng.uniform(opts.angle_low, opts.angle_high)};
    Lattice lat;
    try {
      lat = manifold::params_to_lattice(p);
    } catch (const Error &) {
      continue;
    }
    // random rigid placement, inverted images on odd copies if requested
    MatN3 cart(m * opts.z, 3);
    Rotation r = random_rotation(rng);
    for (int k = 0; k < opts.z; k++) {
      if (!(opts.inversion_pairs && k % 2 == 1))
        r = random_rotation(rng);
      const double sign = (opts.inversion_pairs && k % 2 == 1) ? -1.0 : 1.0;
      const RowVec3 centre =
          RowVec3(rng.uniform(), rng.uniform(), rng.uniform()) * lat;
      MatN3 placed = sign * centred * r.transpose();
      placed.rowwise() += centre;
      cart.middleRows(k * m, m) = placed;
    }
    // intermolecular contacts (including self images) must stay non-bonded
    const Mat3 inv = lat.inverse();
    bool ok = true;
    for (int k = 0; k < opts.z && ok; k++)
      for (int l = k; l < opts.z && ok; l++)
        for (Eigen::Index i = 0; i < m && ok; i++)
          for (Eigen::Index j = 0; j < m && ok; j++) {
            const RowVec3 d = cart.row(l * m + j) - cart.row(k * m + i);
            RowVec3 f = d * inv;
            for (int a = -2; a <= 2 && ok; a++)
              for (int b = -2; b <= 2 && ok; b++)
                for (int c = -2; c <= 2 && ok; c++) {
                  if (k == l && a == 0 && b == 0 && c == 0)
                    continue;
                  const RowVec3 img = (f + RowVec3(a, b, c)) * lat;
                  if (img.norm() < contact)
                    ok = false;
                }
          }
    if (!ok)
      continue;
    crystal::AtomicStructure s;
    s.id = id;
    s.lattice = lat;
    for (int k = 0; k < opts.z; k++)
      s.species.insert(s.species.end(), mol.species.begin(), mol.species.end());
    MatN3 frac = cart * inv;
    for (Eigen::Index i = 0; i < frac.rows(); i++)
      frac.row(i) = manifold::wrap(frac.row(i).transpose()).transpose();
    s.cart = frac * lat;
    return s;
  }
  throw Error(ErrorKind::InvalidParameter,
              fmt::format("could not place {} copies of {} without contacts",
                          opts.z, mol.name));
}

std::vector<crystal::AtomicStructure> corpus(int n, std::uint64_t seed, int max_z) {
  std::vector<crystal::AtomicStructure> out;
  const auto &t = templates();
  for (int i = 0; i < n; i++) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    CrystalOptions opts;
    opts.z = 1 + i % std::max(1, max_z);
    opts.inversion_pairs = (i / 2) % 2 == 1;
    const auto &mol = t[static_cast<std::size_t>(i) % t.size()];
    out.push_back(random_crystal(mol, opts, rng, fmt::format("{}-{:03d}", mol.name, i)));
  }
  return out;
}

} // namespace mcf::synthetic
