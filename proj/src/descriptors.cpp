#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mcf/core/error.h>
#include <mcf/crystal.h>
#include <mcf/descriptors.h>
#include <mcf/elements.h>
#include <numeric>
#include <queue>
#include <set>

namespace mcf::descriptors {

const std::array<const char *, kNumDescriptors> &slot_names() {
  static const std::array<const char *, kNumDescriptors> names = {
      "n_atoms",        "n_heavy",      "mol_weight",   "chirality_flag",
      "n_hbond_donors", "n_hbond_acceptors", "n_rotatable", "n_aromatic_rings",
      "logP",           "TPSA",         "radius_of_gyration", "asphericity",
      "eccentricity",   "planarity",    "len_pc1",      "len_pc2",
      "len_pc3",        "n_rings"};
  return names;
}

MolecularGraph MolecularGraph::from_coordinates(
    const std::vector<std::string> &species, const MatN3 &coords,
    const crystal::RadiiTable &radii) {
  MolecularGraph g;
  g.species = species;
  g.masses = atomic_masses(species);
  g.coords = coords;
  const auto n = static_cast<int>(species.size());
  for (int i = 0; i < n; i++)
    for (int j = i + 1; j < n; j++)
      if ((coords.row(i) - coords.row(j)).norm() <=
          radii.cutoff(species[i], species[j]))
        g.bonds.emplace_back(i, j);
  return g;
}

BasicFeatures basic_features(const MolecularGraph &g) {
  BasicFeatures f{static_cast<int>(g.size()), 0, 0.0};
  for (const auto &s : g.species) {
    f.mol_weight += element(s).mass;
    if (!is_hydrogen(s))
      f.n_heavy++;
  }
  return f;
}

namespace {

struct Perception {
  std::vector<std::vector<int>> adj;
  std::vector<int> heavy_degree;
  std::vector<int> h_count;
  std::vector<bool> in_ring;
  std::vector<bool> aromatic;
  std::set<std::pair<int, int>> ring_bonds;
  std::vector<std::vector<int>> rings;
  std::vector<bool> aromatic_ring;
};

int typical_valence(const std::string &s) {
  static const std::map<std::string, int> v = {
      {"H", 1}, {"B", 3}, {"C", 4},  {"N", 3},  {"O", 2}, {"F", 1}, {"Si", 4},
      {"P", 3}, {"S", 2}, {"Cl", 1}, {"Br", 1}, {"I", 1}, {"Se", 2}};
  auto it = v.find(s);
  return it == v.end() ? 0 : it->second;
}

bool unsaturated(const MolecularGraph &g, const Perception &p, int i) {
  const int val = typical_valence(g.species[i]);
  return val > 0 && static_cast<int>(p.adj[i].size()) < val;
}

std::pair<int, int> edge_key(int a, int b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

/// Shortest path from a to b avoiding the direct edge a-b (BFS).
std::vector<int> shortest_cycle_through(const std::vector<std::vector<int>> &adj,
                                        int a, int b) {
  std::vector<int> prev(adj.size(), -2);
  std::queue<int> q;
  q.push(a);
  prev[a] = -1;
  while (!q.empty()) {
    int x = q.front();
    q.pop();
    if (x == b)
      break;
    for (int y : adj[x]) {
      if (x == a && y == b)
        continue;
      if (prev[y] == -2) {
        prev[y] = x;
        q.push(y);
      }
    }
  }
  if (prev[b] == -2)
    return {};
  std::vector<int> path;
  for (int x = b; x != -1; x = prev[x])
    path.push_back(x);
  std::reverse(path.begin(), path.end());
  return path;
}

double plane_max_residual(const MatN3 &pts) {
  const RowVec3 c = pts.colwise().mean();
  const MatN3 y = pts.rowwise() - c;
  Eigen::SelfAdjointEigenSolver<Mat3> es(y.transpose() * y);
  const Vec3 normal = es.eigenvectors().col(0);
  return (y * normal).cwiseAbs().maxCoeff();
}

Perception perceive(const MolecularGraph &g) {
  const auto n = g.size();
  Perception p;
  p.adj.assign(n, {});
  for (auto [a, b] : g.bonds) {
    p.adj[a].push_back(b);
    p.adj[b].push_back(a);
  }
  p.heavy_degree.assign(n, 0);
  p.h_count.assign(n, 0);
  for (std::size_t i = 0; i < n; i++)
    for (int j : p.adj[i]) {
      if (is_hydrogen(g.species[j]))
        p.h_count[i]++;
      else
        p.heavy_degree[i]++;
    }
  p.rings = smallest_rings(g);
  p.in_ring.assign(n, false);
  for (const auto &ring : p.rings)
    for (std::size_t k = 0; k < ring.size(); k++) {
      p.in_ring[ring[k]] = true;
      p.ring_bonds.insert(edge_key(ring[k], ring[(k + 1) % ring.size()]));
    }
  // bonds on any cycle, not only on SSSR members
  for (auto [a, b] : g.bonds)
    if (!shortest_cycle_through(p.adj, a, b).empty())
      p.ring_bonds.insert(edge_key(a, b));

  p.aromatic.assign(n, false);
  p.aromatic_ring.assign(p.rings.size(), false);
  for (std::size_t r = 0; r < p.rings.size(); r++) {
    const auto &ring = p.rings[r];
    if (ring.size() < 5)
      continue;
    bool sp2 = std::all_of(ring.begin(), ring.end(), [&](int i) {
      return !is_hydrogen(g.species[i]) && p.adj[i].size() <= 3;
    });
    if (!sp2)
      continue;
    MatN3 pts(ring.size(), 3);
    for (std::size_t k = 0; k < ring.size(); k++)
      pts.row(k) = g.coords.row(ring[k]);
    if (plane_max_residual(pts) < 0.1) {
      p.aromatic_ring[r] = true;
      for (int i : ring)
        p.aromatic[i] = true;
    }
  }
  return p;
}

// Branch signature seen from a stereocentre: Weisfeiler-Lehman refinement on
// the graph with the centre removed, rooted at one neighbour.
std::size_t branch_signature(const MolecularGraph &g, const Perception &p,
                             int centre, int root) {
  const auto n = g.size();
  std::vector<std::size_t> label(n);
  std::hash<std::string> hs;
  for (std::size_t i = 0; i < n; i++)
    label[i] = hs(g.species[i]);
  label[root] ^= 0x9e3779b97f4a7c15ULL;
  // component of root without the centre
  std::vector<bool> in(n, false);
  std::queue<int> q;
  q.push(root);
  in[root] = true;
  while (!q.empty()) {
    int x = q.front();
    q.pop();
    for (int y : p.adj[x])
      if (y != centre && !in[y]) {
        in[y] = true;
        q.push(y);
      }
  }
  for (std::size_t it = 0; it < n; it++) {
    std::vector<std::size_t> next(n);
    for (std::size_t i = 0; i < n; i++) {
      if (!in[i])
        continue;
      std::vector<std::size_t> nb;
      for (int j : p.adj[i])
        if (j != centre)
          nb.push_back(label[j]);
      std::sort(nb.begin(), nb.end());
      std::size_t h = label[i];
      for (auto x : nb)
        h = h * 1000003ULL ^ x;
      next[i] = h;
    }
    label = next;
  }
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < n; i++)
    if (in[i])
      all.push_back(label[i]);
  std::sort(all.begin(), all.end());
  std::size_t h = label[root];
  for (auto x : all)
    h = h * 1000003ULL ^ x;
  return h;
}

// Simplified Wildman-Crippen atom contributions.
double logp_contribution(const MolecularGraph &g, const Perception &p, int i) {
  const std::string &s = g.species[i];
  const auto deg = p.adj[i].size();
  auto hetero_neighbour = [&] {
    return std::any_of(p.adj[i].begin(), p.adj[i].end(), [&](int j) {
      const auto &t = g.species[j];
      return t != "C" && t != "H";
    });
  };
  if (s == "H") {
    if (p.adj[i].empty())
      return 0.0;
    const auto &t = g.species[p.adj[i][0]];
    if (t == "C")
      return 0.1230;
    if (t == "N")
      return 0.2142;
    if (t == "O")
      return 0.2980;
    return 0.0;
  }
  if (s == "C") {
    if (p.aromatic[i])
      return hetero_neighbour() ? 0.1360 : 0.1581;
    if (deg == 4)
      return hetero_neighbour() ? -0.2035 : 0.1441;
    if (deg == 3) {
      // C bonded to a terminal heteroatom is treated as C=X
      for (int j : p.adj[i])
        if (g.species[j] != "C" && g.species[j] != "H" && p.adj[j].size() == 1)
          return -0.1002;
      return 0.1551;
    }
    return 0.0;
  }
  if (s == "N") {
    if (p.aromatic[i])
      return -0.4806;
    if (deg == 3)
      return p.h_count[i] == 2 ? -1.0190 : p.h_count[i] == 1 ? -0.7096 : -0.3187;
    return 0.0;
  }
  if (s == "O") {
    if (p.aromatic[i])
      return 0.1552;
    if (deg == 1)
      return -0.1526;
    if (deg == 2)
      return p.h_count[i] >= 1 ? -0.2893 : -0.0684;
    return 0.0;
  }
  static const std::map<std::string, double> halo = {
      {"F", 0.4202}, {"Cl", 0.6895}, {"Br", 0.8456},
      {"I", 0.8857}, {"S", 0.6482},  {"P", 0.8612}};
  auto it = halo.find(s);
  return it == halo.end() ? 0.0 : it->second;
}

// Ertl polar surface area contributions for N and O.
double tpsa_contribution(const MolecularGraph &g, const Perception &p, int i) {
  const std::string &s = g.species[i];
  const auto deg = p.adj[i].size();
  const int h = p.h_count[i];
  const int heavy = p.heavy_degree[i];
  if (s == "N") {
    if (p.aromatic[i]) {
      if (heavy == 3)
        return 4.41;
      return h > 0 ? 15.79 : 12.89;
    }
    if (deg == 1 && heavy == 1) {
      const int c = p.adj[i][0];
      if (p.adj[c].size() == 2)
        return 23.79; // nitrile
    }
    if (deg == 3) {
      if (h == 0)
        return 3.24;
      if (h == 1)
        return 12.03;
      if (h == 2)
        return 26.02;
      return 0.0;
    }
    if (deg == 2)
      return h == 0 ? 12.36 : 23.85;
    return 0.0;
  }
  if (s == "O") {
    if (p.aromatic[i])
      return 13.14;
    if (deg == 1 && heavy == 1)
      return 17.07;
    if (deg == 2 && heavy == 2)
      return 9.23;
    if (deg == 2 && heavy == 1 && h == 1)
      return 20.23;
    return 0.0;
  }
  return 0.0;
}

bool rotor_endpoint(const MolecularGraph &g, const Perception &p, int i) {
  const std::string &s = g.species[i];
  const auto deg = p.adj[i].size();
  // linear (sp) centres do not define a torsion
  if ((s == "C" && deg == 2) || (s == "N" && deg == 1))
    return false;
  if (p.heavy_degree[i] >= 2)
    return true;
  const bool polar = s == "N" || s == "O" || s == "S";
  return polar && p.h_count[i] >= 1 && deg >= 2;
}

} // namespace

std::vector<std::vector<int>> smallest_rings(const MolecularGraph &g) {
  const auto n = g.size();
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : g.bonds) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  // cyclomatic number E - V + C
  std::vector<int> comp(n, -1);
  int n_comp = 0;
  for (std::size_t s = 0; s < n; s++) {
    if (comp[s] >= 0)
      continue;
    std::queue<int> q;
    q.push(static_cast<int>(s));
    comp[s] = n_comp;
    while (!q.empty()) {
      int x = q.front();
      q.pop();
      for (int y : adj[x])
        if (comp[y] < 0) {
          comp[y] = n_comp;
          q.push(y);
        }
    }
    n_comp++;
  }
  const int n_rings =
      static_cast<int>(g.bonds.size()) - static_cast<int>(n) + n_comp;
  if (n_rings <= 0)
    return {};

  std::map<std::pair<int, int>, int> edge_index;
  for (std::size_t e = 0; e < g.bonds.size(); e++)
    edge_index[edge_key(g.bonds[e].first, g.bonds[e].second)] =
        static_cast<int>(e);

  // candidate cycles: shortest cycle through every edge
  std::vector<std::vector<int>> candidates;
  std::set<std::vector<int>> seen;
  for (auto [a, b] : g.bonds) {
    auto path = shortest_cycle_through(adj, a, b);
    if (path.empty())
      continue;
    std::vector<int> key = path;
    std::sort(key.begin(), key.end());
    if (seen.insert(key).second)
      candidates.push_back(path);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto &x, const auto &y) { return x.size() < y.size(); });

  // greedy GF(2) independence over edge-incidence vectors
  const std::size_t n_edges = g.bonds.size();
  std::vector<std::vector<bool>> basis;
  std::vector<int> pivots;
  std::vector<std::vector<int>> rings;
  for (const auto &cyc : candidates) {
    std::vector<bool> v(n_edges, false);
    for (std::size_t k = 0; k < cyc.size(); k++)
      v[edge_index.at(edge_key(cyc[k], cyc[(k + 1) % cyc.size()]))] = true;
    for (std::size_t r = 0; r < basis.size(); r++)
      if (v[pivots[r]])
        for (std::size_t e = 0; e < n_edges; e++)
          v[e] = v[e] != basis[r][e];
    auto it = std::find(v.begin(), v.end(), true);
    if (it == v.end())
      continue;
    const int piv = static_cast<int>(it - v.begin());
    // keep the basis reduced on the new pivot
    for (std::size_t r = 0; r < basis.size(); r++)
      if (basis[r][piv])
        for (std::size_t e = 0; e < n_edges; e++)
          basis[r][e] = basis[r][e] != v[e];
    basis.push_back(v);
    pivots.push_back(piv);
    rings.push_back(cyc);
    if (static_cast<int>(rings.size()) == n_rings)
      break;
  }
  return rings;
}

ChemicalFeatures chemical_features(const MolecularGraph &g) {
  const Perception p = perceive(g);
  const auto n = static_cast<int>(g.size());
  ChemicalFeatures f{0, 0, 0, 0, 0, 0.0, 0.0, 0};

  for (int i = 0; i < n; i++) {
    const auto &s = g.species[i];
    if (s == "N" || s == "O") {
      f.acceptors++;
      if (p.h_count[i] > 0)
        f.donors++;
    }
    f.logp += logp_contribution(g, p, i);
    f.tpsa += tpsa_contribution(g, p, i);
  }

  for (auto [a, b] : g.bonds) {
    if (is_hydrogen(g.species[a]) || is_hydrogen(g.species[b]))
      continue;
    if (p.ring_bonds.count(edge_key(a, b)))
      continue;
    // multiple bond unless a biaryl link
    const bool multiple = unsaturated(g, p, a) && unsaturated(g, p, b) &&
                          !(p.aromatic[a] && p.aromatic[b]);
    if (multiple)
      continue;
    if (rotor_endpoint(g, p, a) && rotor_endpoint(g, p, b))
      f.rotatable++;
  }

  f.aromatic_rings = static_cast<int>(
      std::count(p.aromatic_ring.begin(), p.aromatic_ring.end(), true));
  f.n_rings = static_cast<int>(p.rings.size());

  for (int i = 0; i < n; i++) {
    if (g.species[i] != "C" || p.adj[i].size() != 4)
      continue;
    std::set<std::size_t> sigs;
    for (int j : p.adj[i])
      sigs.insert(branch_signature(g, p, i, j));
    if (sigs.size() == 4) {
      f.chirality_flag = 1;
      break;
    }
  }
  return f;
}

GeometricFeatures geometric_features(const MatN3 &coords) {
  GeometricFeatures f{0.0, 0.0, 0.0, 0.0, {0.0, 0.0, 0.0}};
  if (coords.rows() < 2)
    return f;
  const auto pca = crystal::pca_frame(coords);
  const Vec3 &l = pca.eigenvalues;
  f.radius_of_gyration = std::sqrt(l.sum());
  f.asphericity = l(0) - 0.5 * (l(1) + l(2));
  f.eccentricity = l(0) > 0.0 ? std::sqrt(std::max(0.0, 1.0 - l(2) / l(0))) : 0.0;
  f.planarity = std::sqrt(l(2));
  const RowVec3 c = coords.colwise().mean();
  const MatN3 proj = (coords.rowwise() - c) * pca.axes;
  for (int k = 0; k < 3; k++)
    f.pc_lengths[k] = proj.col(k).maxCoeff() - proj.col(k).minCoeff();
  return f;
}

DescriptorVector compute(const MolecularGraph &g) {
  const auto b = basic_features(g);
  const auto c = chemical_features(g);
  const auto geo = geometric_features(g.coords);
  DescriptorVector v{};
  v[NAtoms] = b.n_atoms;
  v[NHeavy] = b.n_heavy;
  v[MolWeight] = b.mol_weight;
  v[Chirality] = c.chirality_flag;
  v[Donors] = c.donors;
  v[Acceptors] = c.acceptors;
  v[Rotatable] = c.rotatable;
  v[AromaticRings] = c.aromatic_rings;
  v[LogP] = c.logp;
  v[Tpsa] = c.tpsa;
  v[RadiusOfGyration] = geo.radius_of_gyration;
  v[Asphericity] = geo.asphericity;
  v[Eccentricity] = geo.eccentricity;
  v[Planarity] = geo.planarity;
  v[LenPc1] = geo.pc_lengths[0];
  v[LenPc2] = geo.pc_lengths[1];
  v[LenPc3] = geo.pc_lengths[2];
  v[NRings] = c.n_rings;
  return v;
}

DescriptorScaler DescriptorScaler::identity() {
  DescriptorScaler s;
  s.mean.fill(0.0);
  s.scale.fill(1.0);
  return s;
}

DescriptorScaler DescriptorScaler::fit(const std::vector<DescriptorVector> &data) {
  DescriptorScaler s = identity();
  if (data.empty())
    return s;
  const double n = static_cast<double>(data.size());
  for (int k = 0; k < kNumDescriptors; k++) {
    double m = 0.0;
    for (const auto &x : data)
      m += x[k];
    m /= n;
    double var = 0.0;
    for (const auto &x : data)
      var += (x[k] - m) * (x[k] - m);
    var /= n;
    s.mean[k] = m;
    s.scale[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return s;
}

DescriptorVector DescriptorScaler::apply(const DescriptorVector &x) const {
  DescriptorVector y;
  for (int k = 0; k < kNumDescriptors; k++)
    y[k] = (x[k] - mean[k]) / scale[k];
  return y;
}

} // namespace mcf::descriptors
