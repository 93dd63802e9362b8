#include <algorithm>
#include <cmath>
#include <map>
#include <mcf/core/error.h>
#include <mcf/flowmatch.h>
#include <mcf/hungarian.h>
#include <mcf/manifold.h>

namespace mcf::flow {

namespace mf = mcf::manifold;

void FlowSample::validate() const {
  if (rot.size() != frac.size() || chi.size() != frac.size())
    throw Error(ErrorKind::InvalidInput, "flow sample: inconsistent block counts");
  if (!(t >= 0.0 && t <= 1.0))
    throw Error(ErrorKind::InvalidValue, "flow sample: t outside [0, 1]");
  if (!lattice.allFinite())
    throw Error(ErrorKind::InvalidValue, "flow sample: non-finite lattice");
  for (const auto &f : frac)
    if (!f.allFinite() || (f.array() < 0.0).any() || (f.array() >= 1.0).any())
      throw Error(ErrorKind::InvalidValue, "flow sample: frac not wrapped");
  for (const auto &r : rot)
    mf::check_rotation(r, 1e-6);
}

FlowSample from_crystal(const crystal::MolecularCrystal &c) {
  FlowSample s;
  s.lattice = c.lattice;
  s.t = 1.0;
  for (const auto &b : c.blocks) {
    s.frac.push_back(b.centroid_frac);
    s.rot.push_back(b.rotation);
    s.chi.push_back(b.chi);
  }
  return s;
}

void PriorSpec::validate() const {
  for (int k = 0; k < 3; k++)
    if (!(length_std[k] > 0.0) || !std::isfinite(length_mean[k]))
      throw Error(ErrorKind::InvalidParameter, "prior: length std must be > 0");
  if (!(angle_low < angle_high))
    throw Error(ErrorKind::InvalidParameter, "prior: angle bounds not ordered");
}

PriorSpec fit_lattice_prior(const std::vector<Lattice> &lattices) {
  if (lattices.empty())
    throw Error(ErrorKind::InvalidInput, "fit_lattice_prior: empty dataset");
  std::vector<std::array<double, 3>> lengths;
  for (const auto &l : lattices) {
    const Lattice s = mf::standardize_lattice(l).lattice;
    std::array<double, 3> len{s.row(0).norm(), s.row(1).norm(), s.row(2).norm()};
    std::sort(len.begin(), len.end());
    lengths.push_back(len);
  }
  PriorSpec p;
  const double n = static_cast<double>(lengths.size());
  for (int k = 0; k < 3; k++) {
    double mean = 0.0;
    for (const auto &len : lengths)
      mean += len[k];
    mean /= n;
    double var = 0.0;
    for (const auto &len : lengths)
      var += (len[k] - mean) * (len[k] - mean);
    const double sd = lengths.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    p.length_mean[k] = mean;
    p.length_std[k] = std::max(sd, kMinLengthStd);
  }
  return p;
}

Rotation uniform_rotation(Rng &rng) {
  Eigen::Vector4d q;
  double norm = 0.0;
  do {
    for (int k = 0; k < 4; k++)
      q(k) = rng.normal();
    norm = q.norm();
  } while (norm < 1e-12);
  q /= norm;
  Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
  return quat.toRotationMatrix();
}

Rotation opposite_chi_flip() { return Vec3(1.0, -1.0, -1.0).asDiagonal(); }

Lattice sample_lattice(const PriorSpec &prior, Rng &rng) {
  prior.validate();
  std::array<double, 3> len;
  for (int k = 0; k < 3; k++)
    len[k] = prior.length_mean[k] + prior.length_std[k] * rng.normal();
  std::sort(len.begin(), len.end());
  for (auto &x : len)
    x = std::max(x, prior.min_length);
  for (int attempt = 0; attempt < prior.max_angle_tries; attempt++) {
    mf::LatticeParams p{len[0], len[1], len[2],
                        rng.uniform(prior.angle_low, prior.angle_high),
                        rng.uniform(prior.angle_low, prior.angle_high),
                        rng.uniform(prior.angle_low, prior.angle_high)};
    try {
      Lattice l = mf::params_to_lattice(p);
      if (l.determinant() > 0.0)
        return l;
    } catch (const Error &e) {
      if (e.kind() != ErrorKind::InvalidParameter)
        throw;
    }
  }
  throw Error(ErrorKind::PriorSampling,
              "prior: no valid lattice angles after max_angle_tries draws");
}

FlowSample sample_base(int n_blocks, const std::vector<int> &chi,
                       const PriorSpec &prior, Rng &rng) {
  if (n_blocks < 1)
    throw Error(ErrorKind::InvalidParameter, "sample_base: n_blocks must be >= 1");
  if (static_cast<int>(chi.size()) != n_blocks)
    throw Error(ErrorKind::InvalidParameter, "sample_base: chi length != n_blocks");
  FlowSample s;
  s.t = 0.0;
  s.chi = chi;
  s.lattice = sample_lattice(prior, rng);
  for (int i = 0; i < n_blocks; i++)
    s.frac.push_back(FracPoint(rng.uniform(), rng.uniform(), rng.uniform()));
  const Rotation ref = uniform_rotation(rng);
  const Rotation flipped = ref * opposite_chi_flip();
  for (int i = 0; i < n_blocks; i++)
    s.rot.push_back(chi[i] == chi[0] ? ref : flipped);
  return s;
}

namespace {
void check_pair(const FlowSample &c0, const FlowSample &c1) {
  if (c0.size() != c1.size() || c0.rot.size() != c1.rot.size())
    throw Error(ErrorKind::InvalidInput, "flow: mismatched block counts");
}
} // namespace

FlowSample interpolate(const FlowSample &c0, const FlowSample &c1, double t) {
  check_pair(c0, c1);
  FlowSample s;
  s.t = t;
  s.chi = c1.chi;
  s.lattice = (1.0 - t) * c0.lattice + t * c1.lattice;
  for (std::size_t i = 0; i < c0.size(); i++) {
    s.frac.push_back(
        mf::wrap(c0.frac[i] + t * mf::torus_displacement(c0.frac[i], c1.frac[i])));
    s.rot.push_back(mf::so3_geodesic(c0.rot[i], c1.rot[i], t));
  }
  return s;
}

VelocityTarget conditional_velocity(const FlowSample &c0, const FlowSample &c1,
                                    double t) {
  check_pair(c0, c1);
  if (!(t < 1.0))
    throw Error(ErrorKind::InvalidValue, "conditional_velocity: t must be < 1");
  VelocityTarget v;
  v.u_lattice = c1.lattice - c0.lattice;
  v.lattice1 = c1.lattice;
  v.rot1 = c1.rot;
  for (std::size_t i = 0; i < c0.size(); i++) {
    v.u_frac.push_back(mf::torus_displacement(c0.frac[i], c1.frac[i]));
    const Rotation rt = mf::so3_geodesic(c0.rot[i], c1.rot[i], t);
    v.u_rot.push_back(mf::so3_log(rt.transpose() * c1.rot[i]) / (1.0 - t));
  }
  return v;
}

double time_weight(double t, double t_clip) {
  const double d = 1.0 - std::min(t, t_clip);
  return 1.0 / (d * d);
}

LossTerms loss(const Prediction &pred, const VelocityTarget &target,
               const FlowSample &state, const LossWeights &w) {
  const std::size_t n = state.size();
  if (pred.rot1.size() != n || pred.u_frac.size() != n ||
      target.rot1.size() != n || target.u_frac.size() != n)
    throw Error(ErrorKind::InvalidInput, "loss: mismatched block counts");
  const double tw = time_weight(state.t, w.t_clip);
  LossTerms out;
  out.lattice = tw * w.lattice * (pred.lattice1 - target.lattice1).squaredNorm();
  if (n > 0) {
    double rot = 0.0, frac = 0.0;
    for (std::size_t i = 0; i < n; i++) {
      const Rotation rt_inv = state.rot[i].transpose();
      rot += (mf::so3_log(rt_inv * pred.rot1[i]) -
              mf::so3_log(rt_inv * target.rot1[i]))
                 .squaredNorm();
      frac += (pred.u_frac[i] - target.u_frac[i]).squaredNorm();
    }
    out.rotation = tw * w.rotation * rot / static_cast<double>(n);
    out.frac = w.frac * frac / static_cast<double>(n);
  }
  out.total = out.lattice + out.rotation + out.frac;
  return out;
}

double ot_pair_cost(const FracPoint &f0, const Rotation &r0,
                    const FracPoint &f1, const Rotation &r1) {
  const double d = mf::geodesic_distance_so3(r0, r1) / kPi;
  return mf::torus_displacement(f0, f1).squaredNorm() + d * d;
}

double ot_total_cost(const FlowSample &c0, const FlowSample &c1) {
  check_pair(c0, c1);
  double total = 0.0;
  for (std::size_t i = 0; i < c0.size(); i++)
    total += ot_pair_cost(c0.frac[i], c0.rot[i], c1.frac[i], c1.rot[i]);
  return total;
}

std::vector<int> ot_assignment(const FlowSample &c0, const FlowSample &c1) {
  check_pair(c0, c1);
  std::map<int, std::vector<int>> g0, g1;
  for (std::size_t i = 0; i < c0.size(); i++) {
    g0[c0.chi[i]].push_back(static_cast<int>(i));
    g1[c1.chi[i]].push_back(static_cast<int>(i));
  }
  bool same = g0.size() == g1.size();
  for (const auto &[chi, idx] : g0)
    same = same && g1.count(chi) && g1[chi].size() == idx.size();
  if (!same)
    throw Error(ErrorKind::InvalidInput, "ot_align: chi multisets differ");

  std::vector<int> perm(c0.size(), -1);
  for (const auto &[chi, rows] : g0) {
    const auto &cols = g1[chi];
    const auto k = static_cast<Eigen::Index>(rows.size());
    Mat cost(k, k);
    for (Eigen::Index a = 0; a < k; a++)
      for (Eigen::Index b = 0; b < k; b++)
        cost(a, b) = ot_pair_cost(c0.frac[rows[a]], c0.rot[rows[a]],
                                  c1.frac[cols[b]], c1.rot[cols[b]]);
    const auto assign = hungarian(cost);
    for (Eigen::Index a = 0; a < k; a++)
      perm[cols[assign[a]]] = rows[a];
  }
  return perm;
}

FlowSample ot_align(const FlowSample &c0, const FlowSample &c1) {
  const auto perm = ot_assignment(c0, c1);
  FlowSample out = c0;
  for (std::size_t j = 0; j < perm.size(); j++) {
    out.frac[j] = c0.frac[perm[j]];
    out.rot[j] = c0.rot[perm[j]];
    out.chi[j] = c0.chi[perm[j]];
  }
  return out;
}

} // namespace mcf::flow
