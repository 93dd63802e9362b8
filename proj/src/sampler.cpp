#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <mcf/core/error.h>
#include <mcf/elements.h>
#include <mcf/manifold.h>
#include <mcf/sampler.h>

namespace mcf::sampler {

namespace mf = mcf::manifold;

AnalyticField::AnalyticField(flow::FlowSample c0, flow::FlowSample c1)
    : m_c0(std::move(c0)), m_c1(std::move(c1)) {
  if (m_c0.size() != m_c1.size())
    throw Error(ErrorKind::InvalidInput, "analytic field: block count mismatch");
}

flow::Prediction AnalyticField::predict(const flow::FlowSample &) const {
  flow::Prediction p;
  p.lattice1 = m_c1.lattice;
  p.rot1 = m_c1.rot;
  for (std::size_t i = 0; i < m_c0.size(); i++)
    p.u_frac.push_back(mf::torus_displacement(m_c0.frac[i], m_c1.frac[i]));
  return p;
}

NetworkField::NetworkField(const net::Model &model,
                           const std::vector<net::MoleculeInput> &molecules,
                           std::vector<int> block_type)
    : m_model(model), m_block_type(std::move(block_type)) {
  ad::NoGradGuard guard;
  m_embeddings = model.embed(molecules).value();
}

flow::Prediction NetworkField::predict(const flow::FlowSample &state) const {
  return m_model.predict(state, m_embeddings, m_block_type);
}

void SamplerConfig::validate() const {
  if (n_steps < 1)
    throw Error(ErrorKind::Config, "sampler: n_steps must be >= 1");
  if (s_uf < 0.0 || s_ur < 0.0 || s_ul < 0.0)
    throw Error(ErrorKind::Config, "sampler: annealing scalings must be >= 0");
  if (t_clip && !(*t_clip > 0.0 && *t_clip < 1.0))
    throw Error(ErrorKind::Config, "sampler: t_clip must lie in (0, 1)");
  if (n_mc < 1 || max_resample < 0)
    throw Error(ErrorKind::Config, "sampler: invalid n_mc or max_resample");
}

flow::FlowSample integrate(const FlowModel &model, const flow::FlowSample &c0,
                           const SamplerConfig &cfg) {
  cfg.validate();
  flow::FlowSample s = c0;
  const double dt = 1.0 / cfg.n_steps;
  const double guard = cfg.t_clip.value_or(1.0 - dt);
  for (int k = 0; k < cfg.n_steps; k++) {
    const double t = k * dt;
    s.t = t;
    const flow::Prediction p = model.predict(s);
    if (p.rot1.size() != s.size() || p.u_frac.size() != s.size())
      throw Error(ErrorKind::IntegrationFailure,
                  fmt::format("step {}: model output size mismatch", k));
    const double denom = 1.0 - std::min(t, guard);
    const Mat3 u_l = (p.lattice1 - s.lattice) / denom;
    s.lattice += (1.0 + cfg.s_ul * t) * u_l * dt;
    for (std::size_t i = 0; i < s.size(); i++) {
      const Vec3 df = (1.0 + cfg.s_uf * t) * p.u_frac[i] * dt;
      const AxisAngle u_r = mf::so3_log(s.rot[i].transpose() * p.rot1[i]) / denom;
      const Rotation next = s.rot[i] * mf::so3_exp((1.0 + cfg.s_ur * t) * u_r * dt);
      if (!df.allFinite() || !next.allFinite())
        throw Error(ErrorKind::IntegrationFailure,
                    fmt::format("non-finite state at step {}", k));
      s.frac[i] = mf::wrap(s.frac[i] + df);
      s.rot[i] = mf::nearest_rotation(next);
    }
    if (!s.lattice.allFinite())
      throw Error(ErrorKind::IntegrationFailure,
                  fmt::format("non-finite lattice at step {}", k));
  }
  s.t = 1.0;
  if (!(s.lattice.determinant() > 0.0))
    throw Error(ErrorKind::InvalidLattice, "integrated lattice has det <= 0");
  return s;
}

Ellipsoid block_ellipsoid(const MatN3 &cart, double padding) {
  Ellipsoid e;
  e.centre = cart.colwise().mean();
  if (cart.rows() < 2) {
    e.axes = Mat3::Identity();
    e.semi_axes = Vec3::Constant(padding);
    return e;
  }
  const auto pca = crystal::pca_frame(cart);
  e.axes = pca.axes;
  for (int k = 0; k < 3; k++)
    e.semi_axes(k) = 2.0 * std::sqrt(std::max(pca.eigenvalues(k), 0.0)) + padding;
  return e;
}

namespace {
bool inside(const Ellipsoid &e, const RowVec3 &centre, const RowVec3 &p) {
  const Vec3 local = e.axes.transpose() * (p - centre).transpose();
  return local.cwiseQuotient(e.semi_axes).squaredNorm() <= 1.0;
}

RowVec3 unit_ball_point(Rng &rng) {
  for (;;) {
    RowVec3 p(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    if (p.squaredNorm() <= 1.0)
      return p;
  }
}

/// Lattice translations that bring b's centre within reach of a's centre.
std::vector<RowVec3> image_offsets(const RowVec3 &delta, double reach,
                                   const std::optional<Lattice> &lattice) {
  if (!lattice)
    return {RowVec3::Zero()};
  const Mat3 inv = lattice->inverse();
  std::array<int, 3> range;
  for (int k = 0; k < 3; k++) {
    const double spacing = 1.0 / inv.col(k).norm();
    range[k] = static_cast<int>(std::ceil(reach / spacing)) + 1;
  }
  std::vector<RowVec3> out;
  for (int i = -range[0]; i <= range[0]; i++)
    for (int j = -range[1]; j <= range[1]; j++)
      for (int k = -range[2]; k <= range[2]; k++) {
        const RowVec3 off = RowVec3(i, j, k) * (*lattice);
        if ((delta + off).norm() <= reach)
          out.push_back(off);
      }
  return out;
}

OverlapEstimate overlap_with_offsets(const Ellipsoid &a, const Ellipsoid &b,
                                     const std::vector<RowVec3> &offsets,
                                     int n_mc, Rng &rng) {
  if (offsets.empty() || n_mc < 1)
    return {};
  // sample inside the smaller ellipsoid
  const bool a_small = a.semi_axes.prod() <= b.semi_axes.prod();
  const Ellipsoid &small = a_small ? a : b;
  const Ellipsoid &big = a_small ? b : a;
  const double sign = a_small ? 1.0 : -1.0;
  int hits = 0;
  for (int s = 0; s < n_mc; s++) {
    const RowVec3 u = unit_ball_point(rng);
    const RowVec3 p =
        small.centre + (small.axes * small.semi_axes.asDiagonal() * u.transpose()).transpose();
    for (const auto &off : offsets)
      if (inside(big, big.centre + sign * off, p)) {
        hits++;
        break;
      }
  }
  OverlapEstimate est;
  est.fraction = static_cast<double>(hits) / n_mc;
  est.std_error = std::sqrt(est.fraction * (1.0 - est.fraction) / n_mc);
  return est;
}
} // namespace

OverlapEstimate ellipsoid_overlap(const Ellipsoid &a, const Ellipsoid &b,
                                  const std::optional<Lattice> &lattice,
                                  int n_mc, Rng &rng) {
  const RowVec3 delta = b.centre - a.centre;
  const double reach = a.semi_axes.maxCoeff() + b.semi_axes.maxCoeff();
  return overlap_with_offsets(a, b, image_offsets(delta, reach, lattice), n_mc, rng);
}

OverlapEstimate ellipsoid_overlap(const MatN3 &block_a, const MatN3 &block_b,
                                  const Lattice &lattice, int n_mc, Rng &rng) {
  if (block_a.rows() < 1 || block_b.rows() < 1)
    throw Error(ErrorKind::InvalidInput, "ellipsoid_overlap: empty block");
  return ellipsoid_overlap(block_ellipsoid(block_a), block_ellipsoid(block_b),
                           lattice, n_mc, rng);
}

double max_overlap(const crystal::MolecularCrystal &c, int n_mc, Rng &rng) {
  std::vector<Ellipsoid> ell;
  for (const auto &b : c.blocks) {
    const RowVec3 centre = b.centroid_frac.transpose() * c.lattice;
    MatN3 cart = b.internal * b.rotation.transpose();
    cart.rowwise() += centre;
    ell.push_back(block_ellipsoid(cart));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < ell.size(); i++)
    for (std::size_t j = i; j < ell.size(); j++) {
      const RowVec3 delta = ell[j].centre - ell[i].centre;
      const double reach = ell[i].semi_axes.maxCoeff() + ell[j].semi_axes.maxCoeff();
      auto offsets = image_offsets(delta, reach, c.lattice);
      if (i == j)
        offsets.erase(std::remove_if(offsets.begin(), offsets.end(),
                                     [](const RowVec3 &o) { return o.isZero(); }),
                      offsets.end());
      worst = std::max(worst,
                       overlap_with_offsets(ell[i], ell[j], offsets, n_mc, rng).fraction);
    }
  return worst;
}

std::vector<int> chi_pattern(const std::string &pattern, int z) {
  if (z < 1)
    throw Error(ErrorKind::InvalidParameter, "Z must be >= 1");
  std::vector<int> out(z, 0);
  if (pattern == "same")
    return out;
  if (pattern == "half") {
    for (int i = z - z / 2; i < z; i++)
      out[i] = 1;
    return out;
  }
  if (static_cast<int>(pattern.size()) != z)
    throw Error(ErrorKind::InvalidParameter,
                fmt::format("chi pattern '{}' must have length Z = {}", pattern, z));
  for (int i = 0; i < z; i++) {
    if (pattern[i] != '0' && pattern[i] != '1')
      throw Error(ErrorKind::InvalidParameter, "chi pattern must contain only 0/1");
    out[i] = pattern[i] - '0';
  }
  return out;
}

namespace {
struct Conformer {
  MatN3 internal;
  int chi;
  std::vector<std::string> species;
};

Conformer prepare_conformer(const GenerationRequest &req) {
  if (req.species.empty() || req.coords.rows() != static_cast<Eigen::Index>(req.species.size()))
    throw Error(ErrorKind::InvalidInput, "generation: malformed conformer");
  Conformer c;
  c.species = req.species;
  const RowVec3 centroid = req.coords.colwise().mean();
  const MatN3 centred = req.coords.rowwise() - centroid;
  const auto st = crystal::extract_chi(centred, atomic_masses(req.species));
  c.internal = centred * st.frame;
  c.chi = st.chi;
  return c;
}
} // namespace

GenerationResult generate_with(const FlowModel &field, const flow::PriorSpec &prior,
                               const GenerationRequest &req,
                               const SamplerConfig &cfg) {
  cfg.validate();
  GenerationResult out;
  if (req.n_samples <= 0)
    return out;
  if (static_cast<int>(req.chi_pattern.size()) != req.z)
    throw Error(ErrorKind::InvalidParameter, "chi pattern length must equal Z");
  const Conformer conf = prepare_conformer(req);
  const Mat3 mirror = Vec3(1.0, 1.0, -1.0).asDiagonal();

  for (int i = 0; i < req.n_samples; i++) {
    Rng rng = Rng::stream(req.seed, static_cast<std::uint64_t>(i));
    bool accepted = false;
    int attempt = 0;
    for (; attempt <= cfg.max_resample && !accepted; attempt++) {
      flow::FlowSample end;
      try {
        const auto c0 = flow::sample_base(req.z, req.chi_pattern, prior, rng);
        end = integrate(field, c0, cfg);
      } catch (const Error &e) {
        if (e.kind() == ErrorKind::InvalidLattice ||
            e.kind() == ErrorKind::IntegrationFailure)
          continue;
        throw;
      }
      SampleResult r;
      r.sample_seed = req.seed;
      r.resamples = attempt;
      r.crystal.id = fmt::format("{}-{}", req.id, i);
      r.crystal.lattice = end.lattice;
      int offset = 0;
      for (int b = 0; b < req.z; b++) {
        crystal::BuildingBlock blk;
        blk.species = conf.species;
        blk.masses = atomic_masses(conf.species);
        blk.internal = end.chi[b] == conf.chi ? conf.internal
                                              : MatN3(conf.internal * mirror);
        blk.rotation = end.rot[b];
        blk.chi = end.chi[b];
        blk.centroid_frac = end.frac[b];
        for (std::size_t a = 0; a < conf.species.size(); a++)
          blk.atom_indices.push_back(offset++);
        r.crystal.blocks.push_back(std::move(blk));
      }
      r.structure = crystal::reconstruct(r.crystal);
      if (!r.structure.cart.allFinite())
        continue;
      if (cfg.overlap_threshold) {
        r.max_overlap = max_overlap(r.crystal, cfg.n_mc, rng);
        if (r.max_overlap > *cfg.overlap_threshold)
          continue;
      }
      out.samples.push_back(std::move(r));
      accepted = true;
    }
    if (!accepted)
      out.warnings.push_back(fmt::format(
          "sample {}: no accepted structure after {} attempts", i, attempt));
  }
  return out;
}

GenerationResult generate(const net::Model &model, const GenerationRequest &req,
                          const SamplerConfig &cfg) {
  if (req.n_samples <= 0)
    return {};
  const Conformer conf = prepare_conformer(req);
  const std::vector<net::MoleculeInput> mols = {
      net::make_molecule_input(conf.species, conf.internal)};
  NetworkField field(model, mols, std::vector<int>(req.z, 0));
  return generate_with(field, model.prior, req, cfg);
}

} // namespace mcf::sampler
