#include "catch_amalgamated.hpp"
#include "test_util.h"
#include "toy_data.h"

#include <cmath>
#include <limits>
#include <mcf/elements.h>
#include <mcf/manifold.h>
#include <mcf/net/train.h>
#include <mcf/sampler.h>

using namespace mcf;
using namespace mcf::sampler;
using Catch::Approx;

namespace {

struct EndpointError {
  double lattice, frac, rot;
};

EndpointError endpoint_error(const flow::FlowSample &a, const flow::FlowSample &b) {
  EndpointError e{(a.lattice - b.lattice).norm(), 0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); i++) {
    e.frac = std::max(e.frac, manifold::torus_displacement(a.frac[i], b.frac[i]).norm());
    e.rot = std::max(e.rot, manifold::geodesic_distance_so3(a.rot[i], b.rot[i]));
  }
  return e;
}

std::pair<flow::FlowSample, flow::FlowSample> random_pair(Rng &rng, int n) {
  flow::PriorSpec prior;
  std::vector<int> chi(n, 0);
  for (int i = 0; i < n; i++)
    chi[i] = i % 2;
  auto c0 = flow::sample_base(n, chi, prior, rng);
  auto c1 = flow::sample_base(n, chi, prior, rng);
  c1.t = 1.0;
  return {c0, c1};
}

/// Deterministic state-dependent field for comparing integrator paths.
class DriftField : public FlowModel {
public:
  flow::Prediction predict(const flow::FlowSample &s) const override {
    flow::Prediction p;
    p.lattice1 = s.lattice * (1.0 + 0.3 * s.t);
    for (std::size_t i = 0; i < s.size(); i++) {
      p.rot1.push_back(s.rot[i] * manifold::so3_exp(Vec3(0.2, -0.1, 0.3 * s.t)));
      p.u_frac.push_back(Vec3(0.1, 0.2 * s.t, -0.05) + 0.01 * s.frac[i]);
    }
    return p;
  }
};

class BrokenField : public FlowModel {
public:
  int mode{0};
  flow::Prediction predict(const flow::FlowSample &s) const override {
    flow::Prediction p;
    p.lattice1 = mode == 1 ? Mat3(-2.0 * s.lattice) : s.lattice;
    p.rot1 = s.rot;
    for (std::size_t i = 0; i < s.size(); i++)
      p.u_frac.push_back(mode == 0 && s.t > 0.5
                             ? Vec3::Constant(std::numeric_limits<double>::quiet_NaN())
                             : Vec3::Zero());
    if (mode == 2)
      p.u_frac.pop_back();
    return p;
  }
};

SamplerConfig plain(int steps) {
  SamplerConfig cfg;
  cfg.n_steps = steps;
  cfg.s_uf = 0.0;
  cfg.s_ur = 0.0;
  return cfg;
}

GenerationRequest benzene_request(int z, int n) {
  const auto &mol = synthetic::molecule("benzene");
  GenerationRequest req;
  req.species = mol.species;
  req.coords = mol.coords;
  req.z = z;
  req.chi_pattern = chi_pattern("half", z);
  req.n_samples = n;
  req.seed = 99;
  return req;
}

} // namespace

TEST_CASE("analytic field reaches the data endpoint in 50 steps", "[sampler]") {
  Rng rng(1);
  for (int trial = 0; trial < 20; trial++) {
    auto [c0, c1] = random_pair(rng, 1 + trial % 4);
    const auto end = integrate(AnalyticField(c0, c1), c0, plain(50));
    const auto e = endpoint_error(end, c1);
    CHECK(e.lattice < 1e-2);
    CHECK(e.frac < 1e-2);
    CHECK(e.rot < 1e-2);
  }
}

TEST_CASE("analytic endpoint error does not grow with more steps", "[sampler]") {
  Rng rng(2);
  for (int trial = 0; trial < 10; trial++) {
    auto [c0, c1] = random_pair(rng, 3);
    double prev = std::numeric_limits<double>::infinity();
    for (int steps : {10, 50, 250}) {
      const auto e = endpoint_error(integrate(AnalyticField(c0, c1), c0, plain(steps)), c1);
      const double total = e.lattice + e.frac + e.rot;
      CHECK(total <= prev + 1e-9);
      prev = total;
    }
  }
}

TEST_CASE("single step jumps to the denoised heads", "[sampler]") {
  Rng rng(3);
  auto [c0, c1] = random_pair(rng, 2);
  const auto end = integrate(AnalyticField(c0, c1), c0, plain(1));
  CHECK((end.lattice - c1.lattice).norm() < 1e-12);
  for (std::size_t i = 0; i < c0.size(); i++)
    CHECK((end.rot[i] - c1.rot[i]).norm() < 1e-9);
}

TEST_CASE("zero annealing is plain Euler", "[sampler]") {
  Rng rng(4);
  auto [c0, c1] = random_pair(rng, 3);
  DriftField field;
  const int n = 20;
  const auto got = integrate(field, c0, plain(n));

  flow::FlowSample s = c0;
  const double dt = 1.0 / n;
  for (int k = 0; k < n; k++) {
    s.t = k * dt;
    const auto p = field.predict(s);
    const double denom = 1.0 - std::min(s.t, 1.0 - dt);
    s.lattice += (p.lattice1 - s.lattice) / denom * dt;
    for (std::size_t i = 0; i < s.size(); i++) {
      const Vec3 u = manifold::so3_log(s.rot[i].transpose() * p.rot1[i]) / denom;
      s.frac[i] = manifold::wrap(Vec3(s.frac[i] + p.u_frac[i] * dt));
      s.rot[i] = manifold::nearest_rotation(s.rot[i] * manifold::so3_exp(u * dt));
    }
  }
  CHECK(got.lattice == s.lattice);
  for (std::size_t i = 0; i < s.size(); i++) {
    CHECK(got.frac[i] == s.frac[i]);
    CHECK(got.rot[i] == s.rot[i]);
  }
}

TEST_CASE("annealing scales centroid and rotation velocities only", "[sampler]") {
  Rng rng(5);
  auto [c0, c1] = random_pair(rng, 2);
  SamplerConfig annealed = plain(50);
  annealed.s_uf = 9.0;
  annealed.s_ur = 3.0;
  const auto a = integrate(AnalyticField(c0, c1), c0, annealed);
  const auto b = integrate(AnalyticField(c0, c1), c0, plain(50));
  CHECK((a.lattice - b.lattice).norm() < 1e-12);
  // the constant centroid velocity is overshot by the factor sum
  double factor = 0.0;
  for (int k = 0; k < 50; k++)
    factor += (1.0 + 9.0 * k / 50.0) / 50.0;
  for (std::size_t i = 0; i < c0.size(); i++) {
    const Vec3 disp = manifold::torus_displacement(c0.frac[i], c1.frac[i]);
    const Vec3 expect = manifold::wrap(Vec3(c0.frac[i] + factor * disp));
    CHECK(manifold::torus_displacement(a.frac[i], expect).norm() < 1e-9);
  }
}

TEST_CASE("integration failures are reported", "[sampler]") {
  Rng rng(6);
  auto [c0, c1] = random_pair(rng, 2);
  BrokenField field;
  field.mode = 0;
  test::require_kind(ErrorKind::IntegrationFailure,
                     [&] { integrate(field, c0, plain(10)); });
  field.mode = 1;
  test::require_kind(ErrorKind::InvalidLattice, [&] { integrate(field, c0, plain(10)); });
  field.mode = 2;
  test::require_kind(ErrorKind::IntegrationFailure,
                     [&] { integrate(field, c0, plain(10)); });
  try {
    field.mode = 0;
    integrate(field, c0, plain(10));
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("step 6") != std::string::npos);
  }
}

TEST_CASE("sampler config validation", "[sampler]") {
  SamplerConfig cfg;
  cfg.n_steps = 0;
  test::require_kind(ErrorKind::Config, [&] { cfg.validate(); });
  cfg = {};
  cfg.s_ur = -1.0;
  test::require_kind(ErrorKind::Config, [&] { cfg.validate(); });
  cfg = {};
  cfg.t_clip = 1.0;
  test::require_kind(ErrorKind::Config, [&] { cfg.validate(); });
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.n_steps == 50);
  CHECK(cfg.s_uf == 9.0);
  CHECK(cfg.s_ur == 3.0);
}

TEST_CASE("chi patterns", "[sampler]") {
  CHECK(chi_pattern("same", 3) == std::vector<int>{0, 0, 0});
  CHECK(chi_pattern("half", 4) == std::vector<int>{0, 0, 1, 1});
  CHECK(chi_pattern("half", 3) == std::vector<int>{0, 0, 1});
  CHECK(chi_pattern("0110", 4) == std::vector<int>{0, 1, 1, 0});
  test::require_kind(ErrorKind::InvalidParameter, [] { chi_pattern("01", 3); });
  test::require_kind(ErrorKind::InvalidParameter, [] { chi_pattern("0a1", 3); });
  test::require_kind(ErrorKind::InvalidParameter, [] { chi_pattern("same", 0); });
}

TEST_CASE("ellipsoid overlap oracles", "[sampler][overlap]") {
  Rng rng(7);
  Ellipsoid unit;
  unit.centre = RowVec3::Zero();
  unit.axes = Mat3::Identity();
  unit.semi_axes = Vec3::Ones();

  CHECK(ellipsoid_overlap(unit, unit, std::nullopt, 1000, rng).fraction == 1.0);

  Ellipsoid far = unit;
  far.centre = RowVec3(2.01, 0.0, 0.0);
  CHECK(ellipsoid_overlap(unit, far, std::nullopt, 1000, rng).fraction == 0.0);

  // two unit spheres one radius apart: lens volume over sphere volume = 5/16
  Ellipsoid near = unit;
  near.centre = RowVec3(0.0, 1.0, 0.0);
  const auto est = ellipsoid_overlap(unit, near, std::nullopt, 20000, rng);
  CHECK(std::abs(est.fraction - 5.0 / 16.0) < 3.0 * est.std_error);
  CHECK(est.std_error > 0.0);

  // the same pair through a periodic image
  const Lattice cell = 10.0 * Lattice::Identity();
  Ellipsoid wrapped = unit;
  wrapped.centre = RowVec3(9.0, 0.0, 0.0);
  CHECK(ellipsoid_overlap(unit, wrapped, std::nullopt, 2000, rng).fraction == 0.0);
  const auto img = ellipsoid_overlap(unit, wrapped, cell, 20000, rng);
  CHECK(std::abs(img.fraction - 5.0 / 16.0) < 3.0 * img.std_error);
}

TEST_CASE("block ellipsoid construction", "[sampler][overlap]") {
  MatN3 rod(2, 3);
  rod << -1.0, 0.0, 0.0, 1.0, 0.0, 0.0;
  const Ellipsoid e = block_ellipsoid(rod);
  // variance along the rod is 1
  CHECK(e.semi_axes.maxCoeff() == Approx(2.5));
  CHECK(e.semi_axes.minCoeff() == Approx(0.5));
  MatN3 atom(1, 3);
  atom << 1.0, 2.0, 3.0;
  const Ellipsoid s = block_ellipsoid(atom);
  CHECK(s.semi_axes == Vec3::Constant(0.5));
  Rng rng(8);
  test::require_kind(ErrorKind::InvalidInput, [&] {
    ellipsoid_overlap(MatN3(0, 3), atom, Lattice::Identity(), 10, rng);
  });
}

TEST_CASE("overlap of a dense crystal exceeds a loose one", "[sampler][overlap]") {
  Rng rng(9);
  synthetic::CrystalOptions loose;
  loose.packing = 3.0;
  const auto s = synthetic::random_crystal(synthetic::molecule("benzene"), loose, rng);
  auto c = crystal::decompose(s);
  const double spread = max_overlap(c, 4000, rng);
  c.lattice *= 0.3;
  const double squeezed = max_overlap(c, 4000, rng);
  CHECK(squeezed > spread);
  CHECK(squeezed > 0.05);
}

TEST_CASE("generation from an untrained network yields valid crystals", "[sampler][generate]") {
  net::Model model(test::small_config(), 5);
  model.prior = flow::fit_lattice_prior({Lattice(7.0 * Lattice::Identity())});
  auto req = benzene_request(2, 200);
  SamplerConfig cfg;
  cfg.n_steps = 20;
  cfg.overlap_threshold.reset();
  const auto out = generate(model, req, cfg);
  const auto n_atoms = static_cast<Eigen::Index>(req.species.size()) * req.z;
  CHECK(out.samples.size() + out.warnings.size() == 200);
  for (const auto &r : out.samples) {
    CHECK(r.crystal.lattice.determinant() > 0.0);
    CHECK(r.structure.cart.rows() == n_atoms);
    CHECK(r.structure.cart.allFinite());
    CHECK(r.crystal.chis() == req.chi_pattern);
    for (const auto &b : r.crystal.blocks) {
      CHECK((b.rotation.transpose() * b.rotation - Mat3::Identity()).norm() < 1e-8);
      CHECK(b.rotation.determinant() > 0.0);
      CHECK(b.centroid_frac.minCoeff() >= 0.0);
      CHECK(b.centroid_frac.maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("generation is deterministic per seed and handles edge cases",
          "[sampler][generate]") {
  net::Model model(test::small_config(), 6);
  model.prior = flow::fit_lattice_prior({Lattice(8.0 * Lattice::Identity())});
  SamplerConfig cfg;
  cfg.n_steps = 10;
  cfg.n_mc = 256;
  auto req = benzene_request(2, 3);
  const auto a = generate(model, req, cfg);
  const auto b = generate(model, req, cfg);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); i++) {
    CHECK(a.samples[i].structure.cart == b.samples[i].structure.cart);
    CHECK(a.samples[i].crystal.lattice == b.samples[i].crystal.lattice);
    CHECK(a.samples[i].max_overlap <= *cfg.overlap_threshold);
  }

  req.n_samples = 0;
  CHECK(generate(model, req, cfg).samples.empty());

  req.n_samples = 2;
  req.chi_pattern = {0};
  test::require_kind(ErrorKind::InvalidParameter, [&] { generate(model, req, cfg); });

  // an impossible threshold exhausts the budget and yields warnings
  req.chi_pattern = chi_pattern("same", 2);
  cfg.overlap_threshold = -1.0;
  cfg.max_resample = 2;
  const auto none = generate(model, req, cfg);
  CHECK(none.samples.empty());
  CHECK(none.warnings.size() == 2);
}

TEST_CASE("opposite chi blocks carry mirrored internal coordinates", "[sampler][generate]") {
  Rng rng(10);
  auto [c0, c1] = random_pair(rng, 2);
  const auto &mol = synthetic::molecule("chfclbr");
  GenerationRequest req;
  req.species = mol.species;
  req.coords = mol.coords;
  req.z = 2;
  req.chi_pattern = {0, 1};
  req.n_samples = 1;
  SamplerConfig cfg = plain(10);
  cfg.overlap_threshold.reset();
  const auto out = generate_with(AnalyticField(c0, c1), flow::PriorSpec{}, req, cfg);
  REQUIRE(out.samples.size() == 1);
  const auto &blocks = out.samples[0].crystal.blocks;
  const auto masses = atomic_masses(mol.species);
  CHECK(crystal::extract_chi(blocks[0].internal, masses).chi !=
        crystal::extract_chi(blocks[1].internal, masses).chi);
  CHECK(blocks[0].chi == 0);
  CHECK(blocks[1].chi == 1);
}

TEST_CASE("sampling commutes with a global rotation", "[sampler][equivariance]") {
  net::Model model(test::small_config(), 7);
  const auto data = test::examples(4, 31);
  net::fit_statistics(model, data);
  const auto &ex = data.front();
  NetworkField field(model, ex.molecules, ex.block_type);
  Rng rng(11);
  const auto c0 = flow::sample_base(static_cast<int>(ex.data.size()), ex.data.chi,
                                    model.prior, rng);
  const Mat3 q = test::random_rotation(rng);
  flow::FlowSample rotated = c0;
  rotated.lattice = c0.lattice * q.transpose();
  for (auto &r : rotated.rot)
    r = q * r;
  SamplerConfig cfg;
  const auto a = integrate(field, c0, cfg);
  const auto b = integrate(field, rotated, cfg);
  CHECK((b.lattice - a.lattice * q.transpose()).norm() < 1e-5);
  for (std::size_t i = 0; i < a.size(); i++) {
    CHECK((b.rot[i] - q * a.rot[i]).norm() < 1e-5);
    CHECK(manifold::torus_displacement(a.frac[i], b.frac[i]).norm() < 1e-5);
  }
}
