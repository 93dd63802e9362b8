#pragma once
#include <array>
#include <mcf/core/linalg.h>
#include <mcf/core/rng.h>
#include <mcf/crystal.h>
#include <vector>

namespace mcf::flow {

/// Point on the product manifold (lattice, torus^n, SO(3)^n) at time t.
struct FlowSample {
  Lattice lattice{Lattice::Identity()};
  std::vector<FracPoint> frac;
  std::vector<Rotation> rot;
  std::vector<int> chi;
  double t{0.0};

  std::size_t size() const { return frac.size(); }
  void validate() const;
};

/// Data endpoint (t = 1) of a decomposed crystal.
FlowSample from_crystal(const crystal::MolecularCrystal &c);

struct VelocityTarget {
  Mat3 u_lattice{Mat3::Zero()};
  std::vector<Vec3> u_frac;
  std::vector<AxisAngle> u_rot; // tangent at R_t, axis-angle
  Lattice lattice1{Lattice::Identity()};
  std::vector<Rotation> rot1;
};

struct PriorSpec {
  std::array<double, 3> length_mean{5.0, 5.0, 5.0};
  std::array<double, 3> length_std{1.0, 1.0, 1.0};
  double angle_low{60.0};
  double angle_high{120.0};
  int max_angle_tries{100};
  double min_length{0.5};

  void validate() const;
};

constexpr double kMinLengthStd = 1e-3;

PriorSpec fit_lattice_prior(const std::vector<Lattice> &lattices);

/// Haar-uniform rotation from a normalised Gaussian quaternion.
Rotation uniform_rotation(Rng &rng);

/// Rotation applied to blocks whose chi differs from block 0.
Rotation opposite_chi_flip();

Lattice sample_lattice(const PriorSpec &prior, Rng &rng);

FlowSample sample_base(int n_blocks, const std::vector<int> &chi,
                       const PriorSpec &prior, Rng &rng);

FlowSample interpolate(const FlowSample &c0, const FlowSample &c1, double t);

VelocityTarget conditional_velocity(const FlowSample &c0, const FlowSample &c1,
                                    double t);

/// Model outputs for one crystal: denoised endpoints and centroid velocity.
struct Prediction {
  Lattice lattice1{Lattice::Identity()};
  std::vector<Rotation> rot1;
  std::vector<Vec3> u_frac;
};

struct LossWeights {
  double lattice{0.1};
  double rotation{1.0};
  double frac{2.0};
  double t_clip{0.9};
};

struct LossTerms {
  double total{0.0};
  double lattice{0.0};  // weighted, time-scaled contributions
  double rotation{0.0};
  double frac{0.0};
};

double time_weight(double t, double t_clip);

LossTerms loss(const Prediction &pred, const VelocityTarget &target,
               const FlowSample &state, const LossWeights &w = {});

double ot_pair_cost(const FracPoint &f0, const Rotation &r0,
                    const FracPoint &f1, const Rotation &r1);
double ot_total_cost(const FlowSample &c0, const FlowSample &c1);

/// perm[j] = index of the c0 block paired with c1 block j.
std::vector<int> ot_assignment(const FlowSample &c0, const FlowSample &c1);
FlowSample ot_align(const FlowSample &c0, const FlowSample &c1);

} // namespace mcf::flow
