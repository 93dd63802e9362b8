#pragma once
#include <cstdint>
#include <mcf/crystal.h>
#include <mcf/flowmatch.h>
#include <mcf/net/model.h>
#include <optional>
#include <string>
#include <vector>

namespace mcf::sampler {

/// Anything that maps a state at time t to denoised endpoints and a centroid
/// velocity.
class FlowModel {
public:
  virtual ~FlowModel() = default;
  virtual flow::Prediction predict(const flow::FlowSample &state) const = 0;
};

/// Exact conditional field of a fixed (base, data) pair.
class AnalyticField : public FlowModel {
public:
  AnalyticField(flow::FlowSample c0, flow::FlowSample c1);
  flow::Prediction predict(const flow::FlowSample &state) const override;

private:
  flow::FlowSample m_c0, m_c1;
};

/// Trained network with building-block embeddings computed once.
class NetworkField : public FlowModel {
public:
  NetworkField(const net::Model &model, const std::vector<net::MoleculeInput> &molecules,
               std::vector<int> block_type);
  flow::Prediction predict(const flow::FlowSample &state) const override;

private:
  const net::Model &m_model;
  Mat m_embeddings;
  std::vector<int> m_block_type;
};

struct SamplerConfig {
  int n_steps{50};
  double s_uf{9.0};
  double s_ur{3.0};
  double s_ul{0.0};              // lattice annealing, off by default
  std::optional<double> t_clip;  // unset: 1 - dt
  std::optional<double> overlap_threshold{0.05};
  int n_mc{2048};
  int max_resample{20};

  void validate() const;
};

/// Euler integration from t = 0 to t = 1. Throws IntegrationFailure on a
/// non-finite state and InvalidLattice if det(L) <= 0 at the end.
flow::FlowSample integrate(const FlowModel &model, const flow::FlowSample &c0,
                           const SamplerConfig &cfg);

struct OverlapEstimate {
  double fraction{0.0};
  double std_error{0.0};
};

struct Ellipsoid {
  RowVec3 centre;
  Mat3 axes;       // columns: principal directions
  Vec3 semi_axes;  // Angstrom
};

Ellipsoid block_ellipsoid(const MatN3 &cart, double padding = 0.5);

/// Fraction of the smaller ellipsoid covered by the other one (or any of its
/// periodic images when a lattice is given).
OverlapEstimate ellipsoid_overlap(const Ellipsoid &a, const Ellipsoid &b,
                                  const std::optional<Lattice> &lattice,
                                  int n_mc, Rng &rng);
OverlapEstimate ellipsoid_overlap(const MatN3 &block_a, const MatN3 &block_b,
                                  const Lattice &lattice, int n_mc, Rng &rng);

/// Maximum pairwise overlap across all blocks and periodic images.
double max_overlap(const crystal::MolecularCrystal &c, int n_mc, Rng &rng);

struct GenerationRequest {
  std::vector<std::string> species; // conformer
  MatN3 coords;
  int z{1};
  std::vector<int> chi_pattern;     // length z
  int n_samples{1};
  std::uint64_t seed{0};
  std::string id{"sample"};
};

/// Parses "same", "half" or an explicit 0/1 string into a chi pattern.
std::vector<int> chi_pattern(const std::string &pattern, int z);

struct SampleResult {
  crystal::MolecularCrystal crystal;
  crystal::AtomicStructure structure;
  std::uint64_t sample_seed{0};
  int resamples{0};
  double max_overlap{0.0};
};

struct GenerationResult {
  std::vector<SampleResult> samples;
  std::vector<std::string> warnings;
};

GenerationResult generate(const net::Model &model, const GenerationRequest &req,
                          const SamplerConfig &cfg);

/// Same as generate with an arbitrary field; the conformer supplies the
/// internal coordinates and chi handedness of the blocks.
GenerationResult generate_with(const FlowModel &field, const flow::PriorSpec &prior,
                               const GenerationRequest &req, const SamplerConfig &cfg);

} // namespace mcf::sampler
