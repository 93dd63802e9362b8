#pragma once
#include <limits>
#include <mcf/crystal.h>
#include <string>
#include <vector>

namespace mcf::eval {

struct MatchCriteria {
  double ltol{0.3};
  double stol{0.8};
  double atol{10.0}; // degrees
  int max_translations{500};

  void validate() const;
};

struct MatchReport {
  bool matched{false};
  double rms{std::numeric_limits<double>::infinity()};      // normalised
  double max_dist{std::numeric_limits<double>::infinity()}; // normalised
  double length_deviation{0.0}; // worst relative length mismatch of the chosen cell
  double angle_deviation{0.0};  // worst angle mismatch in degrees
  int correspondences{0};
  int candidates_examined{0};
  bool translation_cap_hit{false};
};

/// Site-tolerance comparison of two periodic structures. Both directions are
/// evaluated, so the result is symmetric in its arguments. A pair matches when
/// the largest normalised site displacement is within stol.
MatchReport structures_match(const crystal::AtomicStructure &s1,
                             const crystal::AtomicStructure &s2,
                             const MatchCriteria &crit = {});

/// One-directional search used by structures_match.
MatchReport match_onto(const crystal::AtomicStructure &s1,
                       const crystal::AtomicStructure &s2,
                       const MatchCriteria &crit);

struct TargetPredictions {
  std::string id;
  std::vector<crystal::AtomicStructure> samples;
};

struct TargetResult {
  std::string id;
  bool matched{false};
  double best_rms{std::numeric_limits<double>::infinity()};
  int n_samples{0};
  int first_match{-1};
};

struct MatchRate {
  double rate{0.0};
  std::vector<TargetResult> targets;
};

/// Fraction of targets with at least one matching sample. References are
/// looked up by id; any id without a reference (or vice versa) is an error.
MatchRate match_rate(const std::vector<TargetPredictions> &predictions,
                     const std::vector<crystal::AtomicStructure> &references,
                     const MatchCriteria &crit = {});

struct VolumeDeviation {
  double mean_percent{0.0};
  std::vector<double> per_structure;
};

VolumeDeviation volume_rmad(const std::vector<Lattice> &predictions,
                            const std::vector<Lattice> &references);

} // namespace mcf::eval
