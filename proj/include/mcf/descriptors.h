#pragma once
// Auxiliary molecular descriptors concatenated into the building-block
// embedding. The chemical block uses in-repo heuristics (no bond-order
// perception); see docs in README for the exact rules.
#include <array>
#include <mcf/core/linalg.h>
#include <mcf/crystal.h>
#include <string>
#include <utility>
#include <vector>

namespace mcf::descriptors {

constexpr int kNumDescriptors = 18;
using DescriptorVector = std::array<double, kNumDescriptors>;

/// Slot layout of DescriptorVector.
enum Slot : int {
  NAtoms = 0,
  NHeavy,
  MolWeight,
  Chirality,
  Donors,
  Acceptors,
  Rotatable,
  AromaticRings,
  LogP,
  Tpsa,
  RadiusOfGyration,
  Asphericity,
  Eccentricity,
  Planarity,
  LenPc1,
  LenPc2,
  LenPc3,
  NRings,
};

const std::array<const char *, kNumDescriptors> &slot_names();

struct MolecularGraph {
  std::vector<std::string> species;
  std::vector<double> masses;
  std::vector<std::pair<int, int>> bonds;
  MatN3 coords;

  std::size_t size() const { return species.size(); }
  /// Bonds from interatomic distances with the crystal bonding rule
  /// (non-periodic). Throws UnknownElement.
  static MolecularGraph
  from_coordinates(const std::vector<std::string> &species,
                   const MatN3 &coords,
                   const crystal::RadiiTable &radii =
                       crystal::RadiiTable::defaults());
};

struct BasicFeatures {
  int n_atoms;
  int n_heavy;
  double mol_weight;
};
BasicFeatures basic_features(const MolecularGraph &g);

struct ChemicalFeatures {
  int chirality_flag;
  int donors;
  int acceptors;
  int rotatable;
  int aromatic_rings;
  double logp;
  double tpsa;
  int n_rings;
};
ChemicalFeatures chemical_features(const MolecularGraph &g);

struct GeometricFeatures {
  double radius_of_gyration;
  double asphericity;
  double eccentricity;
  double planarity;
  std::array<double, 3> pc_lengths;
};
GeometricFeatures geometric_features(const MatN3 &coords);

/// Smallest set of smallest rings as atom-index cycles.
std::vector<std::vector<int>> smallest_rings(const MolecularGraph &g);

DescriptorVector compute(const MolecularGraph &g);

/// Per-feature affine standardisation fitted on a training split.
struct DescriptorScaler {
  DescriptorVector mean{};
  DescriptorVector scale{};

  static DescriptorScaler identity();
  static DescriptorScaler fit(const std::vector<DescriptorVector> &data);
  DescriptorVector apply(const DescriptorVector &x) const;
};

} // namespace mcf::descriptors
