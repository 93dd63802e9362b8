#pragma once
// All-atom <-> rigid-body conversion: building-block identification,
// periodic unwrapping, PCA frames, axis-flip state and reconstruction.
#include <array>
#include <map>
#include <mcf/core/linalg.h>
#include <string>
#include <vector>

namespace mcf::crystal {

struct AtomicStructure {
  std::string id;
  std::vector<std::string> species;
  MatN3 cart;      // Angstrom, one atom per row
  Lattice lattice; // rows are lattice vectors

  std::size_t size() const { return species.size(); }
  /// Throws InvalidInput / InvalidLattice.
  void validate() const;
  MatN3 frac() const;
};

/// Bonded iff d <= bond_scale * (r_i + r_j) + bond_tolerance.
struct RadiiTable {
  std::map<std::string, double> radii;
  double bond_scale{1.0};
  double bond_tolerance{0.4};

  /// Covalent radii for H C N O F Cl S P Br I B Si (plus the noble gases
  /// and a few others from the element table).
  static RadiiTable defaults();
  double radius(const std::string &symbol) const;
  double cutoff(const std::string &a, const std::string &b) const;
};

struct BuildingBlock {
  std::vector<int> atom_indices;     // into the parent structure
  MatN3 internal;                    // PCA-frame coordinates, zero mean
  std::vector<std::string> species;
  FracPoint centroid_frac{FracPoint::Zero()};
  Rotation rotation{Rotation::Identity()};
  int chi{0};
  std::vector<double> masses;
  int type_id{0};                    // molecule type within the crystal

  std::size_t size() const { return species.size(); }
};

struct MolecularCrystal {
  std::string id;
  Lattice lattice{Lattice::Identity()};
  std::vector<BuildingBlock> blocks;
  /// Rotation applied to the input Cartesian frame by lattice
  /// standardisation (identity for generated crystals).
  Rotation frame_rotation{Rotation::Identity()};

  int z() const { return static_cast<int>(blocks.size()); }
  std::vector<int> chis() const;
};

/// Minimum-image displacement for a Cartesian row vector.
RowVec3 min_image(const Lattice &l, const Mat3 &inv_l, const RowVec3 &delta);

/// Connected components of the periodic bond graph; sorted by lowest index.
std::vector<std::vector<int>>
identify_building_blocks(const AtomicStructure &s, const RadiiTable &radii);

/// Breadth-first placement from the lowest index, each atom at the minimum
/// image of its already-placed bonded neighbour. Throws InvalidInput when the
/// indices are disconnected or bond to their own periodic image.
MatN3 unwrap_block(const AtomicStructure &s, const std::vector<int> &indices,
                   const RadiiTable &radii);

struct PcaFrame {
  Rotation axes;   // columns u1, u2, u3; det +1
  Vec3 eigenvalues; // descending
};
/// Principal axes of the centred coordinates (covariance normalised by 1/N).
PcaFrame pca_frame(const MatN3 &coords);

/// Mass-weighted minus geometric centroid, falling back to the vector from
/// the centroid to its nearest atom, and +x for a point particle.
Vec3 equivariant_reference(const MatN3 &coords, const std::vector<double> &masses);

struct ChiState {
  int chi{0};
  std::array<int, 3> eta{1, 1, 1};
  Rotation frame{Rotation::Identity()};
};
ChiState extract_chi(const MatN3 &coords, const std::vector<double> &masses);

struct DecomposeOptions {
  RadiiTable radii = RadiiTable::defaults();
  /// Maximum RMSD (Angstrom) between a block and its group reference after
  /// rotation-only alignment.
  double canonical_rmsd_tol{0.1};
};

/// Input to canonicalisation: one unwrapped, centred molecule with its frame.
struct FrameCandidate {
  MatN3 centred;  // Cartesian, centroid removed
  std::vector<std::string> species;
  int chi{0};
  Rotation frame{Rotation::Identity()};
};

struct CanonicalFrame {
  Rotation rotation;
  MatN3 internal;
  int type_id;
  int chi;     // may differ from the candidate's when that was ambiguous
  double rmsd; // deviation from the group reference
};

/// Aligns every block to the first-encountered block of its (type, chi)
/// group; opposite-chi groups of a type are aligned to the mirrored
/// reference. A block that only aligns to the opposite group by a proper
/// rotation is moved to that group. Throws CanonicalizationFailure on
/// inconsistent atom ordering or when a block cannot be aligned within
/// tolerance.
std::vector<CanonicalFrame>
canonicalize_frames(const std::vector<FrameCandidate> &blocks,
                    double rmsd_tol = 0.1);

MolecularCrystal decompose(const AtomicStructure &s,
                           const DecomposeOptions &opts = {});
AtomicStructure reconstruct(const MolecularCrystal &c);

/// Largest minimum-image distance between atom i of `a` and atom map[i] of
/// `b`. Both structures must share the lattice.
double max_min_image_deviation(const AtomicStructure &a,
                               const AtomicStructure &b,
                               const std::vector<int> &map);

/// Maximum minimum-image distance (Angstrom) between the atoms of `s` and
/// reconstruct(c), after applying c.frame_rotation to `s`. Atoms are matched
/// through the blocks' atom_indices.
double roundtrip_residual(const AtomicStructure &s, const MolecularCrystal &c);

} // namespace mcf::crystal
