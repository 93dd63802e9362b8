#pragma once
// Random molecular crystals with known decomposition, for tests and demos.
#include <mcf/core/rng.h>
#include <mcf/crystal.h>
#include <string>
#include <vector>

namespace mcf::synthetic {

struct MoleculeTemplate {
  std::string name;
  std::vector<std::string> species;
  MatN3 coords; // Angstrom
};

const std::vector<MoleculeTemplate> &templates();
const MoleculeTemplate &molecule(const std::string &name);

struct CrystalOptions {
  int z{2};
  bool inversion_pairs{false}; // odd copies are inverted images
  double angle_low{70.0};
  double angle_high{110.0};
  double packing{1.0};         // >1 gives looser cells
  double contact_margin{0.3};  // Angstrom beyond the bonding cutoff
  int max_attempts{400};
};

/// Random cell with z copies of the molecule at random positions and
/// orientations, atoms wrapped into the cell.
crystal::AtomicStructure random_crystal(const MoleculeTemplate &mol,
                                        const CrystalOptions &opts, Rng &rng,
                                        const std::string &id = "synthetic");

/// A mixed corpus cycling through the templates.
std::vector<crystal::AtomicStructure> corpus(int n, std::uint64_t seed,
                                             int max_z = 4);

/// Random rigid rotation (Haar).
Rotation random_rotation(Rng &rng);

} // namespace mcf::synthetic
