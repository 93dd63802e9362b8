#pragma once
#include <mcf/crystal.h>
#include <string>
#include <vector>

namespace mcf::io {

/// Extended-XYZ frames: atom count, a comment line carrying
/// Lattice="ax ay az bx by bz cx cy cz" (and optionally id=...), then one
/// "symbol x y z" line per atom. Extra columns are ignored.
std::vector<crystal::AtomicStructure> read_extxyz(const std::string &path);
std::vector<crystal::AtomicStructure> parse_extxyz(const std::string &text,
                                                   const std::string &name = "frame");
std::string format_extxyz(const crystal::AtomicStructure &s);

struct Molecule {
  std::string id;
  std::vector<std::string> species;
  MatN3 coords;
};

/// First frame of a plain XYZ file; a Lattice field, if present, is ignored.
Molecule read_xyz_molecule(const std::string &path);

} // namespace mcf::io
