#pragma once
// Command-line workflow: preprocess, fit-prior, train, sample, evaluate,
// inspect and synth. Exit codes: 0 success, 1 partial, 2 fatal.
#include <cstdint>
#include <iosfwd>
#include <mcf/io/dataset.h>
#include <string>
#include <vector>

namespace mcf::cli {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitFatal = 2;

/// Parses `args` (without the program name) and runs the subcommand.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

/// Hill-order formula, e.g. "C2H6O"; carbon and hydrogen first when carbon
/// is present, then alphabetical.
std::string hill_formula(const std::vector<std::string> &species);

/// Crystal formula key: sorted, "."-joined formulas of the distinct molecules.
std::string crystal_formula(const crystal::MolecularCrystal &c);

/// Assigns "train"/"val" so no formula appears in both. Whole formula groups
/// go to validation, in seeded random order, until `val_fraction` of the
/// records is reached. Records that already carry a split are left alone.
void split_by_formula(std::vector<io::ProcessedRecord> &records, double val_fraction,
                      std::uint64_t seed);

} // namespace mcf::cli
