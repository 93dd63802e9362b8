#pragma once
#include <mcf/core/linalg.h>

namespace mcf::eval {

/// Niggli-reduced basis of the lattice spanned by the rows of `l`.
/// Tolerance is relative: eps = rel_tol * V^(2/3).
Lattice niggli_reduce(const Lattice &l, double rel_tol = 1e-5);

/// True if the rows of `l` satisfy the Niggli conditions within tolerance.
bool is_niggli_reduced(const Lattice &l, double rel_tol = 1e-5);

} // namespace mcf::eval
