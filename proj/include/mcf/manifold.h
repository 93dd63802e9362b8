#pragma once
// Geometry kernels for the three modality manifolds: the 3-torus of
// fractional centroids, SO(3) orientations and lattice matrices.
#include <array>
#include <mcf/core/linalg.h>

namespace mcf::manifold {

constexpr double kRotationTolerance = 1e-9;
/// Values this close to 1 wrap to 0; displacements this close to -0.5 are
/// treated as the +0.5 tie.
constexpr double kWrapSnap = 1e-14;

/// Componentwise mod 1 into [0, 1). Throws ErrorKind::InvalidValue on
/// non-finite input.
FracPoint wrap(const Vec3 &f);

/// Minimum-image displacement d with components in (-0.5, 0.5] such that
/// wrap(f0 + d) == f1. Exact ties resolve to +0.5.
Vec3 torus_displacement(const FracPoint &f0, const FracPoint &f1);

Mat3 hat(const Vec3 &v);
Vec3 vee(const Mat3 &m);

bool is_rotation(const Mat3 &m, double tol = kRotationTolerance);
/// Throws ErrorKind::InvalidRotation when m is not orthonormal with det +1.
void check_rotation(const Mat3 &m, double tol = kRotationTolerance);
/// Closest rotation in Frobenius norm (polar factor via SVD).
Rotation nearest_rotation(const Mat3 &m);

Rotation so3_exp(const AxisAngle &v);
/// Canonical axis-angle with angle in [0, pi]. Throws on non-rotations
/// (orthonormality checked at 1e-6 to tolerate accumulated float drift).
AxisAngle so3_log(const Rotation &r);
/// r0 * exp(t * log(r0^T r1))
Rotation so3_geodesic(const Rotation &r0, const Rotation &r1, double t);
double geodesic_distance_so3(const Rotation &r0, const Rotation &r1);

struct Spherical {
  double omega{0.0}; // rotation angle
  double kappa{0.0}; // inclination of the axis from +z, [0, pi]
  double rho{0.0};   // azimuth of the axis, [0, 2 pi)
};
Spherical axis_angle_to_spherical(const AxisAngle &v);


struct StandardizedLattice {
  Lattice lattice;    // lower triangular, positive diagonal, a <= b <= c
  Rotation rotation;  // q with lattice == P * l * q^T
  Mat3 row_transform; // signed permutation P
};

/// Sort rows by length, negate the third row if the permutation flips
/// handedness, then orthogonal-triangular factorisation of the transpose.
/// Throws ErrorKind::InvalidLattice for singular or left-handed input.
StandardizedLattice standardize_lattice(const Lattice &l);

struct LatticeParams {
  double a, b, c;             // Angstrom
  double alpha, beta, gamma;  // degrees
};

LatticeParams lattice_params(const Lattice &l);
/// Lower-triangular lattice; throws ErrorKind::InvalidParameter for an
/// impossible angle triple or non-positive lengths.
Lattice params_to_lattice(const LatticeParams &p);

inline double volume(const Lattice &l) { return l.determinant(); }

} // namespace mcf::manifold
