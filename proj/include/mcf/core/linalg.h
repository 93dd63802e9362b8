#pragma once
#include <Eigen/Dense>
#include <vector>

namespace mcf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using RowVec3 = Eigen::RowVector3d;

/// N x 3 coordinate block, one point per row.
using MatN3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Rotations act on column vectors, x -> R x. Row-vector data (lattice rows,
// coordinate rows) therefore transform as x^T -> x^T R^T. Every module uses
// this single convention.
using Rotation = Mat3;
// Axis-angle vector: direction is the unit axis, norm is the angle.
using AxisAngle = Vec3;
// Rows are the lattice vectors l1, l2, l3 (Angstrom).
using Lattice = Mat3;
using FracPoint = Vec3;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

} // namespace mcf
