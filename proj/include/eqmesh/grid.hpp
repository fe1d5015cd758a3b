#pragma once

#include <cstddef>

#include "eqmesh/sparse_map.hpp"
#include "eqmesh/tensor.hpp"

namespace eqmesh {

// Square grids of n×n samples. Sample (i, j) sits at x = j − c, y = c − i
// with c = (n−1)/2, so x points right and y points up; positive angles
// rotate counter-clockwise. Rotating a grid means out(p) = in(R⁻¹p).

/// Exact quarter-turn rotation (a permutation).
SparseMap grid_rotation_quarter(std::size_t n, int quarter_turns);

/// Bilinear rotation by an arbitrary angle; samples falling outside the grid
/// read zero.
SparseMap grid_rotation_bilinear(std::size_t n, double angle);

/// Rotation by `eighths`·45°, composed as exact quarter turns after one
/// bilinear 45° step for odd counts. Exact for even counts.
SparseMap grid_rotation_c8(std::size_t n, int eighths);

/// Resampling at rotated positions with a normalized isotropic Gaussian of
/// standard deviation `sigma` pixels: out(p) = Σ_q w(R⁻¹p − q)·in(q) / Σ_q w.
/// The kernel commutes with rotations, so a 45° rotation followed by this
/// resampler matches the resampler applied to the unrotated plane up to
/// aliasing of content the kernel already damps.
SparseMap grid_rotation_gaussian(std::size_t n, double angle, double sigma);

/// Quarter turns composed with the Gaussian resampler at 0° or 45°; used
/// for feature fields. Even counts are exact permutations of the blurred
/// plane.
SparseMap grid_rotation_c8_smooth(std::size_t n, int eighths, double sigma);

/// Standard deviation (in feature-map pixels) used when rotating fields.
inline constexpr double kFieldResampleSigma = 1.6;

/// Applies `map` to every trailing n×n plane of `x` (shape …×n×n).
Tensor rotate_planes(const Tensor& x, const SparseMap& map);

/// Exact quarter-turn rotation of the trailing two axes, value-level helper
/// (no tape) for images and feature maps.
Tensor rot90(const Tensor& x, int quarter_turns);

/// Bilinear rotation of the trailing two axes; out-of-grid samples take
/// `fill` instead of zero.
Tensor rotate_bilinear(const Tensor& x, double angle, double fill = 0.0);

}  // namespace eqmesh
