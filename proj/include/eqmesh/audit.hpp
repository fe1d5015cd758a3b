#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eqmesh/model.hpp"

namespace eqmesh {

/// One stage × angle entry of an equivariance audit.
struct AuditRow {
  std::string stage;  // encoder, +mapping, +projection, full
  int angle_deg = 0;
  /// ‖f(g·x) − ρ(g)·f(x)‖ / ‖f(x)‖ (Frobenius).
  double residual = 0;
  /// max_i ‖Δ_i‖ / max_i ‖f(x)_i‖ over vectors: latent vectors, vertices,
  /// or for the encoder the channel stack at each site.
  double vector_max = 0;
};

/// Applies the rotation by `angle_deg` (a multiple of 45°) to B×C×H×W
/// images: exact pixel permutation for quarter turns, bilinear otherwise
/// with out-of-image samples set to `fill`.
Tensor rotate_images(const Tensor& images, int angle_deg, double fill);

/// Smooth random RGB images windowed to the inscribed disk on a black
/// background; rotating them by 45° loses nothing at the border.
Tensor smooth_disk_images(std::size_t batch, std::size_t size, std::uint64_t seed);

/// Per-stage residuals of the model in eval mode. For the plain baseline only
/// the "full" stage is reported. The encoder stage compares fields after the
/// Gaussian field resampler (grid_rotation_c8_smooth) on both sides; for odd
/// multiples of 45° it is restricted to the central disk of the feature map.
std::vector<AuditRow> audit_equivariance(MeshModel& model, const Tensor& images, const std::vector<int>& angles_deg,
                                         double fill = 0.0);

}  // namespace eqmesh
