#pragma once

#include <vector>

#include "eqmesh/mesh.hpp"
#include "eqmesh/sparse_map.hpp"
#include "eqmesh/tensor.hpp"

namespace eqmesh {

/// Mean squared vertex distance, (1/N)·Σ‖v − v̂‖², averaged over the batch.
/// pred and truth are B×N×3.
Tensor vertex_loss(const Tensor& pred, const Tensor& truth);

/// Linear map δ ↦ (δ_i − mean_{k∈N(i)} δ_k) on N×3 coordinates.
SparseMap laplacian_operator(const std::vector<std::vector<int>>& neighbors);

/// (1/N)·Σ‖δ_i − (Σ_{k∈N(i)} δ_k)/B_i‖² with δ = truth − pred, batch mean.
Tensor laplacian_loss(const Tensor& pred, const Tensor& truth, const SparseMap& laplacian);
Tensor laplacian_loss(const Tensor& pred, const Tensor& truth, const MeshTopology& topology);

struct LossTerms {
  Tensor total;
  double vertex;
  double laplacian;
};

/// λv·Lv + λl·Ll.
LossTerms total_loss(const Tensor& pred, const Tensor& truth, const SparseMap& laplacian, double lambda_v,
                     double lambda_l);

/// Meshes → B×N×3 tensor.
Tensor stack_meshes(const std::vector<const Mesh*>& meshes);
/// Row b of a B×N×3 tensor as a mesh on `topology`.
Mesh unstack_mesh(const Tensor& batch, std::size_t b, std::shared_ptr<const MeshTopology> topology);

}  // namespace eqmesh
