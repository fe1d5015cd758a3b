#include "eqmesh/losses.hpp"

#include "eqmesh/ops.hpp"

namespace eqmesh {

namespace {
void check_pair(const Tensor& pred, const Tensor& truth, const char* what) {
  if (pred.shape() != truth.shape() || pred.rank() != 3 || pred.dim(2) != 3)
    throw ShapeError(std::string(what) + ": expected matching B×N×3 tensors, got " + shape_str(pred.shape()) +
                     " and " + shape_str(truth.shape()));
}
}  // namespace

Tensor vertex_loss(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "vertex_loss");
  const double denom = static_cast<double>(pred.dim(0) * pred.dim(1));
  return scale(sum(square(sub(pred, truth))), 1.0 / denom);
}

SparseMap laplacian_operator(const std::vector<std::vector<int>>& neighbors) {
  const std::size_t n = neighbors.size();
  SparseMap m(3 * n, 3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (neighbors[i].empty()) throw MeshError("vertex " + std::to_string(i) + " has no neighbours");
    const double w = 1.0 / static_cast<double>(neighbors[i].size());
    for (std::size_t c = 0; c < 3; ++c) {
      m.add(3 * i + c, 3 * i + c, 1.0);
      for (int k : neighbors[i]) m.add(3 * i + c, 3 * static_cast<std::size_t>(k) + c, -w);
    }
  }
  m.finalize();
  return m;
}

Tensor laplacian_loss(const Tensor& pred, const Tensor& truth, const SparseMap& laplacian) {
  check_pair(pred, truth, "laplacian_loss");
  if (laplacian.cols != pred.dim(1) * 3) throw ShapeError("laplacian_loss: operator does not match vertex count");
  const double denom = static_cast<double>(pred.dim(0) * pred.dim(1));
  const auto delta = sub(truth, pred);
  return scale(sum(square(sparse_linear(delta, laplacian, {pred.dim(1), 3}))), 1.0 / denom);
}

Tensor laplacian_loss(const Tensor& pred, const Tensor& truth, const MeshTopology& topology) {
  return laplacian_loss(pred, truth, laplacian_operator(topology.neighbors()));
}

LossTerms total_loss(const Tensor& pred, const Tensor& truth, const SparseMap& laplacian, double lambda_v,
                     double lambda_l) {
  const auto lv = vertex_loss(pred, truth);
  const auto ll = laplacian_loss(pred, truth, laplacian);
  return {add(scale(lv, lambda_v), scale(ll, lambda_l)), lv.item(), ll.item()};
}

Tensor stack_meshes(const std::vector<const Mesh*>& meshes) {
  if (meshes.empty()) throw ShapeError("stack_meshes: no meshes");
  const std::size_t n = meshes.front()->vertices.size();
  std::vector<double> v;
  v.reserve(meshes.size() * n * 3);
  for (const auto* m : meshes) {
    if (m->vertices.size() != n) throw ShapeError("stack_meshes: vertex counts differ");
    for (const auto& p : m->vertices) v.insert(v.end(), {p.x(), p.y(), p.z()});
  }
  return Tensor::from({meshes.size(), n, 3}, std::move(v));
}

Mesh unstack_mesh(const Tensor& batch, std::size_t b, std::shared_ptr<const MeshTopology> topology) {
  const std::size_t n = batch.dim(1);
  Mesh m{std::move(topology), {}};
  m.vertices.reserve(n);
  const auto d = batch.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t o = (b * n + i) * 3;
    m.vertices.emplace_back(d[o], d[o + 1], d[o + 2]);
  }
  return m;
}

}  // namespace eqmesh
