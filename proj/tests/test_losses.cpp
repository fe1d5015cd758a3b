#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eqmesh/groups.hpp"
#include "eqmesh/losses.hpp"
#include "support/gradcheck.hpp"

using namespace eqmesh;
using eqmesh::testing::randn;

namespace {

Tensor rotate_all(const Tensor& v, const Eigen::Matrix3d& r) {
  std::vector<double> y(v.data().begin(), v.data().end());
  for (std::size_t i = 0; i < y.size(); i += 3) {
    const Eigen::Vector3d p = r * Eigen::Vector3d(y[i], y[i + 1], y[i + 2]);
    for (int d = 0; d < 3; ++d) y[i + static_cast<std::size_t>(d)] = p[d];
  }
  return Tensor::from(v.shape(), std::move(y));
}

Tensor offset(const Tensor& v, const Eigen::Vector3d& c) {
  std::vector<double> y(v.data().begin(), v.data().end());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[static_cast<long>(i % 3)];
  return Tensor::from(v.shape(), std::move(y));
}

const MeshTopology& sphere() {
  static const MeshTopology t = build_uv_sphere_topology(8, 6);
  return t;
}

}  // namespace

TEST(VertexLoss, Examples) {
  const auto truth = randn({2, 5, 3}, 1);
  EXPECT_EQ(vertex_loss(truth, truth).item(), 0.0);
  EXPECT_NEAR(vertex_loss(offset(truth, {1, 0, 0}), truth).item(), 1.0, 1e-12);
  EXPECT_THROW(vertex_loss(randn({2, 5, 3}, 2), randn({2, 4, 3}, 3)), ShapeError);
}

TEST(VertexLoss, GradientIsTwoResidualOverN) {
  auto pred = randn({1, 4, 3}, 4);
  const auto truth = randn({1, 4, 3}, 5);
  pred.set_requires_grad(true);
  backward(vertex_loss(pred, truth));
  for (std::size_t i = 0; i < 12; ++i)
    EXPECT_NEAR(pred.grad()[i], 2.0 * (pred.data()[i] - truth.data()[i]) / 4.0, 1e-14);
}

TEST(LaplacianLoss, TwoVertexHandExample) {
  // Two mutual neighbours; δ = truth − pred = {(1,0,0), (0,0,0)}.
  const auto lap = laplacian_operator({{1}, {0}});
  const auto truth = Tensor::from({1, 2, 3}, {1, 0, 0, 0, 0, 0});
  const auto pred = Tensor::zeros({1, 2, 3});
  EXPECT_NEAR(laplacian_loss(pred, truth, lap).item(), 1.0, 1e-12);
  EXPECT_EQ(laplacian_loss(truth, truth, lap).item(), 0.0);
}

TEST(LaplacianLoss, ConstantOffsetIsFree) {
  const auto truth = randn({2, static_cast<std::size_t>(sphere().vertex_count()), 3}, 6, 30.0);
  const auto pred = offset(truth, {2.5, -1.0, 7.0});
  EXPECT_NEAR(laplacian_loss(pred, truth, sphere()).item(), 0.0, 1e-12);
  EXPECT_GT(vertex_loss(pred, truth).item(), 0.0);
}

TEST(Losses, JointRotationInvariance) {
  const std::size_t n = static_cast<std::size_t>(sphere().vertex_count());
  const auto truth = randn({2, n, 3}, 7, 30.0), pred = randn({2, n, 3}, 8, 30.0);
  std::mt19937_64 rng(9);
  const auto r = random_element(Group::SO3, rng).rotation();
  const auto lap = laplacian_operator(sphere().neighbors());
  const double lv = vertex_loss(pred, truth).item(), ll = laplacian_loss(pred, truth, lap).item();
  EXPECT_NEAR(vertex_loss(rotate_all(pred, r), rotate_all(truth, r)).item(), lv, 1e-10 * lv);
  EXPECT_NEAR(laplacian_loss(rotate_all(pred, r), rotate_all(truth, r), lap).item(), ll, 1e-10 * ll);
}

TEST(TotalLoss, WeightedSum) {
  const auto lap = laplacian_operator({{1}, {0}});
  const auto truth = Tensor::from({1, 2, 3}, {0.3, 0, 0, 0, 0, 0});
  const auto pred = Tensor::zeros({1, 2, 3});
  // Lv = 0.09/2 = 0.045, Ll = (0.09 + 0.09)/2 = 0.09
  const auto t = total_loss(pred, truth, lap, 1.0, 10.0);
  EXPECT_NEAR(t.vertex, 0.045, 1e-12);
  EXPECT_NEAR(t.laplacian, 0.09, 1e-12);
  EXPECT_NEAR(t.total.item(), 0.045 + 0.9, 1e-12);
  EXPECT_NEAR(total_loss(pred, truth, lap, 1.0, 0.0).total.item(), vertex_loss(pred, truth).item(), 1e-15);
  EXPECT_EQ(total_loss(truth, truth, lap, 1.0, 10.0).total.item(), 0.0);
}

TEST(TotalLoss, ArithmeticExample) {
  // Triangle graph, δ = c + d with c constant and Σd = 0: Lv = ‖c‖² + mean‖d‖²
  // and Ll = 2.25·mean‖d‖². Chosen so that Lv = 0.2 and Ll = 0.03.
  const auto lap = laplacian_operator({{1, 2}, {0, 2}, {0, 1}});
  const double a = std::sqrt(0.02), c = std::sqrt(0.2 - 0.04 / 3.0);
  const auto truth = Tensor::from({1, 3, 3}, {a, c, 0, -a, c, 0, 0, c, 0});
  const auto t = total_loss(Tensor::zeros({1, 3, 3}), truth, lap, 1.0, 10.0);
  EXPECT_NEAR(t.vertex, 0.2, 1e-12);
  EXPECT_NEAR(t.laplacian, 0.03, 1e-12);
  EXPECT_NEAR(t.total.item(), 0.5, 1e-12);
}

TEST(Topology, StackAndUnstackMeshes) {
  auto topo = std::make_shared<const MeshTopology>(3, std::vector<Face>{{0, 1, 2}});
  Mesh a{topo, {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}};
  Mesh b{topo, {{-1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
  const auto t = stack_meshes({&a, &b});
  EXPECT_EQ(t.shape(), (Shape{2, 3, 3}));
  EXPECT_EQ(unstack_mesh(t, 1, topo).vertices, b.vertices);
}
