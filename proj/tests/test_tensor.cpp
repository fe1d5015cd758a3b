#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "eqmesh/ops.hpp"
#include "eqmesh/optim.hpp"
#include "eqmesh/params.hpp"
#include "support/gradcheck.hpp"

using namespace eqmesh;
using eqmesh::testing::randn;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Tensor, ShapeAndConstructionChecks) {
  auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2}), ShapeError);
  EXPECT_THROW(Tensor::zeros({0, 3}), ShapeError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(t.item(), ShapeError);
}

TEST(Tensor, CloneIsIndependentCopiesShare) {
  auto a = Tensor::from({2}, {1, 2});
  auto shared = a;
  auto copy = a.clone();
  a.mutable_data()[0] = 9;
  EXPECT_EQ(shared.data()[0], 9);
  EXPECT_EQ(copy.data()[0], 1);
}

TEST(Ops, ElementwiseExamples) {
  EXPECT_EQ(values(add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}))), (std::vector<double>{4, 6}));
  EXPECT_EQ(values(relu(Tensor::from({2}, {-1, 2}))), (std::vector<double>{0, 2}));
  EXPECT_DOUBLE_EQ(norm2(Tensor::from({2}, {3, 4}), 0).item(), 5.0);
  // trailing-dimension broadcasting
  auto b = add(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2}, {10, 20}));
  EXPECT_EQ(values(b), (std::vector<double>{11, 22, 13, 24}));
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}

TEST(Ops, TimesZeroHasZeroGradient) {
  auto x = randn({3, 4}, 1);
  x.set_requires_grad(true);
  auto y = scale(x, 0.0);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  backward(sum(y));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Ops, ProductGradientIsOtherFactor) {
  auto x = randn({3, 4}, 2), y = randn({3, 4}, 3);
  x.set_requires_grad(true);
  backward(sum(mul(x, y)));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], y.data()[i]);
}

TEST(Ops, Matmul) {
  auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto v = Tensor::from({3, 1}, {4, 5, 6});
  EXPECT_EQ(values(matmul(eye, v)), values(v));
  EXPECT_EQ(values(matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {1, 1}))),
            (std::vector<double>{3, 7}));
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Ops, Conv2dExamples) {
  auto x = randn({1, 1, 3, 3}, 4);
  EXPECT_EQ(values(conv2d(x, Tensor::from({1, 1, 1, 1}, {1.0}))), values(x));
  auto ones = conv2d(Tensor::full({1, 1, 5, 5}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0));
  EXPECT_EQ(ones.shape(), (Shape{1, 1, 3, 3}));
  for (double v : ones.data()) EXPECT_EQ(v, 9.0);
  // cross-correlation, not flipped convolution
  auto seq = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto diag = conv2d(seq, Tensor::from({1, 1, 3, 3}, {1, 0, 0, 0, 0, 0, 0, 0, -1}));
  ASSERT_EQ(diag.numel(), 1u);
  EXPECT_EQ(diag.data()[0], -8.0);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3})), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 2, 2})), ShapeError);
}

TEST(Ops, Conv2dGradientOnSpecShape) {
  const double err = eqmesh::testing::gradcheck([](const auto& x) { return conv2d(x[0], x[1], 1, 1); },
                                                {randn({2, 3, 8, 8}, 5), randn({2, 3, 3, 3}, 6)});
  EXPECT_LT(err, 1e-4);
}

TEST(Ops, Blur2dBinomialResponse) {
  std::vector<double> v(25, 0.0);
  v[12] = 16.0;
  const auto y = blur2d(Tensor::from({1, 1, 5, 5}, v));
  const double want[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const bool near = std::abs(i - 2) <= 1 && std::abs(j - 2) <= 1;
      EXPECT_DOUBLE_EQ(y.data()[static_cast<std::size_t>(i * 5 + j)], near ? want[i - 1][j - 1] : 0.0);
    }
  // zero padding: a corner impulse loses the mass that falls off the grid
  std::vector<double> c(9, 0.0);
  c[0] = 16.0;
  const auto yc = blur2d(Tensor::from({1, 1, 3, 3}, c));
  EXPECT_DOUBLE_EQ(yc.data()[0], 4.0);
  EXPECT_DOUBLE_EQ(yc.data()[4], 1.0);
  EXPECT_THROW(blur2d(Tensor::zeros({3, 3})), ShapeError);
}

TEST(Ops, Blur2dGradient) {
  const double err = eqmesh::testing::gradcheck([](const auto& x) { return blur2d(x[0]); }, {randn({2, 3, 5, 4}, 41)});
  EXPECT_LT(err, 1e-4);
}

TEST(Ops, PermutationRoundTripOnValuesAndGradients) {
  const std::vector<std::size_t> perm{3, 1, 0, 2};
  auto x = randn({2, 4, 3}, 7);
  x.set_requires_grad(true);
  auto y = permute_channels(permute_channels(x, perm), inverse_permutation(perm));
  EXPECT_EQ(values(y), values(x));
  auto r = randn({2, 4, 3}, 8);
  backward(sum(mul(y, r)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), values(r));
  EXPECT_THROW(permute_channels(x, {0, 0, 1, 2}), std::invalid_argument);
}

TEST(Ops, InvalidAxis) {
  EXPECT_THROW(sum(Tensor::zeros({2, 3}), 2), ShapeError);
  EXPECT_THROW(norm2(Tensor::zeros({2, 3}), 5), ShapeError);
}

TEST(Ops, Norm2GradientAtZeroIsZero) {
  auto x = Tensor::zeros({1, 3}, true);
  backward(sum(norm2(x, 1)));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Ops, NonFiniteResultsAreErrors) {
  EXPECT_THROW(eqmesh::sqrt(Tensor::from({1}, {-1.0})), NumericalError);
  EXPECT_THROW(div(Tensor::from({1}, {1.0}), Tensor::from({1}, {0.0})), NumericalError);
}

TEST(Tape, CompositeGradientEqualsChainedLayerGradients) {
  // Whole-graph gradient of L(g(f(x))) vs. manually chaining vector-Jacobian
  // products through f and g separately.
  auto w1 = randn({4, 3}, 9), w2 = randn({3, 2}, 10), x = randn({2, 4}, 11), r = randn({2, 2}, 12);
  x.set_requires_grad(true);
  backward(sum(mul(matmul(sigmoid(matmul(x, w1)), w2), r)));
  const std::vector<double> whole(x.grad().begin(), x.grad().end());

  auto h = sigmoid(matmul(x.detach(), w1)).detach();
  h.set_requires_grad(true);
  backward(sum(mul(matmul(h, w2), r)));
  const auto gh = Tensor::from(h.shape(), {h.grad().begin(), h.grad().end()});
  auto x2 = x.detach();
  x2.set_requires_grad(true);
  backward(sum(mul(sigmoid(matmul(x2, w1)), gh)));
  for (std::size_t i = 0; i < whole.size(); ++i) EXPECT_NEAR(x2.grad()[i], whole[i], 1e-14);
}

TEST(Tape, SharedSubexpressionAccumulates) {
  auto x = Tensor::from({2}, {1.5, -2.0}, true);
  backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
}

TEST(Tape, NoGradGuardSkipsRecording) {
  auto x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    auto y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.node()->inputs.empty());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(BatchNorm, ConstantInputGivesBeta) {
  BatchNormStats st{Tensor::zeros({1}), Tensor::full({1}, 1.0)};
  auto out = batchnorm2d(Tensor::full({2, 8, 3, 3}, 4.2), st, Tensor::full({1}, 2.0), Tensor::full({1}, 0.7), 8, true);
  for (double v : out.data()) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(BatchNorm, PerFieldStatisticsAndRunningUpdate) {
  BatchNormStats st{Tensor::zeros({2}), Tensor::full({2}, 1.0)};
  auto x = randn({4, 16, 5, 5}, 13, 3.0);
  auto gamma = Tensor::from({2}, {1.5, 0.5}), beta = Tensor::from({2}, {-1.0, 2.0});
  auto out = batchnorm2d(x, st, gamma, beta, 8, true);
  const auto y = out.data();
  for (std::size_t f = 0; f < 2; ++f) {
    double s = 0, s2 = 0, n = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t c = f * 8; c < f * 8 + 8; ++c)
        for (std::size_t p = 0; p < 25; ++p) {
          const double v = y[(b * 16 + c) * 25 + p];
          s += v;
          s2 += v * v;
          ++n;
        }
    const double m = s / n;
    EXPECT_NEAR(m, beta.data()[f], 1e-3);
    EXPECT_NEAR(s2 / n - m * m, gamma.data()[f] * gamma.data()[f], 1e-3);
  }
  // running mean moved 10% of the way towards the batch mean
  const auto xd = x.data();
  double batch_mean = 0;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t p = 0; p < 25; ++p) batch_mean += xd[(b * 16 + c) * 25 + p];
  batch_mean /= 4 * 8 * 25;
  EXPECT_NEAR(st.mean.data()[0], 0.1 * batch_mean, 1e-12);
}

TEST(BatchNorm, PermutingChannelsWithinFieldKeepsStatistics) {
  auto x = randn({2, 8, 3, 3}, 14);
  BatchNormStats s1{Tensor::zeros({1}), Tensor::full({1}, 1.0)}, s2 = {Tensor::zeros({1}), Tensor::full({1}, 1.0)};
  const std::vector<std::size_t> perm{5, 2, 7, 0, 1, 6, 3, 4};
  auto g = Tensor::full({1}, 1.0), b = Tensor::zeros({1});
  auto y1 = batchnorm2d(x, s1, g, b, 8, true);
  auto y2 = batchnorm2d(permute_channels(x, perm), s2, g, b, 8, true);
  EXPECT_NEAR(s1.mean.data()[0], s2.mean.data()[0], 1e-14);
  EXPECT_NEAR(s1.var.data()[0], s2.var.data()[0], 1e-14);
  const auto back = permute_channels(y2, inverse_permutation(perm));
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_NEAR(back.data()[i], y1.data()[i], 1e-12);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto p = randn({5}, 15);
  p.set_requires_grad(true);
  const auto before = values(p);
  Adam opt({p});
  p.zero_grad();
  opt.step(0.1);
  EXPECT_EQ(values(p), before);
}

TEST(Adam, FirstStepIsMinusLrTimesSign) {
  auto p = Tensor::from({1}, {0.0}, true);
  Adam opt({p});
  backward(sum(p));  // gradient 1
  opt.step(0.1);
  EXPECT_NEAR(p.data()[0], -0.1, 1e-9);
}

TEST(Adam, ConvergesOnQuadratic) {
  auto x = Tensor::from({1}, {0.0}, true);
  Adam opt({x});
  for (int i = 0; i < 500; ++i) {
    x.zero_grad();
    backward(square(add_scalar(x, -3.0)));
    opt.step(0.1);
  }
  EXPECT_LT(std::abs(x.data()[0] - 3.0), 1e-3);
}

TEST(Adam, ClipGradNorm) {
  auto a = Tensor::from({2}, {0, 0}, true);
  backward(sum(mul(a, Tensor::from({2}, {3, 4}))));
  EXPECT_DOUBLE_EQ(clip_grad_norm({a}, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
}

TEST(SparseMap, ComposeAndTranspose) {
  SparseMap a(2, 3), b(3, 2);
  a.add(0, 0, 1);
  a.add(0, 2, 2);
  a.add(1, 1, -1);
  a.finalize();
  b.add(0, 1, 3);
  b.add(2, 0, 1);
  b.add(1, 1, 4);
  b.finalize();
  const auto ab = a.compose(b);  // a·b
  const double x[2] = {1, 2};
  double bx[3] = {}, abx[2] = {}, direct[2] = {};
  b.apply(x, bx);
  a.apply(bx, abx);
  ab.apply(x, direct);
  EXPECT_DOUBLE_EQ(direct[0], abx[0]);
  EXPECT_DOUBLE_EQ(direct[1], abx[1]);
  const auto at = a.transpose();
  EXPECT_EQ(at.rows, 3u);
  EXPECT_EQ(at.cols, 2u);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "eqmesh_ckpt_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  ParamStore a;
  a.add_param("w", randn({3, 4}, 16));
  a.add_buffer("running.mean", randn({2}, 17));
  save_checkpoint(a, dir / "c.bin");
  EXPECT_FALSE(std::filesystem::exists(dir / "c.bin.tmp"));

  ParamStore b;
  b.add_param("w", Tensor::zeros({3, 4}));
  b.add_buffer("running.mean", Tensor::zeros({2}));
  load_checkpoint(b, dir / "c.bin");
  EXPECT_EQ(values(b.get("w")), values(a.get("w")));
  EXPECT_EQ(values(b.get("running.mean")), values(a.get("running.mean")));
}

TEST_F(CheckpointTest, LayoutIsDocumentedText) {
  ParamStore a;
  a.add_param("w", Tensor::from({2}, {1.0, -2.0}));
  save_checkpoint(a, dir / "c.bin");
  std::ifstream is(dir / "c.bin", std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string header = "EQMESH-CHECKPOINT 1\ncount 1\nw 1 2\ndata\n";
  ASSERT_EQ(content.size(), header.size() + 16);
  EXPECT_EQ(content.substr(0, header.size()), header);
  // 1.0 little-endian
  EXPECT_EQ(static_cast<unsigned char>(content[header.size() + 7]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(content[header.size() + 6]), 0xf0);
}

TEST_F(CheckpointTest, RejectsMismatchAndTruncation) {
  ParamStore a;
  a.add_param("w", randn({3}, 18));
  save_checkpoint(a, dir / "c.bin");
  ParamStore wrong_shape;
  wrong_shape.add_param("w", Tensor::zeros({4}));
  EXPECT_THROW(load_checkpoint(wrong_shape, dir / "c.bin"), std::runtime_error);
  ParamStore wrong_name;
  wrong_name.add_param("v", Tensor::zeros({3}));
  EXPECT_THROW(load_checkpoint(wrong_name, dir / "c.bin"), std::runtime_error);
  std::filesystem::resize_file(dir / "c.bin", std::filesystem::file_size(dir / "c.bin") - 3);
  ParamStore ok;
  ok.add_param("w", Tensor::zeros({3}));
  EXPECT_THROW(load_checkpoint(ok, dir / "c.bin"), std::runtime_error);
}
