#include "eqmesh/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace eqmesh {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

// ---------------------------------------------------------------- sparse map

void SparseMap::add(std::size_t row, std::size_t col, double weight) {
  if (row >= rows || col >= cols) throw ShapeError("sparse map entry out of range");
  entries.push_back({static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col), weight});
}

void SparseMap::finalize() {
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Entry> merged;
  merged.reserve(entries.size());
  for (const auto& e : entries) {
    if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col)
      merged.back().weight += e.weight;
    else
      merged.push_back(e);
  }
  std::erase_if(merged, [](const Entry& e) { return e.weight == 0.0; });
  entries = std::move(merged);
}

SparseMap SparseMap::compose(const SparseMap& other) const {
  if (cols != other.rows) throw ShapeError("sparse map composition size mismatch");
  // bucket other's entries by row
  std::vector<std::size_t> start(other.rows + 1, 0);
  for (const auto& e : other.entries) ++start[e.row + 1];
  for (std::size_t i = 0; i < other.rows; ++i) start[i + 1] += start[i];
  std::vector<Entry> by_row(other.entries.size());
  auto fill = start;
  for (const auto& e : other.entries) by_row[fill[e.row]++] = e;

  SparseMap out(rows, other.cols);
  for (const auto& e : entries)
    for (std::size_t k = start[e.col]; k < start[e.col + 1]; ++k)
      out.add(e.row, by_row[k].col, e.weight * by_row[k].weight);
  out.finalize();
  return out;
}

SparseMap SparseMap::transpose() const {
  SparseMap out(cols, rows);
  for (const auto& e : entries) out.add(e.col, e.row, e.weight);
  out.finalize();
  return out;
}

void SparseMap::apply(const double* x, double* y) const {
  std::fill(y, y + rows, 0.0);
  for (const auto& e : entries) y[e.row] += e.weight * x[e.col];
}

void SparseMap::apply_transpose_add(const double* gy, double* gx) const {
  for (const auto& e : entries) gx[e.col] += e.weight * gy[e.row];
}

SparseMap SparseMap::identity(std::size_t n) {
  SparseMap m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.add(i, i, 1.0);
  return m;
}

// ---------------------------------------------------------------- broadcast

namespace {

enum class Bcast { Same, Scalar, Suffix, General };

struct BroadcastPlan {
  Bcast kind = Bcast::Same;
  std::size_t b_numel = 1;
  std::vector<std::size_t> index;  // only for General
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  p.b_numel = numel(b);
  if (a == b) return p;
  if (p.b_numel == 1) {
    p.kind = Bcast::Scalar;
    return p;
  }
  auto fail = [&] {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " into " +
                     shape_str(a));
  };
  if (b.size() > a.size()) fail();
  const std::size_t off = a.size() - b.size();
  if (std::equal(b.begin(), b.end(), a.begin() + static_cast<std::ptrdiff_t>(off))) {
    p.kind = Bcast::Suffix;
    return p;
  }
  std::vector<std::size_t> bstride(a.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = b.size(); i-- > 0;) {
    const std::size_t ax = i + off;
    if (b[i] == a[ax])
      bstride[ax] = s;
    else if (b[i] != 1)
      fail();
    s *= b[i];
  }
  p.kind = Bcast::General;
  const std::size_t n = numel(a);
  p.index.resize(n);
  std::vector<std::size_t> idx(a.size(), 0);
  std::size_t boff = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    p.index[flat] = boff;
    for (std::size_t ax = a.size(); ax-- > 0;) {
      ++idx[ax];
      boff += bstride[ax];
      if (idx[ax] < a[ax]) break;
      boff -= bstride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return p;
}

inline std::size_t bidx(const BroadcastPlan& p, std::size_t i) {
  switch (p.kind) {
    case Bcast::Same: return i;
    case Bcast::Scalar: return 0;
    case Bcast::Suffix: return i % p.b_numel;
    default: return p.index[i];
  }
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, GradA ga_fn,
                 GradB gb_fn) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), name));
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[bidx(*plan, i)]);
  auto an = a.node(), bn = b.node();
  return make_op_result(name, a.shape(), std::move(out), {a, b}, [an, bn, plan, ga_fn, gb_fn](Node& o) {
    const auto& g = o.grad;
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += ga_fn(g[i], an->value[i], bn->value[bidx(*plan, i)]);
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t j = bidx(*plan, i);
        gb[j] += gb_fn(g[i], an->value[i], bn->value[j]);
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto an = a.node();
  return make_op_result(name, a.shape(), std::move(out), {a}, [an, deriv](Node& o) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * deriv(an->value[i], o.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data())
    if (v < 0.0) throw NumericalError("sqrt of negative value");
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul needs 2D operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()));
  std::vector<double> out(m * n);
  MapRow(out.data(), m, n).noalias() = MapRowC(a.data().data(), m, k) * MapRowC(b.data().data(), k, n);
  auto an = a.node(), bn = b.node();
  return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](Node& o) {
    MapRowC g(o.grad.data(), m, n);
    if (an->requires_grad)
      MapRow(an->ensure_grad().data(), m, k).noalias() += g * MapRowC(bn->value.data(), k, n).transpose();
    if (bn->requires_grad)
      MapRow(bn->ensure_grad().data(), k, n).noalias() += MapRowC(an->value.data(), m, k).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose needs a 2D tensor");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MapRow(out.data(), n, m) = MapRowC(a.data().data(), m, n).transpose();
  auto an = a.node();
  return make_op_result("transpose", {n, m}, std::move(out), {a}, [an, m, n](Node& o) {
    MapRow(an->ensure_grad().data(), m, n) += MapRowC(o.grad.data(), n, m).transpose();
  });
}

Tensor mix_channels(const Tensor& w, const Tensor& v) {
  if (w.rank() != 2 || v.rank() != 3 || w.dim(1) != v.dim(1))
    throw ShapeError("mix_channels: weight " + shape_str(w.shape()) + " incompatible with " +
                     shape_str(v.shape()));
  const std::size_t B = v.dim(0), mo = w.dim(0), mi = w.dim(1), d = v.dim(2);
  std::vector<double> out(B * mo * d);
  MapRowC W(w.data().data(), mo, mi);
  for (std::size_t b = 0; b < B; ++b)
    MapRow(out.data() + b * mo * d, mo, d).noalias() = W * MapRowC(v.data().data() + b * mi * d, mi, d);
  auto wn = w.node(), vn = v.node();
  return make_op_result("mix_channels", {B, mo, d}, std::move(out), {w, v}, [wn, vn, B, mo, mi, d](Node& o) {
    MapRowC W(wn->value.data(), mo, mi);
    for (std::size_t b = 0; b < B; ++b) {
      MapRowC g(o.grad.data() + b * mo * d, mo, d);
      if (wn->requires_grad)
        MapRow(wn->ensure_grad().data(), mo, mi).noalias() +=
            g * MapRowC(vn->value.data() + b * mi * d, mi, d).transpose();
      if (vn->requires_grad)
        MapRow(vn->ensure_grad().data() + b * mi * d, mi, d).noalias() += W.transpose() * g;
    }
  });
}

// ---------------------------------------------------------------- convolution

namespace {

struct ConvGeom {
  std::size_t B, Cin, H, W, Cout, k, Ho, Wo;
  int stride, pad;
};

void im2col(const double* img, const ConvGeom& g, double* col) {
  const std::size_t kk = g.k * g.k, hw = g.Ho * g.Wo;
  for (std::size_t c = 0; c < g.Cin; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col + (c * kk + ki * g.k + kj) * hw;
        for (std::size_t oi = 0; oi < g.Ho; ++oi) {
          const long ii = static_cast<long>(oi) * g.stride - g.pad + static_cast<long>(ki);
          for (std::size_t oj = 0; oj < g.Wo; ++oj) {
            const long jj = static_cast<long>(oj) * g.stride - g.pad + static_cast<long>(kj);
            row[oi * g.Wo + oj] = (ii >= 0 && jj >= 0 && ii < static_cast<long>(g.H) &&
                                   jj < static_cast<long>(g.W))
                                      ? img[(c * g.H + static_cast<std::size_t>(ii)) * g.W +
                                            static_cast<std::size_t>(jj)]
                                      : 0.0;
          }
        }
      }
}

void col2im_add(const double* col, const ConvGeom& g, double* img) {
  const std::size_t kk = g.k * g.k, hw = g.Ho * g.Wo;
  for (std::size_t c = 0; c < g.Cin; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col + (c * kk + ki * g.k + kj) * hw;
        for (std::size_t oi = 0; oi < g.Ho; ++oi) {
          const long ii = static_cast<long>(oi) * g.stride - g.pad + static_cast<long>(ki);
          if (ii < 0 || ii >= static_cast<long>(g.H)) continue;
          for (std::size_t oj = 0; oj < g.Wo; ++oj) {
            const long jj = static_cast<long>(oj) * g.stride - g.pad + static_cast<long>(kj);
            if (jj < 0 || jj >= static_cast<long>(g.W)) continue;
            img[(c * g.H + static_cast<std::size_t>(ii)) * g.W + static_cast<std::size_t>(jj)] +=
                row[oi * g.Wo + oj];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d expects 4D input and kernel");
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0)
    throw ShapeError("conv2d kernel must be square with odd size, got " + shape_str(kernel.shape()));
  if (kernel.dim(1) != input.dim(1))
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", kernel " +
                     shape_str(kernel.shape()));
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1, padding >= 0");
  ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2), 0, 0,
             stride, padding};
  const long ho = (static_cast<long>(g.H) + 2 * padding - static_cast<long>(g.k)) / stride + 1;
  const long wo = (static_cast<long>(g.W) + 2 * padding - static_cast<long>(g.k)) / stride + 1;
  if (static_cast<long>(g.H) + 2 * padding < static_cast<long>(g.k) || ho < 1 || wo < 1)
    throw ShapeError("conv2d output extent < 1");
  g.Ho = static_cast<std::size_t>(ho);
  g.Wo = static_cast<std::size_t>(wo);

  const std::size_t K = g.Cin * g.k * g.k, hw = g.Ho * g.Wo;
  std::vector<double> out(g.B * g.Cout * hw);
  std::vector<double> col(K * hw);
  MapRowC Kmat(kernel.data().data(), g.Cout, K);
  for (std::size_t b = 0; b < g.B; ++b) {
    im2col(input.data().data() + b * g.Cin * g.H * g.W, g, col.data());
    MapRow(out.data() + b * g.Cout * hw, g.Cout, hw).noalias() = Kmat * MapRowC(col.data(), K, hw);
  }
  auto in = input.node(), kn = kernel.node();
  return make_op_result("conv2d", {g.B, g.Cout, g.Ho, g.Wo}, std::move(out), {input, kernel},
                        [in, kn, g, K, hw](Node& o) {
                          std::vector<double> col(K * hw), dcol(K * hw);
                          MapRowC Kmat(kn->value.data(), g.Cout, K);
                          for (std::size_t b = 0; b < g.B; ++b) {
                            MapRowC G(o.grad.data() + b * g.Cout * hw, g.Cout, hw);
                            if (kn->requires_grad) {
                              im2col(in->value.data() + b * g.Cin * g.H * g.W, g, col.data());
                              MapRow(kn->ensure_grad().data(), g.Cout, K).noalias() +=
                                  G * MapRowC(col.data(), K, hw).transpose();
                            }
                            if (in->requires_grad) {
                              MapRow(dcol.data(), K, hw).noalias() = Kmat.transpose() * G;
                              col2im_add(dcol.data(), g, in->ensure_grad().data() + b * g.Cin * g.H * g.W);
                            }
                          }
                        });
}

namespace {

// Separable [1,2,1]/4 filter on each plane with zero padding. The operator is
// symmetric, so it is also its own adjoint.
void binomial_blur_planes(const double* x, double* y, std::size_t planes, std::size_t H, std::size_t W) {
  std::vector<double> tmp(H * W);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* a = x + p * H * W;
    double* b = y + p * H * W;
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double v = 0.5 * a[i * W + j];
        if (j > 0) v += 0.25 * a[i * W + j - 1];
        if (j + 1 < W) v += 0.25 * a[i * W + j + 1];
        tmp[i * W + j] = v;
      }
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double v = 0.5 * tmp[i * W + j];
        if (i > 0) v += 0.25 * tmp[(i - 1) * W + j];
        if (i + 1 < H) v += 0.25 * tmp[(i + 1) * W + j];
        b[i * W + j] += v;
      }
  }
}

}  // namespace

Tensor blur2d(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("blur2d expects a 4D input");
  const std::size_t planes = input.dim(0) * input.dim(1), H = input.dim(2), W = input.dim(3);
  std::vector<double> out(input.numel(), 0.0);
  binomial_blur_planes(input.data().data(), out.data(), planes, H, W);
  auto in = input.node();
  return make_op_result("blur2d", input.shape(), std::move(out), {input}, [in, planes, H, W](Node& o) {
    binomial_blur_planes(o.grad.data(), in->ensure_grad().data(), planes, H, W);
  });
}

Tensor avg_pool2d(const Tensor& input, int factor) {
  if (input.rank() != 4) throw ShapeError("avg_pool2d expects a 4D input");
  if (factor < 1) throw ShapeError("avg_pool2d factor must be >= 1");
  const std::size_t f = static_cast<std::size_t>(factor);
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % f || W % f)
    throw ShapeError("avg_pool2d: extent " + shape_str(input.shape()) + " not divisible by " +
                     std::to_string(factor));
  const std::size_t Ho = H / f, Wo = W / f;
  const double w = 1.0 / static_cast<double>(f * f);
  const auto x = input.data();
  std::vector<double> out(B * C * Ho * Wo, 0.0);
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) out[(bc * Ho + i / f) * Wo + j / f] += w * x[(bc * H + i) * W + j];
  auto in = input.node();
  return make_op_result("avg_pool2d", {B, C, Ho, Wo}, std::move(out), {input}, [in, B, C, H, W, Ho, Wo, f, w](Node& o) {
    auto& gx = in->ensure_grad();
    for (std::size_t bc = 0; bc < B * C; ++bc)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) gx[(bc * H + i) * W + j] += w * o.grad[(bc * Ho + i / f) * Wo + j / f];
  });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  auto an = a.node();
  return make_op_result("sum", {1}, {s}, {a}, [an](Node& o) {
    for (auto& g : an->ensure_grad()) g += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

namespace {
struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) throw ShapeError(std::string(op) + ": invalid axis " + std::to_string(axis) +
                                         " for " + shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape r;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) r.push_back(s[i]);
  if (r.empty()) r.push_back(1);
  return r;
}
}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) {
  const auto sp = split_axis(a.shape(), axis, "sum");
  const auto x = a.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += x[(o * sp.len + l) * sp.inner + i];
  auto an = a.node();
  return make_op_result("sum_axis", drop_axis(a.shape(), axis), std::move(out), {a}, [an, sp](Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t oo = 0; oo < sp.outer; ++oo)
      for (std::size_t l = 0; l < sp.len; ++l)
        for (std::size_t i = 0; i < sp.inner; ++i) g[(oo * sp.len + l) * sp.inner + i] += o.grad[oo * sp.inner + i];
  });
}

Tensor norm2(const Tensor& a, std::size_t axis) {
  const auto sp = split_axis(a.shape(), axis, "norm2");
  const auto x = a.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.len; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const double v = x[(o * sp.len + l) * sp.inner + i];
        out[o * sp.inner + i] += v * v;
      }
  for (auto& v : out) v = std::sqrt(v);
  auto an = a.node();
  return make_op_result("norm2", drop_axis(a.shape(), axis), std::move(out), {a}, [an, sp](Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t oo = 0; oo < sp.outer; ++oo)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const double n = o.value[oo * sp.inner + i];
        if (n == 0.0) continue;  // subgradient 0 at the origin
        const double s = o.grad[oo * sp.inner + i] / n;
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t k = (oo * sp.len + l) * sp.inner + i;
          g[k] += s * an->value[k];
        }
      }
  });
}

// ---------------------------------------------------------------- layout

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: invalid axis");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.shape()[i] != s0[i])
        throw ShapeError("concat: extent mismatch " + shape_str(p.shape()) + " vs " + shape_str(s0));
    out_shape[axis] += p.shape()[axis];
  }
  const auto sp = split_axis(out_shape, axis, "concat");
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = p.shape()[axis];
    const auto x = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * len * sp.inner), len * sp.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * sp.len + off) * sp.inner));
    off += len;
  }
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_op_result("concat", out_shape, std::move(out), parts, [nodes, offsets, sp, axis](Node& o) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (!nodes[k]->requires_grad) continue;
      const std::size_t len = nodes[k]->shape[axis];
      auto& g = nodes[k]->ensure_grad();
      for (std::size_t oo = 0; oo < sp.outer; ++oo)
        for (std::size_t t = 0; t < len * sp.inner; ++t)
          g[oo * len * sp.inner + t] += o.grad[(oo * sp.len + offsets[k]) * sp.inner + t];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes size");
  for (auto d : shape)
    if (d == 0) throw ShapeError("reshape to empty extent");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto an = a.node();
  return make_op_result("reshape", std::move(shape), std::move(out), {a}, [an](Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inv[perm[i]] != perm.size())
      throw ShapeError("permutation is not a bijection");
    inv[perm[i]] = i;
  }
  return inv;
}

Tensor permute_channels(const Tensor& a, const std::vector<std::size_t>& perm) {
  if (a.rank() < 2) throw ShapeError("permute_channels: tensor has no channel axis");
  const auto sp = split_axis(a.shape(), 1, "permute_channels");
  if (perm.size() != sp.len) throw ShapeError("permute_channels: permutation length mismatch");
  inverse_permutation(perm);  // validates
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t c = 0; c < sp.len; ++c)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * sp.len + perm[c]) * sp.inner), sp.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * sp.len + c) * sp.inner));
  auto an = a.node();
  return make_op_result("permute_channels", a.shape(), std::move(out), {a}, [an, sp, perm](Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t oo = 0; oo < sp.outer; ++oo)
      for (std::size_t c = 0; c < sp.len; ++c)
        for (std::size_t i = 0; i < sp.inner; ++i)
          g[(oo * sp.len + perm[c]) * sp.inner + i] += o.grad[(oo * sp.len + c) * sp.inner + i];
  });
}

Tensor sparse_linear(const Tensor& a, const SparseMap& map, Shape out_tail) {
  if (a.rank() < 1) throw ShapeError("sparse_linear needs a batch axis");
  const std::size_t B = a.dim(0);
  if (a.numel() != B * map.cols)
    throw ShapeError("sparse_linear: input " + shape_str(a.shape()) + " does not match map with " +
                     std::to_string(map.cols) + " columns");
  if (numel(out_tail) != map.rows) throw ShapeError("sparse_linear: output shape does not match map rows");
  Shape out_shape{B};
  out_shape.insert(out_shape.end(), out_tail.begin(), out_tail.end());
  std::vector<double> out(B * map.rows);
  for (std::size_t b = 0; b < B; ++b) map.apply(a.data().data() + b * map.cols, out.data() + b * map.rows);
  auto an = a.node();
  auto mp = std::make_shared<SparseMap>(map);
  return make_op_result("sparse_linear", std::move(out_shape), std::move(out), {a}, [an, mp, B](Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      mp->apply_transpose_add(o.grad.data() + b * mp->rows, g.data() + b * mp->cols);
  });
}

// ---------------------------------------------------------------- batch norm

Tensor batchnorm2d(const Tensor& input, BatchNormStats& running, const Tensor& gamma,
                   const Tensor& beta, std::size_t field_size, bool training, double momentum,
                   double eps) {
  if (input.rank() != 4) throw ShapeError("batchnorm2d expects B×C×H×W");
  const std::size_t B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (field_size == 0 || C % field_size)
    throw ShapeError("batchnorm2d: " + std::to_string(C) + " channels not divisible into fields of " +
                     std::to_string(field_size));
  const std::size_t F = C / field_size;
  if (gamma.numel() != F || beta.numel() != F || running.mean.numel() != F || running.var.numel() != F)
    throw ShapeError("batchnorm2d: per-field parameter count must be " + std::to_string(F));
  const std::size_t span = field_size * HW;  // contiguous block of one field in one sample
  const double count = static_cast<double>(B * span);
  const auto x = input.data();

  std::vector<double> mu(F, 0.0), invstd(F, 0.0);
  if (training) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f) {
        const double* p = x.data() + (b * F + f) * span;
        for (std::size_t t = 0; t < span; ++t) mu[f] += p[t];
      }
    for (auto& m : mu) m /= count;
    std::vector<double> var(F, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f) {
        const double* p = x.data() + (b * F + f) * span;
        for (std::size_t t = 0; t < span; ++t) var[f] += (p[t] - mu[f]) * (p[t] - mu[f]);
      }
    auto rm = running.mean.mutable_data();
    auto rv = running.var.mutable_data();
    for (std::size_t f = 0; f < F; ++f) {
      const double biased = var[f] / count;
      const double unbiased = count > 1 ? var[f] / (count - 1) : biased;
      invstd[f] = 1.0 / std::sqrt(biased + eps);
      rm[f] = (1 - momentum) * rm[f] + momentum * mu[f];
      rv[f] = (1 - momentum) * rv[f] + momentum * unbiased;
    }
  } else {
    for (std::size_t f = 0; f < F; ++f) {
      mu[f] = running.mean.data()[f];
      invstd[f] = 1.0 / std::sqrt(running.var.data()[f] + eps);
    }
  }

  std::vector<double> out(x.size());
  const auto gm = gamma.data(), bt = beta.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t base = (b * F + f) * span;
      for (std::size_t t = 0; t < span; ++t)
        out[base + t] = gm[f] * (x[base + t] - mu[f]) * invstd[f] + bt[f];
    }

  auto in = input.node(), gn = gamma.node(), bn = beta.node();
  return make_op_result(
      "batchnorm2d", input.shape(), std::move(out), {input, gamma, beta},
      [in, gn, bn, mu, invstd, B, F, span, count, training](Node& o) {
        const auto& g = o.grad;
        const auto& xv = in->value;
        std::vector<double> sum_g(F, 0.0), sum_gx(F, 0.0);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t f = 0; f < F; ++f) {
            const std::size_t base = (b * F + f) * span;
            for (std::size_t t = 0; t < span; ++t) {
              sum_g[f] += g[base + t];
              sum_gx[f] += g[base + t] * (xv[base + t] - mu[f]) * invstd[f];
            }
          }
        if (gn->requires_grad) {
          auto& gg = gn->ensure_grad();
          for (std::size_t f = 0; f < F; ++f) gg[f] += sum_gx[f];
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (std::size_t f = 0; f < F; ++f) gb[f] += sum_g[f];
        }
        if (!in->requires_grad) return;
        auto& gx = in->ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t f = 0; f < F; ++f) {
            const std::size_t base = (b * F + f) * span;
            const double gam = gn->value[f];
            for (std::size_t t = 0; t < span; ++t) {
              if (training) {
                const double xhat = (xv[base + t] - mu[f]) * invstd[f];
                gx[base + t] += gam * invstd[f] / count * (count * g[base + t] - sum_g[f] - xhat * sum_gx[f]);
              } else {
                gx[base + t] += gam * invstd[f] * g[base + t];
              }
            }
          }
      });
}

}  // namespace eqmesh
