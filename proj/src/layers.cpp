#include "eqmesh/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eqmesh/grid.hpp"

namespace eqmesh {

namespace {

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

double c8_cos(int r) {
  static const double t[8] = {1, std::numbers::sqrt2 / 2, 0, -std::numbers::sqrt2 / 2,
                              -1, -std::numbers::sqrt2 / 2, 0, std::numbers::sqrt2 / 2};
  return t[((r % 8) + 8) % 8];
}

double c8_sin(int r) { return c8_cos(r - 2); }

// ---------------------------------------------------------------- FieldConv

namespace {

// Rotation of a k×k kernel by 45° or the identity (odd == false), restricted
// to the band-limited subspace. Pixels are grouped into rings of equal radius;
// each ring is fitted with circular harmonics up to the order its samples
// resolve, and the fit is rotated analytically and resampled.
SparseMap banded_kernel_map(std::size_t k, bool odd) {
  const double c = (static_cast<double>(k) - 1.0) / 2.0;
  std::vector<std::vector<std::size_t>> rings;
  std::vector<long> radii;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double x = static_cast<double>(j) - c, y = c - static_cast<double>(i);
      const long r2 = std::lround(x * x + y * y);
      auto it = std::find(radii.begin(), radii.end(), r2);
      if (it == radii.end()) {
        radii.push_back(r2);
        rings.emplace_back();
        it = radii.end() - 1;
      }
      rings[static_cast<std::size_t>(it - radii.begin())].push_back(i * k + j);
    }

  const double phi = odd ? std::numbers::pi / 4 : 0.0;
  SparseMap m(k * k, k * k);
  for (const auto& ring : rings) {
    const int n = static_cast<int>(ring.size());
    const int order = std::min((n - 1) / 2, 2);
    const int width = 2 * order + 1;
    std::vector<double> theta;
    for (std::size_t idx : ring) {
      const double x = static_cast<double>(idx % k) - c, y = c - static_cast<double>(idx / k);
      theta.push_back(std::atan2(y, x));
    }
    auto harmonics = [&](double shift) {
      Eigen::MatrixXd h(n, width);
      for (int p = 0; p < n; ++p) {
        h(p, 0) = 1.0;
        for (int l = 1; l <= order; ++l) {
          h(p, 2 * l - 1) = std::cos(l * (theta[static_cast<std::size_t>(p)] - shift));
          h(p, 2 * l) = std::sin(l * (theta[static_cast<std::size_t>(p)] - shift));
        }
      }
      return h;
    };
    const Eigen::MatrixXd fit = harmonics(0.0).completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::MatrixXd op = harmonics(phi) * fit;  // f ↦ samples of f(θ − φ)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (std::abs(op(a, b)) > 1e-15) m.add(ring[static_cast<std::size_t>(a)], ring[static_cast<std::size_t>(b)], op(a, b));
  }
  m.finalize();
  return m;
}

}  // namespace

SparseMap kernel_rotation_map(int kernel, int eighths) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("kernel size must be odd");
  const int e = ((eighths % kGroupOrder) + kGroupOrder) % kGroupOrder;
  const std::size_t k = uz(kernel);
  return grid_rotation_quarter(k, e / 2).compose(banded_kernel_map(k, e % 2 == 1));
}

SparseMap FieldConv::expansion_map(int in_channels, bool lifting, int out_fields, int kernel) {
  const std::size_t k2 = uz(kernel * kernel);
  const std::size_t cin = uz(in_channels);
  if (!lifting && in_channels % kGroupOrder)
    throw ShapeError("regular field input needs a multiple of 8 channels, got " + std::to_string(in_channels));
  SparseMap m(uz(out_fields * kGroupOrder) * cin * k2, uz(out_fields) * cin * k2);
  for (int r = 0; r < kGroupOrder; ++r) {
    const auto rot = kernel_rotation_map(kernel, r);
    for (int fo = 0; fo < out_fields; ++fo)
      for (std::size_t ci = 0; ci < cin; ++ci) {
        std::size_t src_c = ci;
        if (!lifting) {
          const std::size_t fi = ci / kGroupOrder, u = ci % kGroupOrder;
          src_c = fi * kGroupOrder + uz(((static_cast<int>(u) - r) % kGroupOrder + kGroupOrder) % kGroupOrder);
        }
        const std::size_t row_base = ((uz(fo * kGroupOrder + r)) * cin + ci) * k2;
        const std::size_t col_base = (uz(fo) * cin + src_c) * k2;
        for (const auto& e : rot.entries) m.add(row_base + e.row, col_base + e.col, e.weight);
      }
  }
  m.finalize();
  return m;
}

FieldConv::FieldConv(ParamStore& store, const std::string& name, int in_channels, bool lifting, int out_fields,
                     int kernel, int stride, bool steerable, std::mt19937_64& rng)
    : in_channels_(in_channels),
      out_fields_(out_fields),
      kernel_(kernel),
      stride_(stride),
      steerable_(steerable) {
  if (kernel % 2 == 0) throw ShapeError("field conv kernel size must be odd");
  if (stride < 1) throw ShapeError("field conv stride must be >= 1");
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  const double stddev = std::sqrt(2.0 / fan_in);
  const std::size_t k = uz(kernel), cin = uz(in_channels);
  if (steerable) {
    expand_ = expansion_map(in_channels, lifting, out_fields, kernel);
    weight_ = store.add_param(name + ".weight", normal_tensor({uz(out_fields), cin, k, k}, stddev, rng));
  } else {
    weight_ = store.add_param(name + ".weight",
                              normal_tensor({uz(out_fields * kGroupOrder), cin, k, k}, stddev, rng));
  }
}

Tensor FieldConv::full_kernel() const {
  if (!steerable_) return weight_;
  const std::size_t k = uz(kernel_);
  auto flat = reshape(weight_, {1, weight_.numel()});
  return reshape(sparse_linear(flat, expand_, {expand_.rows}),
                 {uz(out_fields_ * kGroupOrder), uz(in_channels_), k, k});
}

Tensor FieldConv::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != uz(in_channels_))
    throw ShapeError("field conv expects B×" + std::to_string(in_channels_) + "×H×W, got " + shape_str(x.shape()));
  const Tensor in = stride_ > 1 ? avg_pool2d(blur2d(x), stride_) : x;
  return conv2d(in, full_kernel(), 1, kernel_ / 2);
}

// ---------------------------------------------------------------- batch norm

FieldBatchNorm::FieldBatchNorm(ParamStore& store, const std::string& name, int fields, int field_size)
    : field_size_(field_size) {
  gamma_ = store.add_param(name + ".gamma", Tensor::full({uz(fields)}, 1.0));
  beta_ = store.add_param(name + ".beta", Tensor::zeros({uz(fields)}));
  running_.mean = store.add_buffer(name + ".running_mean", Tensor::zeros({uz(fields)}));
  running_.var = store.add_buffer(name + ".running_var", Tensor::full({uz(fields)}, 1.0));
}

Tensor FieldBatchNorm::forward(const Tensor& x, bool training) {
  return batchnorm2d(x, running_, gamma_, beta_, uz(field_size_), training);
}

// ---------------------------------------------------------------- residual block

ResidualBlock::ResidualBlock(ParamStore& store, const std::string& name, int in_fields, int out_fields, int kernel,
                             int stride, bool steerable, std::mt19937_64& rng)
    : conv1_(store, name + ".conv1", in_fields * kGroupOrder, false, out_fields, kernel, stride, steerable, rng),
      conv2_(store, name + ".conv2", out_fields * kGroupOrder, false, out_fields, kernel, 1, steerable, rng),
      bn1_(store, name + ".bn1", steerable ? out_fields : out_fields * kGroupOrder, steerable ? kGroupOrder : 1),
      bn2_(store, name + ".bn2", steerable ? out_fields : out_fields * kGroupOrder, steerable ? kGroupOrder : 1) {
  if (stride > 1 || in_fields != out_fields)
    skip_.emplace_back(store, name + ".skip", in_fields * kGroupOrder, false, out_fields, 1, stride, steerable, rng);
}

Tensor ResidualBlock::forward(const Tensor& x, bool training) {
  auto h = relu(bn1_.forward(conv1_.forward(x), training));
  h = bn2_.forward(conv2_.forward(h), training);
  const Tensor skip = skip_.empty() ? x : skip_.front().forward(x);
  return relu(add(h, skip));
}

// ---------------------------------------------------------------- encoder

Encoder::Encoder(ParamStore& store, const std::string& name, const EncoderSpec& spec, std::mt19937_64& rng)
    : spec_(spec),
      stem_(store, name + ".stem", spec.image_channels, true, spec.stem_fields, spec.kernel, spec.stem_stride,
            spec.steerable, rng),
      stem_bn_(store, name + ".stem_bn", spec.steerable ? spec.stem_fields : spec.stem_fields * kGroupOrder,
               spec.steerable ? kGroupOrder : 1),
      final_(store, name + ".final",
             (spec.block_fields.empty() ? spec.stem_fields : spec.block_fields.back()) * kGroupOrder, false,
             spec.final_fields, spec.kernel, 1, spec.steerable, rng) {
  if (spec.block_fields.size() != spec.block_strides.size())
    throw std::invalid_argument("encoder: block_fields and block_strides differ in length");
  int in = spec.stem_fields;
  for (std::size_t b = 0; b < spec.block_fields.size(); ++b) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(b), in, spec.block_fields[b], spec.kernel,
                         spec.block_strides[b], spec.steerable, rng);
    in = spec.block_fields[b];
  }
}

std::size_t Encoder::output_extent(std::size_t image_size) const {
  std::size_t s = image_size;
  auto step = [&](int stride) {
    if (s % uz(stride)) throw ShapeError("image size " + std::to_string(image_size) + " not divisible by strides");
    s /= uz(stride);
  };
  step(spec_.stem_stride);
  for (int st : spec_.block_strides) step(st);
  return s;
}

Tensor Encoder::forward(const Tensor& images, bool training) {
  auto h = relu(stem_bn_.forward(stem_.forward(images), training));
  for (auto& b : blocks_) h = b.forward(h, training);
  return final_.forward(h);
}

// ---------------------------------------------------------------- vector mapping

SparseMap vector_mapping_map(int fields, std::size_t extent) {
  if (fields % 2) throw ShapeError("vector mapping needs an even field count, got " + std::to_string(fields));
  const std::size_t s2 = extent * extent;
  const std::size_t pairs = uz(fields / 2);
  SparseMap m(pairs * s2 * 2, uz(fields * kGroupOrder) * s2);
  const double w = 1.0 / kGroupOrder;
  // Sites outside the inscribed disk have no 45° partner on the grid; their
  // vectors are held at zero.
  const double centre = (static_cast<double>(extent) - 1) / 2.0;
  const double limit = std::max(centre, 0.5) + 0.25;
  std::vector<bool> inside(s2);
  for (std::size_t i = 0; i < extent; ++i)
    for (std::size_t j = 0; j < extent; ++j)
      inside[i * extent + j] = std::hypot(static_cast<double>(i) - centre, static_cast<double>(j) - centre) <= limit;
  for (int r = 0; r < kGroupOrder; ++r) {
    const auto undo = grid_rotation_c8_smooth(extent, -r, kFieldResampleSigma);  // h_r(p) ≈ f_r(R_r p)
    const double c = c8_cos(r), s = c8_sin(r);
    for (std::size_t i = 0; i < pairs; ++i) {
      const std::size_t cx = ((2 * i) * kGroupOrder + uz(r)) * s2;
      const std::size_t cy = ((2 * i + 1) * kGroupOrder + uz(r)) * s2;
      for (const auto& e : undo.entries) {
        if (!inside[e.row]) continue;
        const std::size_t vec = i * s2 + e.row;
        // (x', y') = ρ1(r·45°)·(x, y)
        m.add(vec * 2 + 0, cx + e.col, w * c * e.weight);
        m.add(vec * 2 + 0, cy + e.col, -w * s * e.weight);
        m.add(vec * 2 + 1, cx + e.col, w * s * e.weight);
        m.add(vec * 2 + 1, cy + e.col, w * c * e.weight);
      }
    }
  }
  m.finalize();
  return m;
}

Tensor vector_mapping(const Tensor& field, const SparseMap& map) {
  return sparse_linear(field, map, {map.rows / 2, 2});
}

// ---------------------------------------------------------------- projection

namespace {

EquivariantBasis rho1_canonical_basis() {
  const auto rep = Representation::rho1_so2();
  auto solved = solve_equivariant_basis(rep, rep);
  if (solved.size() != 2) throw std::logic_error("Hom(rho1, rho1) is expected to be 2-dimensional");
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd j(2, 2);
  j << 0, -1, 1, 0;
  for (const auto* m : {&eye, &j}) {
    Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(2, 2);
    for (const auto& b : solved.basis) proj += (b.cwiseProduct(*m)).sum() * b;
    if ((proj - *m).norm() > 1e-8) throw std::logic_error("{I, J} not in the solved intertwiner span");
  }
  return {rep, rep, {eye, j}};
}

}  // namespace

Projection3D::Projection3D(ParamStore& store, const std::string& name, int vectors, int hidden,
                           std::mt19937_64& rng)
    : m_(vectors), basis_(rho1_canonical_basis()) {
  const std::size_t m = uz(vectors), h = uz(hidden);
  coeffs_ = store.add_param(name + ".mix", normal_tensor({m, m, 2}, std::sqrt(1.0 / (2.0 * vectors)), rng));
  w1_ = store.add_param(name + ".inv_w1", normal_tensor({3 * m, h}, std::sqrt(2.0 / (3.0 * vectors)), rng));
  b1_ = store.add_param(name + ".inv_b1", Tensor::zeros({h}));
  w2_ = store.add_param(name + ".inv_w2", normal_tensor({h, m}, std::sqrt(1.0 / hidden), rng));
  b2_ = store.add_param(name + ".inv_b2", Tensor::zeros({m}));

  shift_ = SparseMap(2 * m, 2 * m);
  shift_cross_ = SparseMap(2 * m, 2 * m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t nxt = (j + 1) % m;
    shift_.add(2 * j, 2 * nxt, 1.0);
    shift_.add(2 * j + 1, 2 * nxt + 1, 1.0);
    // (y_{j+1}, −x_{j+1}) so that ⟨v_j, ·⟩ = v_j × v_{j+1}
    shift_cross_.add(2 * j, 2 * nxt + 1, 1.0);
    shift_cross_.add(2 * j + 1, 2 * nxt, -1.0);
  }
  shift_.finalize();
  shift_cross_.finalize();
}

Tensor Projection3D::forward(const Tensor& latent) const {
  const std::size_t m = uz(m_);
  if (latent.rank() != 3 || latent.dim(1) != m || latent.dim(2) != 2)
    throw ShapeError("projection expects B×" + std::to_string(m_) + "×2, got " + shape_str(latent.shape()));
  const std::size_t B = latent.dim(0);

  const auto w = equivariant_linear(basis_, coeffs_, m_, m_);  // 2M × 2M
  auto xy = reshape(matmul(reshape(latent, {B, 2 * m}), transpose(w)), {B, m, 2});

  const auto norms = norm2(latent, 2);
  const auto dots = sum(mul(latent, sparse_linear(latent, shift_, {m, 2})), 2);
  const auto cross = sum(mul(latent, sparse_linear(latent, shift_cross_, {m, 2})), 2);
  const auto inv = concat({norms, dots, cross}, 1);
  const auto hidden = relu(add(matmul(inv, w1_), b1_));
  const auto z = add(matmul(hidden, w2_), b2_);
  return concat({xy, reshape(z, {B, m, 1})}, 2);
}

// ---------------------------------------------------------------- decoder

namespace {
double v1_basis_scale() {
  const auto rep = Representation::v1_so3();
  const auto solved = solve_equivariant_basis(rep, rep);
  if (solved.size() != 1) throw std::logic_error("Hom(V1, V1) is expected to be 1-dimensional");
  const auto& b = solved.basis[0];
  if ((b - b(0, 0) * Eigen::MatrixXd::Identity(3, 3)).norm() > 1e-8)
    throw std::logic_error("Hom(V1, V1) basis is not a multiple of the identity");
  return b(0, 0);
}
}  // namespace

VectorLayer::VectorLayer(ParamStore& store, const std::string& name, int in_mult, int out_mult, bool gated,
                         std::mt19937_64& rng)
    : basis_scale_(v1_basis_scale()), gated_(gated) {
  const double eff = std::sqrt((gated ? 2.0 : 1.0) / in_mult);
  coeffs_ = store.add_param(name + ".mix", normal_tensor({uz(out_mult), uz(in_mult)}, eff / std::abs(basis_scale_), rng));
  if (gated) {
    alpha_ = store.add_param(name + ".gate_alpha", Tensor::zeros({uz(out_mult)}));
    beta_ = store.add_param(name + ".gate_beta", Tensor::zeros({uz(out_mult)}));
  }
}

Tensor VectorLayer::forward(const Tensor& v) const {
  auto out = scale(mix_channels(coeffs_, v), basis_scale_);
  if (!gated_) return out;
  const std::size_t B = out.dim(0), m = out.dim(1);
  const auto gate = sigmoid(add(mul(norm2(out, 2), alpha_), beta_));
  return mul(out, reshape(gate, {B, m, 1}));
}

VectorDecoder::VectorDecoder(ParamStore& store, const std::string& name, const std::vector<int>& mult,
                             std::mt19937_64& rng) {
  if (mult.size() < 2) throw std::invalid_argument("decoder needs at least input and output multiplicities");
  layers_.reserve(mult.size() - 1);
  for (std::size_t l = 0; l + 1 < mult.size(); ++l)
    layers_.emplace_back(store, name + ".layer" + std::to_string(l), mult[l], mult[l + 1], l + 2 < mult.size(),
                         rng);
}

Tensor VectorDecoder::forward(const Tensor& v) const {
  Tensor h = v;
  for (const auto& l : layers_) h = l.forward(h);
  return h;
}

// ---------------------------------------------------------------- dense

Dense::Dense(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng, double gain) {
  w_ = store.add_param(name + ".w", normal_tensor({uz(in), uz(out)}, std::sqrt(gain / in), rng));
  b_ = store.add_param(name + ".b", Tensor::zeros({uz(out)}));
}

Tensor Dense::forward(const Tensor& x) const { return add(matmul(x, w_), b_); }

}  // namespace eqmesh
