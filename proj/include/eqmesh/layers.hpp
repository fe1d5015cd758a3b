#pragma once

#include <random>
#include <string>
#include <vector>

#include "eqmesh/groups.hpp"
#include "eqmesh/ops.hpp"
#include "eqmesh/params.hpp"
#include "eqmesh/sparse_map.hpp"

namespace eqmesh {

inline constexpr int kGroupOrder = 8;

/// Exact cos/sin of r·45° (0, ±1, ±√½ with no rounding residue at quarter turns).
double c8_cos(int r);
double c8_sin(int r);

/// Rotation of a k×k kernel by `eighths`·45° (out = map·in). Each ring of
/// equal-radius pixels is projected onto circular harmonics of order ≤ 2 (≤ 1
/// for four-pixel rings), which are rotated exactly and resampled, so the
/// maps form a representation of C8 and quarter turns equal pixel
/// permutations on the band-limited part. The identity element is the
/// projection itself.
SparseMap kernel_rotation_map(int kernel, int eighths);

/// Convolution whose output is a stack of C8 regular-representation fields
/// (channel f·8 + r is orientation r of field f).
///
/// The canonical kernel has shape Fout × Cin × k × k. For a lifting layer Cin
/// is the number of plain image channels; otherwise Cin = Fin·8. Orientation
/// r of an output field convolves with the canonical kernel rotated by r·45°
/// (see kernel_rotation_map) and, for regular inputs, with the input
/// orientations cyclically shifted by r. The expansion canonical → full kernel is a fixed sparse map.
///
/// stride > 1 is realized as stride×stride average pooling followed by a
/// stride-1 convolution, which keeps exact quarter-turn equivariance on even
/// grids.
///
/// With `steerable == false` the same layer is an ordinary convolution
/// (kernel Cout × Cin × k × k, Cout = out_fields·8), used by the baseline.
class FieldConv {
 public:
  FieldConv(ParamStore& store, const std::string& name, int in_channels, bool lifting, int out_fields,
            int kernel, int stride, bool steerable, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  Tensor full_kernel() const;
  Tensor& canonical_kernel() { return weight_; }

  int out_channels() const { return out_fields_ * kGroupOrder; }

  /// canonical (Fout×Cin×k×k) → full (Fout·8 × Cin × k × k).
  static SparseMap expansion_map(int in_channels, bool lifting, int out_fields, int kernel);

 private:
  Tensor weight_;
  SparseMap expand_;
  int in_channels_;
  int out_fields_;
  int kernel_;
  int stride_;
  bool steerable_;
};

/// Batch norm with one statistic per field of `field_size` channels.
class FieldBatchNorm {
 public:
  FieldBatchNorm(ParamStore& store, const std::string& name, int fields, int field_size);
  Tensor forward(const Tensor& x, bool training);

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  BatchNormStats& running() { return running_; }

 private:
  Tensor gamma_, beta_;
  BatchNormStats running_;
  int field_size_;
};

/// conv → BN → ReLU → conv → BN, plus skip, then ReLU. The skip is the
/// identity when shape is preserved, otherwise a 1×1 (pooled) field conv.
class ResidualBlock {
 public:
  ResidualBlock(ParamStore& store, const std::string& name, int in_fields, int out_fields, int kernel,
                int stride, bool steerable, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training);

  FieldConv& conv1() { return conv1_; }
  FieldConv& conv2() { return conv2_; }
  FieldBatchNorm& bn1() { return bn1_; }
  FieldBatchNorm& bn2() { return bn2_; }

 private:
  FieldConv conv1_, conv2_;
  FieldBatchNorm bn1_, bn2_;
  std::vector<FieldConv> skip_;  // empty: identity
};

struct EncoderSpec {
  int image_channels = 3;
  int kernel = 3;
  int stem_fields = 2;
  int stem_stride = 1;
  std::vector<int> block_fields{2, 4, 4, 8, 8};
  std::vector<int> block_strides{2, 2, 2, 2, 2};
  int final_fields = 4;
  bool steerable = true;
};

/// Stem conv+BN+ReLU, residual blocks, final conv. Output B×(F·8)×S×S.
class Encoder {
 public:
  Encoder(ParamStore& store, const std::string& name, const EncoderSpec& spec, std::mt19937_64& rng);
  Tensor forward(const Tensor& images, bool training);
  int out_channels() const { return spec_.final_fields * kGroupOrder; }
  /// Output spatial extent for an input of `image_size`.
  std::size_t output_extent(std::size_t image_size) const;

 private:
  EncoderSpec spec_;
  FieldConv stem_;
  FieldBatchNorm stem_bn_;
  std::vector<ResidualBlock> blocks_;
  FieldConv final_;
};

/// Fixed linear map from a C8 regular field stack (F fields, S×S) to M =
/// S²·F/2 planar vectors: per orientation r, undo the spatial action by
/// rotating the plane by −r·45° (grid_rotation_c8_smooth), read fields (2i, 2i+1) as a 2D vector,
/// rotate it by ρ1(r·45°), and average over r. Latent index = i·S² + p.
SparseMap vector_mapping_map(int fields, std::size_t extent);

Tensor vector_mapping(const Tensor& field, const SparseMap& map);

/// ρ1 → ρ1 ⊕ ρ0 over SO(2). The (x, y) part mixes the M input vectors with
/// the intertwiner basis {I, J}; the z part is a two-layer perceptron on the
/// rotation invariants (norms, and dot/cross products of neighbours j, j+1).
class Projection3D {
 public:
  Projection3D(ParamStore& store, const std::string& name, int vectors, int hidden, std::mt19937_64& rng);
  Tensor forward(const Tensor& latent) const;

  /// The basis {I, J}, checked against the numerical solver's span.
  const EquivariantBasis& basis() const { return basis_; }
  Tensor& mixing() { return coeffs_; }
  Tensor& w1() { return w1_; }
  Tensor& b1() { return b1_; }
  Tensor& w2() { return w2_; }
  Tensor& b2() { return b2_; }

 private:
  int m_;
  EquivariantBasis basis_;
  Tensor coeffs_, w1_, b1_, w2_, b2_;
  SparseMap shift_, shift_cross_;
};

/// One SO(3)-equivariant layer on V1 channels: channel mixing by the
/// intertwiner Hom(V1, V1) (a scalar times I₃), optionally followed by the
/// norm gate v ↦ sigmoid(α‖v‖ + β)·v.
class VectorLayer {
 public:
  VectorLayer(ParamStore& store, const std::string& name, int in_mult, int out_mult, bool gated,
              std::mt19937_64& rng);
  Tensor forward(const Tensor& v) const;

  Tensor& coeffs() { return coeffs_; }
  Tensor& alpha() { return alpha_; }
  Tensor& beta() { return beta_; }
  double basis_scale() const { return basis_scale_; }

 private:
  Tensor coeffs_, alpha_, beta_;
  double basis_scale_;
  bool gated_;
};

/// Stack of VectorLayers; the last is ungated.
class VectorDecoder {
 public:
  VectorDecoder(ParamStore& store, const std::string& name, const std::vector<int>& multiplicities,
                std::mt19937_64& rng);
  Tensor forward(const Tensor& v) const;
  std::vector<VectorLayer>& layers() { return layers_; }

 private:
  std::vector<VectorLayer> layers_;
};

/// Plain fully connected layer y = x·W + b.
class Dense {
 public:
  Dense(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng, double gain = 2.0);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor w_, b_;
};

}  // namespace eqmesh
