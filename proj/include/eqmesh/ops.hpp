#pragma once

#include <vector>

#include "eqmesh/sparse_map.hpp"
#include "eqmesh/tensor.hpp"

namespace eqmesh {

// Elementwise arithmetic. `b` broadcasts into `a` numpy-style (missing
// leading axes and size-1 axes); a single-element `b` acts as a scalar.
// The result always has `a`'s shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// [m×k]·[k×n] → [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// 2D cross-correlation, input B×Cin×H×W, kernel Cout×Cin×k×k, k odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1, int padding = 0);
/// Non-overlapping `factor`×`factor` average pooling; H and W must be divisible.
Tensor avg_pool2d(const Tensor& input, int factor);
// Per-channel 3×3 binomial blur, zero padded, same extent.
Tensor blur2d(const Tensor& input);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
/// Euclidean norm along `axis` (axis removed). Gradient at zero is 0.
Tensor norm2(const Tensor& a, std::size_t axis);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
/// Reorders axis 1: out[:, i] = a[:, perm[i]].
Tensor permute_channels(const Tensor& a, const std::vector<std::size_t>& perm);
std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm);

/// Applies `map` to each slice along axis 0: a is B×(map.cols as any shape),
/// result has shape {B} ++ out_tail with numel(out_tail) == map.rows.
Tensor sparse_linear(const Tensor& a, const SparseMap& map, Shape out_tail);

/// out[b,i,:] = Σ_j w[i,j]·v[b,j,:]; w is mo×mi, v is B×mi×d.
Tensor mix_channels(const Tensor& w, const Tensor& v);

/// Running statistics of a batch-norm layer, one entry per field.
struct BatchNormStats {
  Tensor mean;
  Tensor var;
};

/// Batch normalization with statistics pooled per field: each group of
/// `field_size` consecutive channels shares one mean/variance over batch
/// and space. gamma/beta have one entry per field.
Tensor batchnorm2d(const Tensor& input, BatchNormStats& running, const Tensor& gamma,
                   const Tensor& beta, std::size_t field_size, bool training,
                   double momentum = 0.1, double eps = 1e-5);

}  // namespace eqmesh
