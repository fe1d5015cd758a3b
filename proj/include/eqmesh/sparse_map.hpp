#pragma once

#include <cstdint>
#include <vector>

namespace eqmesh {

/// A fixed sparse linear map y = A·x between flat vectors, stored as
/// (row, col, weight) triplets sorted by row. Used for the fixed linear
/// parts of the model: kernel rotations, grid rotations, vector mapping.
struct SparseMap {
  struct Entry {
    std::uint32_t row;
    std::uint32_t col;
    double weight;
  };

  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Entry> entries;

  SparseMap() = default;
  SparseMap(std::size_t rows_, std::size_t cols_) : rows(rows_), cols(cols_) {}

  void add(std::size_t row, std::size_t col, double weight);
  /// Sorts by (row, col) and merges duplicates; drops exact zeros.
  void finalize();

  /// this ∘ other (apply `other` first).
  SparseMap compose(const SparseMap& other) const;
  SparseMap transpose() const;

  void apply(const double* x, double* y) const;            // y = A x
  void apply_transpose_add(const double* gy, double* gx) const;  // gx += Aᵀ gy

  static SparseMap identity(std::size_t n);
};

}  // namespace eqmesh
