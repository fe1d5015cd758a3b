#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "eqmesh/tensor.hpp"

namespace eqmesh {

/// Ordered, named collection of trainable parameters and non-trainable
/// buffers (batch-norm running statistics). Order is registration order and
/// defines the checkpoint layout.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  Tensor& add_param(const std::string& name, Tensor t);
  Tensor& add_buffer(const std::string& name, Tensor t);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::vector<Tensor> trainable() const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  std::size_t parameter_count() const;

  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

/// Checkpoint file layout (all text lines end in '\n'):
///
///     EQMESH-CHECKPOINT 1
///     count <N>
///     <name> <rank> <d0> ... <d_rank-1>      (N lines, store order)
///     data
///     <raw little-endian IEEE-754 float64 values, concatenated in order>
///
/// Names contain no whitespace. Writing goes to "<path>.tmp" and is
/// renamed into place, so an interrupted write never clobbers `path`.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);

/// Loads values into an existing store. Names, order and shapes must match.
void load_checkpoint(ParamStore& store, const std::filesystem::path& path);

}  // namespace eqmesh
