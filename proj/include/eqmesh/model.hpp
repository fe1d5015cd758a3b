#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eqmesh/layers.hpp"
#include "eqmesh/params.hpp"

namespace eqmesh {

enum class ModelKind { Equivariant, PlainMlp };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  int image_size = 256;
  int group_order = 8;
  int kernel_size = 3;
  int stem_fields = 2;
  int stem_stride = 1;
  std::vector<int> block_fields{2, 4, 4, 8, 8};
  std::vector<int> block_strides{2, 2, 2, 2, 2};
  int final_fields = 4;
  int projection_hidden = 64;
  std::vector<int> decoder_widths{256, 512};  // hidden multiplicities; output adds vertex_count
  int vertex_count = 954;
  ModelKind baseline = ModelKind::Equivariant;
  int mlp_hidden = 256;
  /// Fixed multiplier on the network output (targets are in mm).
  double output_scale = 1.0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  std::size_t latent_extent() const;
  /// Number of latent planar vectors M = S²·F/2.
  int latent_vectors() const;
};

/// Image → mesh vertices (B×V×3, mm).
class MeshModel {
 public:
  explicit MeshModel(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~MeshModel() = default;
  MeshModel(const MeshModel&) = delete;
  MeshModel& operator=(const MeshModel&) = delete;

  virtual Tensor forward(const Tensor& images, bool training) = 0;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

 protected:
  ModelConfig cfg_;
  ParamStore store_;
};

/// Steerable encoder → vector mapping → 3D projection → SO(3) decoder.
class EquivariantMeshModel final : public MeshModel {
 public:
  EquivariantMeshModel(const ModelConfig& cfg, std::uint64_t seed);

  Tensor forward(const Tensor& images, bool training) override;

  Tensor encode(const Tensor& images, bool training);
  Tensor map_vectors(const Tensor& field) const;
  Tensor project(const Tensor& latent) const;
  Tensor decode(const Tensor& latent3d) const;

  Projection3D& projection() { return *projection_; }
  VectorDecoder& decoder() { return *decoder_; }

 private:
  std::unique_ptr<Encoder> encoder_;
  SparseMap mapping_;
  std::unique_ptr<Projection3D> projection_;
  std::unique_ptr<VectorDecoder> decoder_;
};

/// Non-equivariant baseline: ordinary CNN of the same depth and width,
/// flatten, two fully connected layers.
class PlainMlpModel final : public MeshModel {
 public:
  PlainMlpModel(const ModelConfig& cfg, std::uint64_t seed);
  Tensor forward(const Tensor& images, bool training) override;

 private:
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Dense> fc1_, fc2_;
};

std::unique_ptr<MeshModel> make_model(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace eqmesh
