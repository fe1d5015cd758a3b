#include "eqmesh/model.hpp"

#include <random>
#include <stdexcept>

namespace eqmesh {

std::string to_string(ModelKind k) { return k == ModelKind::Equivariant ? "equivariant" : "plain_mlp"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "equivariant") return ModelKind::Equivariant;
  if (s == "plain_mlp") return ModelKind::PlainMlp;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected equivariant or plain_mlp)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (group_order != kGroupOrder) fail("group_order must be 8");
  if (image_size < 1) fail("image_size must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel_size must be odd");
  if (stem_fields < 1 || final_fields < 1) fail("field counts must be positive");
  if (final_fields % 2) fail("final_fields must be even (fields are paired into 2D vectors)");
  if (block_fields.size() != block_strides.size()) fail("block_fields and block_strides differ in length");
  for (int f : block_fields)
    if (f < 1) fail("block field counts must be positive");
  if (stem_stride < 1) fail("strides must be >= 1");
  for (int s : block_strides)
    if (s < 1) fail("strides must be >= 1");
  if (vertex_count < 1) fail("vertex_count must be positive");
  if (projection_hidden < 1 || mlp_hidden < 1) fail("hidden widths must be positive");
  for (int w : decoder_widths)
    if (w < 1) fail("decoder widths must be positive");
  if (!(output_scale > 0)) fail("output_scale must be positive");
  (void)latent_extent();
}

std::size_t ModelConfig::latent_extent() const {
  long s = image_size;
  std::vector<int> strides{stem_stride};
  strides.insert(strides.end(), block_strides.begin(), block_strides.end());
  for (int st : strides) {
    if (s % st) throw std::invalid_argument("model config: image_size not divisible by stride schedule");
    s /= st;
  }
  return static_cast<std::size_t>(s);
}

int ModelConfig::latent_vectors() const {
  const auto s = static_cast<int>(latent_extent());
  return s * s * final_fields / 2;
}

namespace {
EncoderSpec encoder_spec(const ModelConfig& c, bool steerable) {
  EncoderSpec e;
  e.kernel = c.kernel_size;
  e.stem_fields = c.stem_fields;
  e.stem_stride = c.stem_stride;
  e.block_fields = c.block_fields;
  e.block_strides = c.block_strides;
  e.final_fields = c.final_fields;
  e.steerable = steerable;
  return e;
}
}  // namespace

EquivariantMeshModel::EquivariantMeshModel(const ModelConfig& cfg, std::uint64_t seed) : MeshModel(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  encoder_ = std::make_unique<Encoder>(store_, "encoder", encoder_spec(cfg_, true), rng);
  mapping_ = vector_mapping_map(cfg_.final_fields, cfg_.latent_extent());
  const int m = cfg_.latent_vectors();
  projection_ = std::make_unique<Projection3D>(store_, "projection", m, cfg_.projection_hidden, rng);
  std::vector<int> mult{m};
  mult.insert(mult.end(), cfg_.decoder_widths.begin(), cfg_.decoder_widths.end());
  mult.push_back(cfg_.vertex_count);
  decoder_ = std::make_unique<VectorDecoder>(store_, "decoder", mult, rng);
}

Tensor EquivariantMeshModel::encode(const Tensor& images, bool training) {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != static_cast<std::size_t>(cfg_.image_size) ||
      images.dim(3) != static_cast<std::size_t>(cfg_.image_size))
    throw ShapeError("model expects B×3×" + std::to_string(cfg_.image_size) + "×" +
                     std::to_string(cfg_.image_size) + " images, got " + shape_str(images.shape()));
  return encoder_->forward(images, training);
}

Tensor EquivariantMeshModel::map_vectors(const Tensor& field) const { return vector_mapping(field, mapping_); }

Tensor EquivariantMeshModel::project(const Tensor& latent) const { return projection_->forward(latent); }

Tensor EquivariantMeshModel::decode(const Tensor& latent3d) const {
  auto out = decoder_->forward(latent3d);
  return cfg_.output_scale == 1.0 ? out : scale(out, cfg_.output_scale);
}

Tensor EquivariantMeshModel::forward(const Tensor& images, bool training) {
  return decode(project(map_vectors(encode(images, training))));
}

PlainMlpModel::PlainMlpModel(const ModelConfig& cfg, std::uint64_t seed) : MeshModel(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  encoder_ = std::make_unique<Encoder>(store_, "encoder", encoder_spec(cfg_, false), rng);
  const auto s = static_cast<int>(cfg_.latent_extent());
  const int flat = encoder_->out_channels() * s * s;
  fc1_ = std::make_unique<Dense>(store_, "fc1", flat, cfg_.mlp_hidden, rng);
  fc2_ = std::make_unique<Dense>(store_, "fc2", cfg_.mlp_hidden, cfg_.vertex_count * 3, rng, 1.0);
}

Tensor PlainMlpModel::forward(const Tensor& images, bool training) {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != static_cast<std::size_t>(cfg_.image_size) ||
      images.dim(3) != static_cast<std::size_t>(cfg_.image_size))
    throw ShapeError("model expects B×3×" + std::to_string(cfg_.image_size) + "×" +
                     std::to_string(cfg_.image_size) + " images, got " + shape_str(images.shape()));
  const std::size_t B = images.dim(0);
  auto f = encoder_->forward(images, training);
  auto h = relu(fc1_->forward(reshape(f, {B, f.numel() / B})));
  auto out = reshape(fc2_->forward(h), {B, static_cast<std::size_t>(cfg_.vertex_count), 3});
  return cfg_.output_scale == 1.0 ? out : scale(out, cfg_.output_scale);
}

std::unique_ptr<MeshModel> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.baseline == ModelKind::PlainMlp) return std::make_unique<PlainMlpModel>(cfg, seed);
  return std::make_unique<EquivariantMeshModel>(cfg, seed);
}

}  // namespace eqmesh
