#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <vector>

#include "eqmesh/model.hpp"
#include "eqmesh/synth.hpp"

namespace eqmesh {

struct TrainConfig {
  double lambda_v = 1.0;
  double lambda_l = 10.0;
  int epochs = 1000;
  double lr = 1e-5;
  double lr_decay = 0.5;
  int lr_decay_every = 100;
  int batch_size = 8;
  std::uint64_t seed = 0;
  /// Epochs between checkpoints; 0 writes only the final one.
  int checkpoint_every = 100;
  /// Max joint gradient norm; 0 disables clipping.
  double grad_clip = 0.0;

  void validate() const;
};

/// lr₀ · decay^floor(epoch / decay_every), epochs counted from 0.
double lr_at(const TrainConfig& cfg, int epoch);

struct EpochMetrics {
  int epoch = 0;
  double lv = 0;  // epoch mean of the vertex loss
  double ll = 0;  // epoch mean of the Laplacian loss
  double loss = 0;
  double lr = 0;
  double wall_time = 0;  // seconds since training started
};

struct TrainOutputs {
  /// Receives checkpoint.bin (latest) and metrics.jsonl; empty = no files.
  std::filesystem::path dir;
  /// Called after every epoch.
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Adam over shuffled mini-batches of `data` with the combined loss
/// λv·Lv + λl·Ll. Throws NumericalError (with epoch/batch context) when the
/// loss or any intermediate becomes non-finite.
std::vector<EpochMetrics> train(MeshModel& model, const Dataset& data, const TrainConfig& cfg,
                                const TrainOutputs& out = {});

/// Eval-mode predictions for all samples, B×V×3.
Tensor predict(MeshModel& model, const std::vector<const Tensor*>& images, int batch_size = 16);

struct EvalRow {
  int angle_deg = 0;
  double mean_mm = 0;
  std::size_t n = 0;
};

/// Mean mesh error over `data` at 0° and at each angle, rotating images by
/// exact pixel permutation and ground-truth meshes by R_z. Angles must be
/// multiples of 90°.
std::vector<EvalRow> evaluate(MeshModel& model, const Dataset& data, const std::vector<int>& angles_deg,
                              int batch_size = 16);

}  // namespace eqmesh
