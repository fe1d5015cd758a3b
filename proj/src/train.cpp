#include "eqmesh/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "eqmesh/grid.hpp"
#include "eqmesh/groups.hpp"
#include "eqmesh/image.hpp"
#include "eqmesh/losses.hpp"
#include "eqmesh/ops.hpp"
#include "eqmesh/optim.hpp"

namespace eqmesh {

void TrainConfig::validate() const {
  auto bad = [](const std::string& why) { throw std::invalid_argument("train config: " + why); };
  if (!(lambda_v >= 0) || !(lambda_l >= 0)) bad("lambda_v and lambda_l must be >= 0");
  if (!(lr >= 0) || !std::isfinite(lr)) bad("lr must be finite and >= 0");
  if (!(lr_decay > 0)) bad("lr_decay must be > 0");
  if (lr_decay_every < 1) bad("lr_decay_every must be >= 1");
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (checkpoint_every < 0) bad("checkpoint_every must be >= 0");
  if (!(grad_clip >= 0)) bad("grad_clip must be >= 0");
}

double lr_at(const TrainConfig& cfg, int epoch) {
  return cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

namespace {

void check_images(const MeshModel& model, const Dataset& data) {
  const auto size = static_cast<std::size_t>(model.config().image_size);
  for (const auto& s : data.samples)
    if (s.image.shape() != Shape{3, size, size})
      throw std::invalid_argument("sample " + s.id + " has image shape " + shape_str(s.image.shape()) +
                                  ", model expects 3×" + std::to_string(size) + "×" + std::to_string(size));
  if (data.topology->vertex_count() != model.config().vertex_count)
    throw std::invalid_argument("dataset topology has " + std::to_string(data.topology->vertex_count()) +
                                " vertices, model outputs " + std::to_string(model.config().vertex_count));
}

}  // namespace

std::vector<EpochMetrics> train(MeshModel& model, const Dataset& data, const TrainConfig& cfg,
                                const TrainOutputs& out) {
  cfg.validate();
  if (data.samples.empty()) throw std::invalid_argument("training set is empty");
  check_images(model, data);

  const SparseMap lap = laplacian_operator(data.topology->neighbors());
  Adam opt(model.params().trainable());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::ofstream metrics_log;
  if (!out.dir.empty()) {
    std::filesystem::create_directories(out.dir);
    metrics_log.open(out.dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics_log) throw std::runtime_error("cannot write " + (out.dir / "metrics.jsonl").string());
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<EpochMetrics> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at(cfg, epoch);
    double sum_v = 0, sum_l = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Tensor*> imgs;
      std::vector<const Mesh*> meshes;
      for (std::size_t k = start; k < end; ++k) {
        imgs.push_back(&data.samples[order[k]].image);
        meshes.push_back(&data.samples[order[k]].mesh);
      }
      try {
        model.params().zero_grad();
        const auto pred = model.forward(stack_images(imgs), true);
        const auto terms = total_loss(pred, stack_meshes(meshes), lap, cfg.lambda_v, cfg.lambda_l);
        backward(terms.total);
        if (cfg.grad_clip > 0) clip_grad_norm(model.params().trainable(), cfg.grad_clip);
        opt.step(lr);
        const double nb = static_cast<double>(end - start);
        sum_v += terms.vertex * nb;
        sum_l += terms.laplacian * nb;
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch starting at " + std::to_string(start) +
                             ": " + e.what());
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lv = sum_v / static_cast<double>(order.size());
    m.ll = sum_l / static_cast<double>(order.size());
    m.loss = cfg.lambda_v * m.lv + cfg.lambda_l * m.ll;
    m.lr = lr;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(m.loss)) throw NumericalError("non-finite epoch loss at epoch " + std::to_string(epoch));
    history.push_back(m);

    if (metrics_log.is_open()) {
      const nlohmann::json j = {{"epoch", m.epoch}, {"lv", m.lv}, {"ll", m.ll}, {"loss", m.loss},
                                {"lr", m.lr},       {"wall_time", m.wall_time}};
      metrics_log << j.dump() << '\n' << std::flush;
    }
    if (!out.dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(model.params(), out.dir / "checkpoint.bin");
    if (out.on_epoch) out.on_epoch(m);
  }
  if (!out.dir.empty()) save_checkpoint(model.params(), out.dir / "checkpoint.bin");
  return history;
}

Tensor predict(MeshModel& model, const std::vector<const Tensor*>& images, int batch_size) {
  if (images.empty()) throw std::invalid_argument("predict: no images");
  NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Tensor*> chunk(images.begin() + static_cast<long>(start), images.begin() + static_cast<long>(end));
    parts.push_back(model.forward(stack_images(chunk), false));
  }
  return parts.size() == 1 ? parts.front() : concat(parts, 0);
}

std::vector<EvalRow> evaluate(MeshModel& model, const Dataset& data, const std::vector<int>& angles_deg,
                              int batch_size) {
  if (data.samples.empty()) throw std::invalid_argument("evaluation set is empty");
  check_images(model, data);
  std::vector<int> angles{0};
  for (int a : angles_deg) {
    if (a % 90 != 0) throw std::invalid_argument("evaluation angles must be multiples of 90 degrees");
    angles.push_back(a);
  }
  std::vector<EvalRow> rows;
  for (int a : angles) {
    const int q = ((a / 90) % 4 + 4) % 4;
    std::vector<Tensor> rotated;
    rotated.reserve(data.size());
    for (const auto& s : data.samples) rotated.push_back(rot90(s.image, q));
    std::vector<const Tensor*> ptrs;
    for (const auto& t : rotated) ptrs.push_back(&t);
    const auto pred = predict(model, ptrs, batch_size);
    const Eigen::Matrix3d r = rotation_z_quarter(q);
    double total = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
      total += mesh_error(unstack_mesh(pred, i, data.topology), rotate_mesh(data.samples[i].mesh, r));
    rows.push_back({a, total / static_cast<double>(data.size()), data.size()});
  }
  return rows;
}

}  // namespace eqmesh
