#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "eqmesh/grid.hpp"
#include "eqmesh/groups.hpp"
#include "eqmesh/losses.hpp"
#include "eqmesh/synth.hpp"
#include "eqmesh/train.hpp"

using namespace eqmesh;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(ModelKind kind = ModelKind::Equivariant) {
  ModelConfig c;
  c.image_size = 16;
  c.block_fields = {2, 2};
  c.block_strides = {2, 2};
  c.final_fields = 2;
  c.projection_hidden = 8;
  c.decoder_widths = {16};
  c.mlp_hidden = 16;
  c.baseline = kind;
  c.output_scale = 30.0;
  return c;
}

// Shared tiny dataset (16×16 images, real 954-vertex meshes).
const fs::path& dataset_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("eqmesh_train_data_" + std::to_string(::getpid()));
    fs::remove_all(d);
    DatasetOptions o;
    o.n_train = 4;
    o.n_val = 3;
    o.seed = 11;
    o.image_size = 16;
    build_dataset(d, o);
    return d;
  }();
  return dir;
}

class TrainEnv : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(dataset_dir()); }
};
const auto* const kEnv = ::testing::AddGlobalTestEnvironment(new TrainEnv);

// Returns the stored truth for any exact quarter turn of a known image.
class OracleModel : public MeshModel {
 public:
  OracleModel(const ModelConfig& cfg, const Dataset& data) : MeshModel(cfg), data_(data) {}
  Tensor forward(const Tensor& images, bool) override {
    const std::size_t b = images.dim(0), per = images.numel() / b;
    std::vector<double> out;
    for (std::size_t n = 0; n < b; ++n) {
      const std::vector<double> img(images.data().begin() + static_cast<long>(n * per),
                                    images.data().begin() + static_cast<long>((n + 1) * per));
      bool found = false;
      for (const auto& s : data_.samples)
        for (int k = 0; k < 4 && !found; ++k) {
          const auto r = rot90(s.image, k);
          if (std::equal(img.begin(), img.end(), r.data().begin())) {
            for (const auto& v : rotate_mesh(s.mesh, rotation_z_quarter(k)).vertices)
              out.insert(out.end(), {v.x(), v.y(), v.z()});
            found = true;
          }
        }
      if (!found) throw std::runtime_error("oracle: unknown image");
    }
    return Tensor::from({b, static_cast<std::size_t>(cfg_.vertex_count), 3}, out);
  }

 private:
  const Dataset& data_;
};

std::vector<double> snapshot(const ParamStore& s) {
  std::vector<double> v;
  for (const auto& e : s.entries()) v.insert(v.end(), e.tensor.data().begin(), e.tensor.data().end());
  return v;
}

}  // namespace

TEST(Schedule, StepDecay) {
  TrainConfig cfg;
  EXPECT_EQ(lr_at(cfg, 0), 1e-5);
  EXPECT_EQ(lr_at(cfg, 99), 1e-5);
  EXPECT_EQ(lr_at(cfg, 100), 5e-6);
  EXPECT_EQ(lr_at(cfg, 250), 2.5e-6);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lambda_l = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  auto data = load_split(dataset_dir(), "train");
  data.samples.resize(1);
  auto model = make_model(tiny_model(), 1);
  std::vector<double> trainable_before;
  for (const auto& t : model->params().trainable())
    trainable_before.insert(trainable_before.end(), t.data().begin(), t.data().end());
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.0;
  const auto hist = train(*model, data, cfg);
  ASSERT_EQ(hist.size(), 1u);
  EXPECT_GT(hist[0].lv, 0.0);
  std::vector<double> after;
  for (const auto& t : model->params().trainable()) after.insert(after.end(), t.data().begin(), t.data().end());
  EXPECT_EQ(after, trainable_before);
}

TEST(Train, WritesMetricsAndLoadableCheckpoint) {
  const auto data = load_split(dataset_dir(), "train");
  const fs::path out = fs::temp_directory_path() / ("eqmesh_train_out_" + std::to_string(::getpid()));
  fs::remove_all(out);
  auto model = make_model(tiny_model(), 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e-3;
  cfg.batch_size = 2;
  cfg.checkpoint_every = 2;
  int callbacks = 0;
  train(*model, data, cfg, {out, [&](const EpochMetrics&) { ++callbacks; }});
  EXPECT_EQ(callbacks, 3);

  std::ifstream log(out / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"epoch", "lv", "ll", "lr", "wall_time"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["epoch"].get<int>(), lines++);
  }
  EXPECT_EQ(lines, 3);

  auto reloaded = make_model(tiny_model(), 99);
  load_checkpoint(reloaded->params(), out / "checkpoint.bin");
  EXPECT_EQ(snapshot(reloaded->params()), snapshot(model->params()));
  fs::remove_all(out);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto data = load_split(dataset_dir(), "train");
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 1e-3;
  cfg.batch_size = 3;
  auto a = make_model(tiny_model(), 3), b = make_model(tiny_model(), 3);
  const auto ha = train(*a, data, cfg), hb = train(*b, data, cfg);
  EXPECT_EQ(ha.back().loss, hb.back().loss);
  EXPECT_EQ(snapshot(a->params()), snapshot(b->params()));
}

TEST(Train, RejectsMismatchedData) {
  const auto data = load_split(dataset_dir(), "train");
  auto cfg = tiny_model();
  cfg.image_size = 32;
  cfg.block_strides = {2, 2};
  auto model = make_model(cfg, 4);
  EXPECT_THROW(train(*model, data, TrainConfig{}), std::invalid_argument);
}

TEST(Train, DivergenceIsANumericalError) {
  const auto data = load_split(dataset_dir(), "train");
  auto model = make_model(tiny_model(ModelKind::PlainMlp), 5);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 1e150;
  EXPECT_THROW(train(*model, data, cfg), NumericalError);
}

TEST(Evaluate, OracleIsZeroAtEveryAngle) {
  const auto val = load_split(dataset_dir(), "val");
  OracleModel oracle(tiny_model(), val);
  const auto rows = evaluate(oracle, val, {90, 180, 270}, 2);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].angle_deg, 0);
  for (const auto& r : rows) {
    EXPECT_EQ(r.mean_mm, 0.0);
    EXPECT_EQ(r.n, 3u);
  }
  EXPECT_THROW(evaluate(oracle, val, {45}, 2), std::invalid_argument);
}

TEST(Evaluate, EquivariantModelRotatedEqualsFixed) {
  const auto val = load_split(dataset_dir(), "val");
  auto model = make_model(tiny_model(), 6);
  const auto rows = evaluate(*model, val, {90, 180, 270}, 2);
  for (const auto& r : rows) EXPECT_NEAR(r.mean_mm, rows[0].mean_mm, 1e-5 * rows[0].mean_mm);
}

TEST(Predict, MatchesForwardAndIsDeterministic) {
  const auto val = load_split(dataset_dir(), "val");
  auto model = make_model(tiny_model(), 7);
  std::vector<const Tensor*> imgs;
  for (const auto& s : val.samples) imgs.push_back(&s.image);
  const auto a = predict(*model, imgs, 2), b = predict(*model, imgs, 3);
  EXPECT_EQ(a.shape(), (Shape{3, 954, 3}));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
  const auto again = predict(*model, imgs, 2);
  EXPECT_EQ(std::vector<double>(a.data().begin(), a.data().end()),
            std::vector<double>(again.data().begin(), again.data().end()));
}
