#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include <unistd.h>

#include "eqmesh/groups.hpp"
#include "eqmesh/image.hpp"
#include "eqmesh/synth.hpp"

using namespace eqmesh;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const MeshTopology> topology() {
  static const auto t = std::make_shared<const MeshTopology>(build_uv_sphere_topology());
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int max_pixel_diff(const Image8& a, const Image8& b) {
  int m = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) m = std::max(m, std::abs(int(a.rgb[i]) - int(b.rgb[i])));
  return m;
}

class TempDir : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("eqmesh_synth_" + std::to_string(::getpid()));
  void SetUp() override {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
};

DatasetOptions tiny_options() {
  DatasetOptions o;
  o.n_train = 3;
  o.n_val = 2;
  o.seed = 7;
  o.image_size = 32;
  o.rotations = {90, 180, 270};
  return o;
}

}  // namespace

TEST(Generator, ZeroDeformationIsSphere) {
  SceneSpec spec;
  spec.radius_mm = 25.0;
  const auto m = generate_mesh(spec, topology());
  for (const auto& v : m.vertices) EXPECT_NEAR(v.norm(), 25.0, 1e-12);
}

TEST(Generator, SameSeedIsBitIdentical) {
  const auto a = generate_mesh(random_scene(123), topology());
  const auto b = generate_mesh(random_scene(123), topology());
  EXPECT_EQ(a.vertices, b.vertices);
  const auto c = generate_mesh(random_scene(124), topology());
  EXPECT_NE(a.vertices, c.vertices);
}

TEST(Generator, OrientationCommutesWithZRotation) {
  auto spec = random_scene(5);
  const auto base = generate_mesh(spec, topology());
  const Eigen::Matrix3d r = rotation_z(0.83);
  spec.orientation = r * spec.orientation;
  const auto turned = generate_mesh(spec, topology());
  const auto want = rotate_mesh(base, r);
  for (std::size_t i = 0; i < base.vertices.size(); ++i)
    EXPECT_LT((turned.vertices[i] - want.vertices[i]).norm(), 1e-10);
}

TEST(Generator, RandomScenesArePositiveAndInFrame) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto spec = random_scene(s);
    EXPECT_LE(spec.protrusions.size(), 5u);
    const auto m = generate_mesh(spec, topology());
    for (const auto& v : m.vertices) {
      EXPECT_GT(v.norm(), 0.0);
      EXPECT_LT(std::max(std::abs(v.x()), std::abs(v.y())), 70.0);
    }
  }
}

TEST(Generator, NonPositiveRadiusRejected) {
  SceneSpec spec;
  spec.harmonics[2] = -1.5;  // 1 − 1.5·z is negative near the north pole
  EXPECT_THROW(generate_mesh(spec, topology()), std::invalid_argument);
}

TEST(Render, BackgroundWhenNothingVisible) {
  auto m = generate_mesh(SceneSpec{}, topology());
  for (auto& v : m.vertices) v += Eigen::Vector3d(0, 0, 1000);  // behind the camera
  const auto img = render(m, {0, 0, 1}, 16);
  for (auto px : img.rgb) EXPECT_EQ(px, 128);
}

TEST(Render, LambertSpotCheck) {
  const auto img = render(generate_mesh(SceneSpec{}, topology()), {0, 0, 1}, 64);
  // The sphere centre faces the light; its rim does not.
  const int centre = img.at(32, 32, 0), rim = img.at(32, 32 + 13, 0);
  EXPECT_GT(centre, rim);
  EXPECT_NE(img.at(0, 0, 0), centre);
}

TEST(Render, QuarterTurnCommutesWithPixelRotation) {
  for (std::uint64_t s : {1u, 2u, 3u}) {
    const auto m = generate_mesh(random_scene(s), topology());
    const auto img = render(m, {0, 0, 1}, 64);
    for (int k = 1; k < 4; ++k) {
      const auto turned = render(rotate_mesh(m, rotation_z_quarter(k)), {0, 0, 1}, 64);
      EXPECT_LE(max_pixel_diff(turned, rotate_image_quarter(img, k)), 1) << "seed " << s << " k " << k;
    }
  }
}

TEST(Seeds, TrainAndValRangesAreDisjoint) {
  EXPECT_NE(train_sample_seed(1, 0), val_sample_seed(1, 0));
  EXPECT_LT(train_sample_seed(1, 499999), val_sample_seed(1, 0));
  EXPECT_EQ(rotated_split_name(90), "val_rot090");
}

TEST_F(TempDir, DatasetLayoutAndDeterminism) {
  const auto opts = tiny_options();
  build_dataset(dir / "a", opts);
  build_dataset(dir / "b", opts);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a"))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir / "a"));
  // topology + manifest + 3·2 train + 4 splits·2·2 val
  EXPECT_EQ(files.size(), 2u + 6u + 16u);
  for (const auto& f : files) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  EXPECT_TRUE(fs::exists(dir / "a" / "train" / "0000.png"));
  EXPECT_TRUE(fs::exists(dir / "a" / "val" / "0001.obj"));
  EXPECT_FALSE(fs::exists(dir / "a.partial"));
  EXPECT_THROW(build_dataset(dir / "a", opts), std::invalid_argument);
}

TEST_F(TempDir, SamplesShareTopology) {
  build_dataset(dir / "d", tiny_options());
  const auto topo = read_obj_file(dir / "d" / "topology.obj");
  for (const auto* split : {"train", "val"})
    for (const auto& e : fs::directory_iterator(dir / "d" / split))
      if (e.path().extension() == ".obj") {
        EXPECT_EQ(read_obj_file(e.path()).faces, topo.faces);
      }
  const auto data = load_split(dir / "d", "train");
  EXPECT_EQ(data.size(), 3u);
  EXPECT_EQ(data.samples[0].image.shape(), (Shape{3, 32, 32}));
  for (double v : data.samples[0].image.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST_F(TempDir, RotatedValidationSplits) {
  build_dataset(dir / "d", tiny_options());
  const auto val = load_split(dir / "d", "val");
  const auto r90 = load_split(dir / "d", "val_rot090");
  const auto r180 = load_split(dir / "d", "val_rot180");
  for (std::size_t i = 0; i < val.size(); ++i) {
    EXPECT_EQ(tensor_to_image(r90.samples[i].image), rotate_image_quarter(tensor_to_image(val.samples[i].image), 1));
    EXPECT_EQ(mesh_error(r90.samples[i].mesh, rotate_mesh(val.samples[i].mesh, rotation_z_quarter(1))), 0.0);
    // twice 180° is the original
    EXPECT_EQ(rotate_image_quarter(tensor_to_image(r180.samples[i].image), 2), tensor_to_image(val.samples[i].image));
    EXPECT_EQ(rotate_mesh(r180.samples[i].mesh, rotation_z_quarter(2)).vertices, val.samples[i].mesh.vertices);
  }
  EXPECT_THROW(make_rotated_validation(dir / "d", {45}), std::invalid_argument);
}

TEST_F(TempDir, PngRoundTripAndBadInput) {
  Image8 img{5, 4, {}};
  for (int i = 0; i < 60; ++i) img.rgb.push_back(static_cast<std::uint8_t>(i * 4));
  write_png(img, dir / "x.png");
  EXPECT_EQ(read_png(dir / "x.png"), img);
  std::ofstream(dir / "bad.png") << "not a png";
  EXPECT_THROW(read_png(dir / "bad.png"), ImageError);
  EXPECT_THROW(read_png(dir / "missing.png"), ImageError);
}
