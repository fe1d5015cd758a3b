#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "eqmesh/image.hpp"
#include "eqmesh/mesh.hpp"
#include "eqmesh/tensor.hpp"

namespace eqmesh {

/// A smooth bump on the radial function centred on `axis`.
struct Protrusion {
  Eigen::Vector3d axis{0, 1, 0};  // unit
  double length = 0.0;           // relative to the base radius
  double width = 0.3;            // angular half-width, radians
};

/// Procedural shape: a sphere of `radius_mm` whose radius along direction d
/// (in the shape's own frame) is
///
///     radius_mm · (1 + Σ_k harmonics[k]·Y_k(d) + Σ_p length_p·exp(−(1 − d·axis_p)/(width_p²/2)))
///
/// with Y_k the eight real spherical harmonics of degree 1 and 2
/// (x, y, z, xy, yz, xz, x²−y², 3z²−1). The result is then rotated by
/// `orientation`.
struct SceneSpec {
  std::uint64_t seed = 0;
  double radius_mm = 30.0;
  std::array<double, 8> harmonics{};
  std::vector<Protrusion> protrusions;  // at most 5
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d light{0, 0, 1};
};

/// Radial scale factor of `spec` along unit direction `d` (shape frame).
double radial_factor(const SceneSpec& spec, const Eigen::Vector3d& d);

/// Displaces the UV-sphere vertices of `topology` radially. Throws
/// std::invalid_argument if the radial function is not positive everywhere
/// on the vertex set or the spec is otherwise malformed.
Mesh generate_mesh(const SceneSpec& spec, std::shared_ptr<const MeshTopology> topology);

/// Hand-like scene: flattened palm, four fingers fanned around +y and a thumb
/// off to the side, with small random shape and orientation jitter.
SceneSpec random_scene(std::uint64_t sample_seed);

/// Orthographic camera looking down −z from `camera_z`. The image spans
/// [−half_extent_mm, half_extent_mm] in x (right) and y (up).
struct Camera {
  double half_extent_mm = 70.0;
  double camera_z = 500.0;
};

/// Z-buffered, flat-shaded rasterization with Lambert shading on a gray
/// background. Pixel centres are tested inclusively, so a quarter-turn of the
/// mesh about z yields the quarter-turned image.
Image8 render(const Mesh& mesh, const Eigen::Vector3d& light, int size, const Camera& camera = {});

struct DatasetOptions {
  int n_train = 500;
  int n_val = 83;
  std::uint64_t seed = 0;
  int image_size = 256;
  /// Rotated validation splits to add (degrees, multiples of 90).
  std::vector<int> rotations;
  /// Written verbatim as config.json before any sample, if nonempty.
  std::string config_json;
};

inline constexpr int kGeneratorVersion = 1;

/// Seeds of the i-th training / validation sample. The two ranges never
/// overlap for fewer than 500000 samples per split.
std::uint64_t train_sample_seed(std::uint64_t seed, int index);
std::uint64_t val_sample_seed(std::uint64_t seed, int index);

/// Writes topology.obj, train/NNNN.{png,obj}, val/NNNN.{png,obj} and
/// manifest.json under `out`. Output is staged in "<out>.partial" and renamed
/// into place, so a failure leaves no half-written dataset. Throws if `out`
/// already exists.
void build_dataset(const std::filesystem::path& out, const DatasetOptions& opts);

/// Writes val_rotNNN/ next to val/ for each angle, with pixel-permuted images
/// and meshes rotated about z. Angles must be multiples of 90 degrees.
void make_rotated_validation(const std::filesystem::path& dataset, const std::vector<int>& angles_deg);

/// Directory name used for a rotated validation split ("val_rot090").
std::string rotated_split_name(int angle_deg);

struct Sample {
  std::string id;
  Tensor image;  // 3×H×W in [0,1]
  Mesh mesh;
};

struct Dataset {
  std::shared_ptr<const MeshTopology> topology;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

/// Loads `<root>/<split>/NNNN.{png,obj}` sorted by name, attaching the
/// topology from `<root>/topology.obj`.
Dataset load_split(const std::filesystem::path& root, const std::string& split);

}  // namespace eqmesh
