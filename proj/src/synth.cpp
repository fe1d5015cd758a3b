#include "eqmesh/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "eqmesh/groups.hpp"

namespace eqmesh {

namespace fs = std::filesystem;

double radial_factor(const SceneSpec& spec, const Eigen::Vector3d& d) {
  const double x = d.x(), y = d.y(), z = d.z();
  const std::array<double, 8> y_k{x, y, z, x * y, y * z, x * z, x * x - y * y, 3 * z * z - 1};
  double r = 1.0;
  for (std::size_t k = 0; k < 8; ++k) r += spec.harmonics[k] * y_k[k];
  for (const auto& p : spec.protrusions) {
    const double w2 = p.width * p.width;
    r += p.length * std::exp(-(1.0 - d.dot(p.axis)) / (0.5 * w2));
  }
  return r;
}

Mesh generate_mesh(const SceneSpec& spec, std::shared_ptr<const MeshTopology> topology) {
  if (!topology) throw std::invalid_argument("generate_mesh: no topology");
  if (!(spec.radius_mm > 0) || !std::isfinite(spec.radius_mm))
    throw std::invalid_argument("scene radius must be positive");
  if (spec.protrusions.size() > 5) throw std::invalid_argument("at most 5 protrusions are supported");
  for (const auto& p : spec.protrusions)
    if (!(p.width > 0) || std::abs(p.axis.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("protrusion needs a unit axis and positive width");
  const Eigen::Matrix3d& o = spec.orientation;
  if ((o.transpose() * o - Eigen::Matrix3d::Identity()).norm() > 1e-9 || o.determinant() < 0)
    throw std::invalid_argument("scene orientation is not a rotation");

  // The UV-sphere directions are only meaningful for the UV-sphere topology;
  // recover segments/rings from the pole fan size.
  const int segments = static_cast<int>(topology->neighbors().front().size());
  const int rings = (topology->vertex_count() - 2) / segments + 1;
  if (segments * (rings - 1) + 2 != topology->vertex_count())
    throw std::invalid_argument("generate_mesh needs a UV-sphere topology");
  const auto dirs = uv_sphere_directions(segments, rings);

  Mesh m{std::move(topology), {}};
  m.vertices.reserve(dirs.size());
  for (const auto& d : dirs) {
    const double r = radial_factor(spec, d);
    if (!(r > 0)) throw std::invalid_argument("radial function is not positive; scene rejected");
    m.vertices.push_back(o * (spec.radius_mm * r * d));
  }
  return m;
}

SceneSpec random_scene(std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  auto uni = [&rng](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto deg = [](double d) { return d * std::numbers::pi / 180.0; };

  SceneSpec s;
  s.seed = sample_seed;
  s.radius_mm = uni(27.0, 33.0);
  for (std::size_t k = 0; k < 7; ++k) s.harmonics[k] = uni(-0.05, 0.05);
  s.harmonics[7] = uni(-0.15, -0.09);  // flatten along z like a palm

  const double finger_angles[4] = {-33.0, -11.0, 11.0, 33.0};
  for (double a : finger_angles) {
    const double t = deg(a + uni(-5.0, 5.0));
    const double tilt = deg(uni(-10.0, 10.0));
    Protrusion p;
    p.axis = Eigen::Vector3d(std::sin(t) * std::cos(tilt), std::cos(t) * std::cos(tilt), std::sin(tilt));
    p.length = uni(0.2, 0.5);
    p.width = uni(0.34, 0.4);
    s.protrusions.push_back(p);
  }
  Protrusion thumb;
  const double t = deg(uni(65.0, 85.0));
  thumb.axis = Eigen::Vector3d(std::sin(t), std::cos(t), 0.0);
  thumb.length = uni(0.25, 0.5);
  thumb.width = uni(0.38, 0.44);
  s.protrusions.push_back(thumb);

  const double az = deg(uni(-8.0, 8.0)), ax = deg(uni(-8.0, 8.0)), ay = deg(uni(-8.0, 8.0));
  s.orientation = (Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()) *
                   Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()))
                      .toRotationMatrix();
  return s;
}

// ---------------------------------------------------------------- render

namespace {

// Twice the signed area of (a, b, p); positive when counter-clockwise.
double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

constexpr std::uint8_t kBackground = 128;
constexpr double kAmbient = 0.15;
constexpr double kDiffuse = 0.85;
constexpr double kAlbedo[3] = {0.92, 0.72, 0.60};

}  // namespace

Image8 render(const Mesh& mesh, const Eigen::Vector3d& light, int size, const Camera& camera) {
  if (size < 1) throw std::invalid_argument("render: image size must be positive");
  const auto n = static_cast<std::size_t>(size);
  Image8 img{size, size, std::vector<std::uint8_t>(n * n * 3, kBackground)};
  if (!mesh.topology || mesh.vertices.empty()) return img;
  const Eigen::Vector3d l = light.normalized();

  const double s = 2.0 * camera.half_extent_mm / size;
  const double c = (size - 1) / 2.0;
  std::vector<double> zbuf(n * n, -std::numeric_limits<double>::infinity());

  for (const auto& f : mesh.topology->faces()) {
    const Eigen::Vector3d& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Eigen::Vector3d& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Eigen::Vector3d& cc = mesh.vertices[static_cast<std::size_t>(f[2])];
    if (a.z() >= camera.camera_z || b.z() >= camera.camera_z || cc.z() >= camera.camera_z) continue;
    double area = edge(a.x(), a.y(), b.x(), b.y(), cc.x(), cc.y());
    if (area == 0.0) continue;
    const double sign = area > 0 ? 1.0 : -1.0;
    area *= sign;

    const Eigen::Vector3d normal = (b - a).cross(cc - a);
    // Summed as (x² + y²) + z² so that quarter turns about z, which swap
    // and negate x and y, leave the shading bit-identical.
    const double nn = std::sqrt((normal.x() * normal.x() + normal.y() * normal.y()) + normal.z() * normal.z());
    const double lambert = nn > 0 ? std::max(0.0, (normal.x() * l.x() + normal.y() * l.y() + normal.z() * l.z()) / nn) : 0.0;
    const double shade = kAmbient + kDiffuse * lambert;
    std::array<std::uint8_t, 3> rgb{};
    for (std::size_t k = 0; k < 3; ++k)
      rgb[k] = static_cast<std::uint8_t>(std::lround(std::clamp(kAlbedo[k] * shade, 0.0, 1.0) * 255.0));

    const double xmin = std::min({a.x(), b.x(), cc.x()}), xmax = std::max({a.x(), b.x(), cc.x()});
    const double ymin = std::min({a.y(), b.y(), cc.y()}), ymax = std::max({a.y(), b.y(), cc.y()});
    const long j0 = std::max(0L, static_cast<long>(std::floor(xmin / s + c)) - 1);
    const long j1 = std::min(static_cast<long>(size) - 1, static_cast<long>(std::ceil(xmax / s + c)) + 1);
    const long i0 = std::max(0L, static_cast<long>(std::floor(c - ymax / s)) - 1);
    const long i1 = std::min(static_cast<long>(size) - 1, static_cast<long>(std::ceil(c - ymin / s)) + 1);
    for (long i = i0; i <= i1; ++i) {
      const double py = (c - static_cast<double>(i)) * s;
      for (long j = j0; j <= j1; ++j) {
        const double px = (static_cast<double>(j) - c) * s;
        const double w0 = sign * edge(b.x(), b.y(), cc.x(), cc.y(), px, py);
        const double w1 = sign * edge(cc.x(), cc.y(), a.x(), a.y(), px, py);
        const double w2 = sign * edge(a.x(), a.y(), b.x(), b.y(), px, py);
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double z = (w0 * a.z() + w1 * b.z() + w2 * cc.z()) / area;
        const std::size_t idx = static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j);
        if (!(z > zbuf[idx])) continue;
        zbuf[idx] = z;
        for (std::size_t k = 0; k < 3; ++k) img.rgb[idx * 3 + k] = rgb[k];
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------- datasets

std::uint64_t train_sample_seed(std::uint64_t seed, int index) {
  return seed * 1'000'000ULL + static_cast<std::uint64_t>(index);
}

std::uint64_t val_sample_seed(std::uint64_t seed, int index) {
  return seed * 1'000'000ULL + 500'000ULL + static_cast<std::uint64_t>(index);
}

std::string rotated_split_name(int angle_deg) {
  std::ostringstream os;
  os << "val_rot" << std::setw(3) << std::setfill('0') << angle_deg;
  return os.str();
}

namespace {

std::string sample_name(int index) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os.flush()) throw std::runtime_error("failed writing " + path.string());
}

int quarter_turns(int angle_deg) {
  if (angle_deg % 90 != 0)
    throw std::invalid_argument("rotated validation angles must be multiples of 90 degrees, got " +
                                std::to_string(angle_deg));
  return ((angle_deg / 90) % 4 + 4) % 4;
}

std::vector<std::string> sample_ids(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("missing split directory " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".obj") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::shared_ptr<const MeshTopology> load_topology(const fs::path& root) {
  const auto data = read_obj_file(root / "topology.obj");
  return std::make_shared<MeshTopology>(static_cast<int>(data.vertices.size()), data.faces);
}

}  // namespace

void make_rotated_validation(const fs::path& dataset, const std::vector<int>& angles_deg) {
  for (int a : angles_deg) quarter_turns(a);
  const auto topo = load_topology(dataset);
  const auto ids = sample_ids(dataset / "val");
  for (int a : angles_deg) {
    const int q = quarter_turns(a);
    const fs::path final_dir = dataset / rotated_split_name(a);
    const fs::path tmp = dataset / (rotated_split_name(a) + ".partial");
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    try {
      const Eigen::Matrix3d r = rotation_z_quarter(q);
      for (const auto& id : ids) {
        const auto mesh = read_obj(dataset / "val" / (id + ".obj"), topo);
        write_obj(rotate_mesh(mesh, r), tmp / (id + ".obj"));
        write_png(rotate_image_quarter(read_png(dataset / "val" / (id + ".png")), q), tmp / (id + ".png"));
      }
    } catch (...) {
      fs::remove_all(tmp);
      throw;
    }
    fs::remove_all(final_dir);
    fs::rename(tmp, final_dir);
  }
}

void build_dataset(const fs::path& out, const DatasetOptions& opts) {
  if (opts.n_train < 1 || opts.n_val < 1) throw std::invalid_argument("dataset splits must be nonempty");
  if (opts.n_train >= 500000 || opts.n_val >= 500000) throw std::invalid_argument("split too large");
  if (opts.image_size < 8) throw std::invalid_argument("image size must be at least 8");
  if (fs::exists(out)) throw std::invalid_argument("output directory already exists: " + out.string());

  fs::path staging = out;
  staging += ".partial";
  fs::remove_all(staging);
  fs::create_directories(staging / "train");
  fs::create_directories(staging / "val");
  try {
    if (!opts.config_json.empty()) write_text(staging / "config.json", opts.config_json);
    const auto topo = std::make_shared<const MeshTopology>(build_uv_sphere_topology());
    write_obj(Mesh{topo, uv_sphere_directions()}, staging / "topology.obj");
    auto emit = [&](const std::string& split, int count, auto seed_of) {
      for (int i = 0; i < count; ++i) {
        const auto spec = random_scene(seed_of(opts.seed, i));
        const auto mesh = generate_mesh(spec, topo);
        write_obj(mesh, staging / split / (sample_name(i) + ".obj"));
        write_png(render(mesh, spec.light, opts.image_size), staging / split / (sample_name(i) + ".png"));
      }
    };
    emit("train", opts.n_train, train_sample_seed);
    emit("val", opts.n_val, val_sample_seed);
    make_rotated_validation(staging, opts.rotations);

    nlohmann::json manifest = {
        {"generator", "eqmesh-synth"},
        {"generator_version", kGeneratorVersion},
        {"seed", opts.seed},
        {"image_size", opts.image_size},
        {"n_train", opts.n_train},
        {"n_val", opts.n_val},
        {"rotations", opts.rotations},
        {"train_seed_base", train_sample_seed(opts.seed, 0)},
        {"val_seed_base", val_sample_seed(opts.seed, 0)},
        {"topology", {{"kind", "uv_sphere"}, {"segments", 28}, {"rings", 35}, {"vertices", topo->vertex_count()}}},
        {"camera", {{"half_extent_mm", Camera{}.half_extent_mm}, {"camera_z", Camera{}.camera_z}}},
    };
    write_text(staging / "manifest.json", manifest.dump(2) + "\n");
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
  fs::rename(staging, out);
}

Dataset load_split(const fs::path& root, const std::string& split) {
  Dataset ds;
  ds.topology = load_topology(root);
  for (const auto& id : sample_ids(root / split)) {
    const auto img = read_png(root / split / (id + ".png"));
    ds.samples.push_back({id, image_to_tensor(img), read_obj(root / split / (id + ".obj"), ds.topology)});
  }
  if (ds.samples.empty()) throw std::runtime_error("split " + (root / split).string() + " has no samples");
  return ds;
}

}  // namespace eqmesh
