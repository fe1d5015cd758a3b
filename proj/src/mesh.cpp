#include "eqmesh/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace eqmesh {

MeshTopology::MeshTopology(int vertex_count, std::vector<Face> faces)
    : vertex_count_(vertex_count), faces_(std::move(faces)) {
  if (vertex_count < 1) throw MeshError("topology needs at least one vertex");
  std::vector<std::set<int>> nb(static_cast<std::size_t>(vertex_count));
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    for (int v : faces_[f])
      if (v < 0 || v >= vertex_count)
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(v) + " out of range");
    for (int a = 0; a < 3; ++a) {
      const int u = faces_[f][static_cast<std::size_t>(a)], w = faces_[f][static_cast<std::size_t>((a + 1) % 3)];
      if (u == w) throw MeshError("degenerate face " + std::to_string(f));
      nb[static_cast<std::size_t>(u)].insert(w);
      nb[static_cast<std::size_t>(w)].insert(u);
    }
  }
  neighbors_.reserve(nb.size());
  for (std::size_t v = 0; v < nb.size(); ++v) {
    if (nb[v].empty()) throw MeshError("vertex " + std::to_string(v) + " has no neighbours");
    neighbors_.emplace_back(nb[v].begin(), nb[v].end());
  }
}

std::size_t MeshTopology::edge_count() const {
  std::size_t twice = 0;
  for (const auto& n : neighbors_) twice += n.size();
  return twice / 2;
}

MeshTopology build_uv_sphere_topology(int segments, int rings) {
  if (segments < 3 || rings < 3) throw MeshError("uv sphere needs segments >= 3 and rings >= 3");
  const int ring_count = rings - 1;
  const int n = segments * ring_count + 2;
  const int south = n - 1;
  auto at = [segments](int ring, int seg) { return 1 + ring * segments + (seg % segments); };
  std::vector<Face> faces;
  for (int s = 0; s < segments; ++s) faces.push_back({0, at(0, s), at(0, s + 1)});
  for (int r = 0; r + 1 < ring_count; ++r)
    for (int s = 0; s < segments; ++s) {
      const int a = at(r, s), b = at(r, s + 1), c = at(r + 1, s + 1), d = at(r + 1, s);
      faces.push_back({a, c, b});
      faces.push_back({a, d, c});
    }
  for (int s = 0; s < segments; ++s) faces.push_back({south, at(ring_count - 1, s + 1), at(ring_count - 1, s)});
  return MeshTopology(n, std::move(faces));
}

std::vector<Eigen::Vector3d> uv_sphere_directions(int segments, int rings) {
  std::vector<Eigen::Vector3d> d;
  d.emplace_back(0, 0, 1);
  for (int r = 1; r < rings; ++r) {
    const double theta = std::numbers::pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2 * std::numbers::pi * s / segments;
      d.emplace_back(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
    }
  }
  d.emplace_back(0, 0, -1);
  return d;
}

double mesh_error(const Mesh& pred, const Mesh& truth) {
  if (pred.vertices.size() != truth.vertices.size() ||
      (pred.topology && truth.topology && !(*pred.topology == *truth.topology)))
    throw MeshError("mesh_error: meshes do not share a topology");
  if (pred.vertices.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.vertices.size(); ++i) s += (pred.vertices[i] - truth.vertices[i]).norm();
  return s / static_cast<double>(pred.vertices.size());
}

Mesh rotate_mesh(const Mesh& mesh, const Eigen::Matrix3d& rotation) {
  Mesh out{mesh.topology, {}};
  out.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) out.vertices.push_back(rotation * v);
  return out;
}

// ---------------------------------------------------------------- OBJ

std::string obj_string(const Mesh& mesh) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices) {
    if (!v.allFinite()) throw MeshError("cannot write non-finite vertex");
    os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  if (mesh.topology)
    for (const auto& f : mesh.topology->faces()) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  return os.str();
}

void write_obj(const Mesh& mesh, const std::filesystem::path& path) {
  const auto text = obj_string(mesh);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MeshError("cannot write " + path.string());
  os << text;
  if (!os.flush()) throw MeshError("failed writing " + path.string());
}

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_num(std::string_view tok, T& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

}  // namespace

ObjData parse_obj(const std::string& text) {
  ObjData data;
  std::size_t pos = 0;
  int line_no = 0;
  std::vector<std::pair<int, std::array<long, 3>>> raw_faces;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    auto bad = [&](const std::string& why) {
      return MeshError("OBJ line " + std::to_string(line_no) + ": " + why);
    };
    if (tok[0] == "v") {
      if (tok.size() != 4) throw bad("vertex needs 3 coordinates");
      Eigen::Vector3d v;
      for (int k = 0; k < 3; ++k)
        if (!parse_num(tok[static_cast<std::size_t>(k + 1)], v[k]) || !std::isfinite(v[k]))
          throw bad("invalid coordinate '" + std::string(tok[static_cast<std::size_t>(k + 1)]) + "'");
      data.vertices.push_back(v);
    } else if (tok[0] == "f") {
      if (tok.size() != 4) throw bad("only triangular faces are supported");
      std::array<long, 3> idx{};
      for (int k = 0; k < 3; ++k) {
        auto t = tok[static_cast<std::size_t>(k + 1)];
        t = t.substr(0, t.find('/'));
        if (!parse_num(t, idx[static_cast<std::size_t>(k)])) throw bad("invalid face index '" + std::string(t) + "'");
        if (idx[static_cast<std::size_t>(k)] < 1) throw bad("face index must be >= 1 (OBJ is 1-based)");
      }
      raw_faces.emplace_back(line_no, idx);
    } else {
      throw bad("unsupported record '" + std::string(tok[0]) + "'");
    }
  }
  for (const auto& [ln, idx] : raw_faces) {
    Face f{};
    for (std::size_t k = 0; k < 3; ++k) {
      if (idx[k] > static_cast<long>(data.vertices.size()))
        throw MeshError("OBJ line " + std::to_string(ln) + ": face index " + std::to_string(idx[k]) +
                        " out of range");
      f[k] = static_cast<int>(idx[k] - 1);
    }
    data.faces.push_back(f);
  }
  return data;
}

ObjData read_obj_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MeshError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return parse_obj(ss.str());
  } catch (const MeshError& e) {
    throw MeshError(path.string() + ": " + e.what());
  }
}

Mesh read_obj(const std::filesystem::path& path, std::shared_ptr<const MeshTopology> topology) {
  auto data = read_obj_file(path);
  if (topology) {
    if (static_cast<int>(data.vertices.size()) != topology->vertex_count())
      throw MeshError(path.string() + ": vertex count does not match topology");
    if (!data.faces.empty() && data.faces != topology->faces())
      throw MeshError(path.string() + ": face list differs from shared topology");
  }
  return {std::move(topology), std::move(data.vertices)};
}

Mesh read_obj(const std::filesystem::path& path) {
  auto data = read_obj_file(path);
  auto topo = std::make_shared<MeshTopology>(static_cast<int>(data.vertices.size()), data.faces);
  return {std::move(topo), std::move(data.vertices)};
}

}  // namespace eqmesh
