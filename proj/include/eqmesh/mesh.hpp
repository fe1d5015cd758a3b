#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqmesh {

using Face = std::array<int, 3>;

/// Fixed vertex order + triangle list shared by every mesh of a dataset.
class MeshTopology {
 public:
  /// Validates indices, derives sorted neighbour sets from the face edges,
  /// and rejects isolated vertices.
  MeshTopology(int vertex_count, std::vector<Face> faces);

  int vertex_count() const { return vertex_count_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  std::size_t edge_count() const;

  bool operator==(const MeshTopology& o) const {
    return vertex_count_ == o.vertex_count_ && faces_ == o.faces_;
  }

 private:
  int vertex_count_;
  std::vector<Face> faces_;
  std::vector<std::vector<int>> neighbors_;
};

/// Latitude/longitude sphere: two poles plus `rings`−1 rings of `segments`
/// vertices; vertex 0 is the north pole (+z), the last is the south pole.
/// (28, 35) gives 954 vertices.
MeshTopology build_uv_sphere_topology(int segments = 28, int rings = 35);

/// Unit directions of the UV-sphere vertices, same order as the topology.
std::vector<Eigen::Vector3d> uv_sphere_directions(int segments = 28, int rings = 35);

struct Mesh {
  std::shared_ptr<const MeshTopology> topology;
  std::vector<Eigen::Vector3d> vertices;  // mm

  int size() const { return static_cast<int>(vertices.size()); }
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean Euclidean distance between corresponding vertices (mm).
double mesh_error(const Mesh& pred, const Mesh& truth);

Mesh rotate_mesh(const Mesh& mesh, const Eigen::Matrix3d& rotation);

/// "v x y z" lines (17 significant digits), then "f i j k" (1-based).
void write_obj(const Mesh& mesh, const std::filesystem::path& path);
std::string obj_string(const Mesh& mesh);

struct ObjData {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Face> faces;  // 0-based
};

/// Reads the v/f subset. '#' comments, blank lines, LF or CRLF accepted.
/// Throws MeshError naming the line on malformed input.
ObjData parse_obj(const std::string& text);
ObjData read_obj_file(const std::filesystem::path& path);

/// Reads an OBJ and attaches `topology`, checking faces agree.
Mesh read_obj(const std::filesystem::path& path, std::shared_ptr<const MeshTopology> topology);
/// Reads an OBJ and builds its topology from its own faces.
Mesh read_obj(const std::filesystem::path& path);

}  // namespace eqmesh
