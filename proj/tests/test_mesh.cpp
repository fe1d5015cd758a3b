#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "eqmesh/groups.hpp"
#include "eqmesh/mesh.hpp"

using namespace eqmesh;

namespace {

Mesh sphere_mesh(double radius = 30.0) {
  auto topo = std::make_shared<const MeshTopology>(build_uv_sphere_topology());
  Mesh m{topo, {}};
  for (const auto& d : uv_sphere_directions()) m.vertices.push_back(radius * d);
  return m;
}

}  // namespace

TEST(UvSphere, CountsAndEuler) {
  const auto t = build_uv_sphere_topology();
  EXPECT_EQ(t.vertex_count(), 954);
  const long v = t.vertex_count(), e = static_cast<long>(t.edge_count()), f = static_cast<long>(t.faces().size());
  EXPECT_EQ(v - e + f, 2);
  EXPECT_EQ(uv_sphere_directions().size(), 954u);
}

TEST(UvSphere, NeighbourCounts) {
  // Interior ring vertices have 6 neighbours. The rings next to the poles
  // connect to the pole instead of a full ring, which leaves them with 5.
  const auto t = build_uv_sphere_topology();
  const auto& nb = t.neighbors();
  EXPECT_EQ(nb.front().size(), 28u);
  EXPECT_EQ(nb.back().size(), 28u);
  for (int i = 1; i < 953; ++i) {
    const int ring = (i - 1) / 28;
    const bool pole_adjacent = ring == 0 || ring == 33;
    EXPECT_EQ(nb[static_cast<std::size_t>(i)].size(), pole_adjacent ? 5u : 6u) << "vertex " << i;
  }
}

TEST(UvSphere, NeighboursMatchFaceEdges) {
  const auto t = build_uv_sphere_topology(6, 5);
  std::set<std::pair<int, int>> edges;
  for (const auto& f : t.faces())
    for (int k = 0; k < 3; ++k) {
      edges.insert({f[k], f[(k + 1) % 3]});
      edges.insert({f[(k + 1) % 3], f[k]});
    }
  for (int i = 0; i < t.vertex_count(); ++i)
    for (int j = 0; j < t.vertex_count(); ++j) {
      const auto& n = t.neighbors()[static_cast<std::size_t>(i)];
      EXPECT_EQ(std::binary_search(n.begin(), n.end(), j), edges.count({i, j}) == 1);
    }
}

TEST(UvSphere, RejectsDegenerateParameters) {
  EXPECT_THROW(build_uv_sphere_topology(2, 35), MeshError);
  EXPECT_THROW(build_uv_sphere_topology(28, 2), MeshError);
}

TEST(Topology, RejectsBadFacesAndIsolatedVertices) {
  EXPECT_THROW(MeshTopology(3, {{0, 1, 3}}), MeshError);
  EXPECT_THROW(MeshTopology(4, {{0, 1, 2}}), MeshError);
  EXPECT_THROW(MeshTopology(3, {{0, 1, 1}}), MeshError);
}

TEST(MeshError, Examples) {
  const auto a = sphere_mesh();
  EXPECT_EQ(mesh_error(a, a), 0.0);
  auto b = a;
  for (auto& v : b.vertices) v += Eigen::Vector3d(3, 4, 0);
  EXPECT_NEAR(mesh_error(b, a), 5.0, 1e-12);
  EXPECT_EQ(mesh_error(a, b), mesh_error(b, a));
}

TEST(MeshError, GaussianPerturbationOracle) {
  const auto a = sphere_mesh();
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  const double eps = 0.3;
  auto b = a;
  for (auto& v : b.vertices) v += eps * Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
  const double expected = eps * std::sqrt(2.0) * std::tgamma(2.0) / std::tgamma(1.5);
  EXPECT_NEAR(mesh_error(b, a), expected, 0.05 * expected);
}

TEST(MeshError, RotationInvarianceAndMismatch) {
  const auto a = sphere_mesh();
  auto b = a;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (auto& v : b.vertices) v += Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
  const auto r = random_element(Group::SO3, rng).rotation();
  EXPECT_NEAR(mesh_error(rotate_mesh(a, r), rotate_mesh(b, r)), mesh_error(a, b), 1e-10);
  Mesh other{std::make_shared<const MeshTopology>(build_uv_sphere_topology(6, 5)), {}};
  other.vertices.resize(static_cast<std::size_t>(other.topology->vertex_count()));
  EXPECT_THROW(mesh_error(a, other), MeshError);
}

TEST(RotateMesh, Examples) {
  const auto a = sphere_mesh();
  const auto same = rotate_mesh(a, Eigen::Matrix3d::Identity());
  EXPECT_EQ(same.vertices, a.vertices);
  Mesh unit{std::make_shared<const MeshTopology>(3, std::vector<Face>{{0, 1, 2}}),
            {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  const auto q = rotate_mesh(unit, rotation_z_quarter(1));
  EXPECT_EQ(q.vertices[0], Eigen::Vector3d(0, 1, 0));
  std::mt19937_64 rng(2);
  const auto r = random_element(Group::SO3, rng).rotation();
  const auto back = rotate_mesh(rotate_mesh(a, r), r.transpose());
  for (std::size_t i = 0; i < a.vertices.size(); ++i) EXPECT_LT((back.vertices[i] - a.vertices[i]).norm(), 1e-12);
}

class ObjTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "eqmesh_obj_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(ObjTest, RoundTripIsBitExact) {
  auto a = sphere_mesh(31.7);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (auto& v : a.vertices) v += Eigen::Vector3d(nd(rng), nd(rng), nd(rng)) * 1e-3;
  write_obj(a, dir / "m.obj");
  const auto b = read_obj(dir / "m.obj", a.topology);
  EXPECT_EQ(b.vertices, a.vertices);
  const auto c = read_obj(dir / "m.obj");
  EXPECT_EQ(c.topology->faces(), a.topology->faces());
}

TEST(Obj, UnitTriangleWithCommentsAndCrlf) {
  const auto d = parse_obj("# tri\r\nv 0 0 0\r\nv 1 0 0\r\n\r\nv 0 1 0\r\nf 1 2 3\r\n");
  EXPECT_EQ(d.vertices.size(), 3u);
  ASSERT_EQ(d.faces.size(), 1u);
  EXPECT_EQ(d.faces[0], (Face{0, 1, 2}));
}

TEST(Obj, MalformedInputNamesLine) {
  try {
    parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
    FAIL() << "index 0 accepted";
  } catch (const MeshError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_obj("v 0 0\n"), MeshError);
  EXPECT_THROW(parse_obj("v 0 0 0\nf 1 2 3\n"), MeshError);
  EXPECT_THROW(parse_obj("v 0 0 zero\n"), MeshError);
}
