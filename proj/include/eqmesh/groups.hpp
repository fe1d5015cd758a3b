#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "eqmesh/tensor.hpp"

namespace eqmesh {

enum class Group { C8, SO2, SO3 };

const char* group_name(Group g);

/// An element of C8 (index mod 8), SO(2) (angle) or SO(3) (rotation matrix).
class GroupElement {
 public:
  static GroupElement c8(int index);
  static GroupElement so2(double angle);
  static GroupElement so3(const Eigen::Matrix3d& rotation);
  static GroupElement so3_axis_angle(const Eigen::Vector3d& axis, double angle);
  static GroupElement identity(Group g);

  Group group() const { return group_; }
  int index() const { return index_; }
  double angle() const { return angle_; }
  const Eigen::Matrix3d& rotation() const { return rot_; }

  GroupElement operator*(const GroupElement& other) const;
  GroupElement inverse() const;

 private:
  Group group_ = Group::C8;
  int index_ = 0;
  double angle_ = 0.0;
  Eigen::Matrix3d rot_ = Eigen::Matrix3d::Identity();
};

/// Irreducible (or regular) building blocks. `Trivial` exists for every group
/// (ρ0 for SO(2), V0 for SO(3)).
enum class Irrep { Trivial, RegularC8, Rho1, V1 };

/// Direct sum of building blocks with multiplicities over one group.
class Representation {
 public:
  struct Component {
    Irrep kind;
    int multiplicity;
  };

  Representation(Group g, std::vector<Component> components);

  static Representation regular_c8(int multiplicity = 1);
  static Representation trivial(Group g, int multiplicity = 1);
  static Representation rho0_so2(int multiplicity = 1) { return trivial(Group::SO2, multiplicity); }
  static Representation rho1_so2(int multiplicity = 1);
  static Representation v1_so3(int multiplicity = 1);

  Group group() const { return group_; }
  const std::vector<Component>& components() const { return components_; }
  int dim() const { return dim_; }

  Representation direct_sum(const Representation& other) const;

 private:
  Group group_;
  std::vector<Component> components_;
  int dim_ = 0;
};

int irrep_dim(Irrep kind);

/// Block-diagonal matrix of `rep` at `g`. Throws std::invalid_argument if `g`
/// belongs to another group.
Eigen::MatrixXd rep_matrix(const Representation& rep, const GroupElement& g);

/// Orthonormal (Frobenius) basis of {W : ρ_out(g)·W = W·ρ_in(g) ∀g}.
struct EquivariantBasis {
  Representation in;
  Representation out;
  std::vector<Eigen::MatrixXd> basis;  // each out.dim() × in.dim()

  std::size_t size() const { return basis.size(); }
};

/// Samples group elements: all 8 for C8, uniform angles for SO(2),
/// Haar-uniform (normalized Gaussian quaternions) for SO(3).
std::vector<GroupElement> sample_group(Group g, int n, std::mt19937_64& rng);
GroupElement random_element(Group g, std::mt19937_64& rng);

/// Null space of the stacked constraints (ρ_out(g) ⊗ ρ_in(g)^{-T} − I) over
/// sampled g, via SVD; directions with σ ≤ rank_tol·σ_max are kept.
EquivariantBasis solve_equivariant_basis(const Representation& in, const Representation& out,
                                         int n_samples = 32, double rank_tol = 1e-9,
                                         std::uint64_t seed = 0x5eed);

/// Max over `elements` of ‖ρ_out(g)W − Wρ_in(g)‖_F.
double intertwiner_residual(const Eigen::MatrixXd& w, const Representation& in,
                            const Representation& out, const std::vector<GroupElement>& elements);

/// Block weight for multiplicity_out × multiplicity_in copies of the basis'
/// representations: block (i,j) = Σ_k coeffs[i,j,k]·basis[k]. Differentiable
/// in `coeffs` (shape mo×mi×basis_dim; ignored when the basis is empty).
Tensor equivariant_linear(const EquivariantBasis& basis, const Tensor& coeffs, int multiplicity_in,
                          int multiplicity_out);

Eigen::Matrix3d rotation_z(double angle);
/// Exact rotation about z by quarter turns (entries in {-1,0,1}).
Eigen::Matrix3d rotation_z_quarter(int quarter_turns);

}  // namespace eqmesh
