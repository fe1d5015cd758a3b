#include "eqmesh/groups.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace eqmesh {

const char* group_name(Group g) {
  switch (g) {
    case Group::C8: return "C8";
    case Group::SO2: return "SO(2)";
    case Group::SO3: return "SO(3)";
  }
  return "?";
}

// ---------------------------------------------------------------- elements

GroupElement GroupElement::c8(int index) {
  GroupElement g;
  g.group_ = Group::C8;
  g.index_ = ((index % 8) + 8) % 8;
  return g;
}

GroupElement GroupElement::so2(double angle) {
  GroupElement g;
  g.group_ = Group::SO2;
  g.angle_ = angle;
  return g;
}

GroupElement GroupElement::so3(const Eigen::Matrix3d& rotation) {
  if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm() > 1e-10 ||
      std::abs(rotation.determinant() - 1.0) > 1e-10)
    throw std::invalid_argument("matrix is not a rotation");
  GroupElement g;
  g.group_ = Group::SO3;
  g.rot_ = rotation;
  return g;
}

GroupElement GroupElement::so3_axis_angle(const Eigen::Vector3d& axis, double angle) {
  return so3(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
}

GroupElement GroupElement::identity(Group g) {
  switch (g) {
    case Group::C8: return c8(0);
    case Group::SO2: return so2(0.0);
    case Group::SO3: return so3(Eigen::Matrix3d::Identity());
  }
  throw std::invalid_argument("unknown group");
}

GroupElement GroupElement::operator*(const GroupElement& o) const {
  if (group_ != o.group_) throw std::invalid_argument("composing elements of different groups");
  switch (group_) {
    case Group::C8: return c8(index_ + o.index_);
    case Group::SO2: return so2(angle_ + o.angle_);
    case Group::SO3: {
      GroupElement g;
      g.group_ = Group::SO3;
      g.rot_ = rot_ * o.rot_;
      return g;
    }
  }
  throw std::invalid_argument("unknown group");
}

GroupElement GroupElement::inverse() const {
  switch (group_) {
    case Group::C8: return c8(-index_);
    case Group::SO2: return so2(-angle_);
    case Group::SO3: {
      GroupElement g;
      g.group_ = Group::SO3;
      g.rot_ = rot_.transpose();
      return g;
    }
  }
  throw std::invalid_argument("unknown group");
}

// ---------------------------------------------------------------- representations

int irrep_dim(Irrep kind) {
  switch (kind) {
    case Irrep::Trivial: return 1;
    case Irrep::RegularC8: return 8;
    case Irrep::Rho1: return 2;
    case Irrep::V1: return 3;
  }
  return 0;
}

namespace {
bool irrep_allowed(Group g, Irrep k) {
  switch (k) {
    case Irrep::Trivial: return true;
    case Irrep::RegularC8: return g == Group::C8;
    case Irrep::Rho1: return g == Group::SO2;
    case Irrep::V1: return g == Group::SO3;
  }
  return false;
}
}  // namespace

Representation::Representation(Group g, std::vector<Component> components)
    : group_(g), components_(std::move(components)) {
  for (const auto& c : components_) {
    if (!irrep_allowed(g, c.kind)) throw std::invalid_argument(std::string("irrep not defined over ") + group_name(g));
    if (c.multiplicity < 0) throw std::invalid_argument("negative multiplicity");
    dim_ += irrep_dim(c.kind) * c.multiplicity;
  }
}

Representation Representation::regular_c8(int m) { return {Group::C8, {{Irrep::RegularC8, m}}}; }
Representation Representation::trivial(Group g, int m) { return {g, {{Irrep::Trivial, m}}}; }
Representation Representation::rho1_so2(int m) { return {Group::SO2, {{Irrep::Rho1, m}}}; }
Representation Representation::v1_so3(int m) { return {Group::SO3, {{Irrep::V1, m}}}; }

Representation Representation::direct_sum(const Representation& other) const {
  if (group_ != other.group_) throw std::invalid_argument("direct sum across groups");
  auto comps = components_;
  comps.insert(comps.end(), other.components_.begin(), other.components_.end());
  return {group_, std::move(comps)};
}

namespace {
Eigen::MatrixXd irrep_matrix(Irrep kind, const GroupElement& g) {
  switch (kind) {
    case Irrep::Trivial: return Eigen::MatrixXd::Identity(1, 1);
    case Irrep::RegularC8: {
      // (ρ(s)f)_r = f_{r-s}: column c maps to row c+s
      Eigen::MatrixXd p = Eigen::MatrixXd::Zero(8, 8);
      for (int c = 0; c < 8; ++c) p((c + g.index()) % 8, c) = 1.0;
      return p;
    }
    case Irrep::Rho1: {
      const double c = std::cos(g.angle()), s = std::sin(g.angle());
      Eigen::MatrixXd r(2, 2);
      r << c, -s, s, c;
      return r;
    }
    case Irrep::V1: return g.rotation();
  }
  throw std::invalid_argument("unknown irrep");
}
}  // namespace

Eigen::MatrixXd rep_matrix(const Representation& rep, const GroupElement& g) {
  if (g.group() != rep.group())
    throw std::invalid_argument(std::string("element of ") + group_name(g.group()) +
                                " applied to representation of " + group_name(rep.group()));
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rep.dim(), rep.dim());
  int off = 0;
  for (const auto& c : rep.components()) {
    const auto block = irrep_matrix(c.kind, g);
    const int d = irrep_dim(c.kind);
    for (int k = 0; k < c.multiplicity; ++k, off += d) m.block(off, off, d, d) = block;
  }
  return m;
}

// ---------------------------------------------------------------- sampling

GroupElement random_element(Group g, std::mt19937_64& rng) {
  switch (g) {
    case Group::C8: return GroupElement::c8(std::uniform_int_distribution<int>(0, 7)(rng));
    case Group::SO2:
      return GroupElement::so2(std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng));
    case Group::SO3: {
      std::normal_distribution<double> n(0.0, 1.0);
      Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
      q.normalize();
      return GroupElement::so3(q.toRotationMatrix());
    }
  }
  throw std::invalid_argument("unknown group");
}

std::vector<GroupElement> sample_group(Group g, int n, std::mt19937_64& rng) {
  std::vector<GroupElement> out;
  if (g == Group::C8) {
    for (int i = 0; i < 8; ++i) out.push_back(GroupElement::c8(i));
    return out;
  }
  for (int i = 0; i < n; ++i) out.push_back(random_element(g, rng));
  return out;
}

// ---------------------------------------------------------------- solver

EquivariantBasis solve_equivariant_basis(const Representation& in, const Representation& out,
                                         int n_samples, double rank_tol, std::uint64_t seed) {
  if (in.group() != out.group()) throw std::invalid_argument("representations over different groups");
  if (n_samples < 16) throw std::invalid_argument("solve_equivariant_basis needs n_samples >= 16");
  const int di = in.dim(), dout = out.dim();
  EquivariantBasis result{in, out, {}};
  if (di == 0 || dout == 0) return result;

  std::mt19937_64 rng(seed);
  const auto elems = sample_group(in.group(), n_samples, rng);
  const int n = di * dout;
  Eigen::MatrixXd constraints(static_cast<Eigen::Index>(elems.size()) * n, n);
  for (std::size_t s = 0; s < elems.size(); ++s) {
    const Eigen::MatrixXd ro = rep_matrix(out, elems[s]);
    const Eigen::MatrixXd ri_inv_t = rep_matrix(in, elems[s]).inverse().transpose();
    // row-major vec(ρ_out W ρ_in^{-1}) = (ρ_out ⊗ ρ_in^{-T}) vec(W)
    Eigen::MatrixXd kron(n, n);
    for (int a = 0; a < dout; ++a)
      for (int b = 0; b < dout; ++b) kron.block(a * di, b * di, di, di) = ro(a, b) * ri_inv_t;
    constraints.block(static_cast<Eigen::Index>(s) * n, 0, n, n) = kron - Eigen::MatrixXd::Identity(n, n);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(constraints, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = rank_tol * (sv.size() ? sv(0) : 0.0);
  const Eigen::MatrixXd& v = svd.matrixV();
  for (int k = 0; k < n; ++k) {
    const double sigma = k < sv.size() ? sv(k) : 0.0;
    if (sigma > cutoff) continue;
    Eigen::MatrixXd w(dout, di);
    for (int a = 0; a < dout; ++a)
      for (int b = 0; b < di; ++b) w(a, b) = v(a * di + b, k);
    result.basis.push_back(std::move(w));
  }
  return result;
}

double intertwiner_residual(const Eigen::MatrixXd& w, const Representation& in, const Representation& out,
                            const std::vector<GroupElement>& elements) {
  double worst = 0.0;
  for (const auto& g : elements)
    worst = std::max(worst, (rep_matrix(out, g) * w - w * rep_matrix(in, g)).norm());
  return worst;
}

Tensor equivariant_linear(const EquivariantBasis& basis, const Tensor& coeffs, int multiplicity_in,
                          int multiplicity_out) {
  const std::size_t di = static_cast<std::size_t>(basis.in.dim());
  const std::size_t dout = static_cast<std::size_t>(basis.out.dim());
  const std::size_t mi = static_cast<std::size_t>(multiplicity_in);
  const std::size_t mo = static_cast<std::size_t>(multiplicity_out);
  const std::size_t nb = basis.size();
  if (mi == 0 || mo == 0) throw ShapeError("equivariant_linear: multiplicities must be positive");
  const std::size_t rows = mo * dout, cols = mi * di;
  if (nb == 0) return Tensor::zeros({rows, cols});
  if (coeffs.shape() != Shape{mo, mi, nb})
    throw ShapeError("equivariant_linear: coeffs must be " + shape_str({mo, mi, nb}) + ", got " +
                     shape_str(coeffs.shape()));
  const auto c = coeffs.data();
  std::vector<double> w(rows * cols, 0.0);
  for (std::size_t i = 0; i < mo; ++i)
    for (std::size_t j = 0; j < mi; ++j)
      for (std::size_t k = 0; k < nb; ++k) {
        const double ck = c[(i * mi + j) * nb + k];
        const auto& bk = basis.basis[k];
        for (std::size_t a = 0; a < dout; ++a)
          for (std::size_t b = 0; b < di; ++b)
            w[(i * dout + a) * cols + j * di + b] += ck * bk(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
  auto cn = coeffs.node();
  auto bs = std::make_shared<std::vector<Eigen::MatrixXd>>(basis.basis);
  return make_op_result("equivariant_linear", {rows, cols}, std::move(w), {coeffs},
                        [cn, bs, mo, mi, nb, dout, di, cols](Node& o) {
                          auto& g = cn->ensure_grad();
                          for (std::size_t i = 0; i < mo; ++i)
                            for (std::size_t j = 0; j < mi; ++j)
                              for (std::size_t k = 0; k < nb; ++k) {
                                double acc = 0.0;
                                const auto& bk = (*bs)[k];
                                for (std::size_t a = 0; a < dout; ++a)
                                  for (std::size_t b = 0; b < di; ++b)
                                    acc += o.grad[(i * dout + a) * cols + j * di + b] *
                                           bk(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                                g[(i * mi + j) * nb + k] += acc;
                              }
                        });
}

Eigen::Matrix3d rotation_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Eigen::Matrix3d rotation_z_quarter(int quarter_turns) {
  static constexpr int cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const int q = ((quarter_turns % 4) + 4) % 4;
  const double c = cs[q][0], s = cs[q][1];
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

}  // namespace eqmesh
