#include "eqmesh/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eqmesh/ops.hpp"

namespace eqmesh {

SparseMap grid_rotation_quarter(std::size_t n, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  SparseMap m(n * n, n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t si = i, sj = j;
      for (int t = 0; t < q; ++t) {  // one CCW turn: out[i][j] = in[j][n-1-i]
        const std::size_t ni = sj, nj = n - 1 - si;
        si = ni;
        sj = nj;
      }
      m.add(i * n + j, si * n + sj, 1.0);
    }
  m.finalize();
  return m;
}

SparseMap grid_rotation_bilinear(std::size_t n, double angle) {
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  SparseMap m(n * n, n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = static_cast<double>(j) - c, y = c - static_cast<double>(i);
      const double qx = ca * x + sa * y, qy = -sa * x + ca * y;  // R⁻¹·p
      const double fi = c - qy, fj = qx + c;
      const double i0 = std::floor(fi), j0 = std::floor(fj);
      const double ti = fi - i0, tj = fj - j0;
      const double w[2][2] = {{(1 - ti) * (1 - tj), (1 - ti) * tj}, {ti * (1 - tj), ti * tj}};
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) {
          const double ii = i0 + di, jj = j0 + dj;
          if (w[di][dj] == 0.0 || ii < 0 || jj < 0 || ii > static_cast<double>(n - 1) ||
              jj > static_cast<double>(n - 1))
            continue;
          m.add(i * n + j, static_cast<std::size_t>(ii) * n + static_cast<std::size_t>(jj), w[di][dj]);
        }
    }
  m.finalize();
  return m;
}

SparseMap grid_rotation_c8(std::size_t n, int eighths) {
  const int e = ((eighths % 8) + 8) % 8;
  auto quarter = grid_rotation_quarter(n, e / 2);
  if (e % 2 == 0) return quarter;
  return quarter.compose(grid_rotation_bilinear(n, std::numbers::pi / 4));
}

SparseMap grid_rotation_gaussian(std::size_t n, double angle, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian resampling needs sigma > 0");
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double reach = 4.0 * sigma, inv = 1.0 / (2.0 * sigma * sigma);
  SparseMap m(n * n, n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = static_cast<double>(j) - c, y = c - static_cast<double>(i);
      const double qx = ca * x + sa * y, qy = -sa * x + ca * y;  // R⁻¹·p
      const double fi = c - qy, fj = qx + c;
      const long i_lo = std::max(0L, static_cast<long>(std::ceil(fi - reach)));
      const long i_hi = std::min(static_cast<long>(n) - 1, static_cast<long>(std::floor(fi + reach)));
      const long j_lo = std::max(0L, static_cast<long>(std::ceil(fj - reach)));
      const long j_hi = std::min(static_cast<long>(n) - 1, static_cast<long>(std::floor(fj + reach)));
      std::vector<std::pair<std::size_t, double>> taps;
      double total = 0;
      for (long ii = i_lo; ii <= i_hi; ++ii)
        for (long jj = j_lo; jj <= j_hi; ++jj) {
          const double di = static_cast<double>(ii) - fi, dj = static_cast<double>(jj) - fj;
          const double w = std::exp(-(di * di + dj * dj) * inv);
          taps.emplace_back(static_cast<std::size_t>(ii) * n + static_cast<std::size_t>(jj), w);
          total += w;
        }
      if (taps.empty()) {  // far outside the grid: nearest sample
        const auto ni = static_cast<std::size_t>(std::clamp(std::lround(fi), 0L, static_cast<long>(n) - 1));
        const auto nj = static_cast<std::size_t>(std::clamp(std::lround(fj), 0L, static_cast<long>(n) - 1));
        m.add(i * n + j, ni * n + nj, 1.0);
        continue;
      }
      for (const auto& [col, w] : taps) m.add(i * n + j, col, w / total);
    }
  m.finalize();
  return m;
}

SparseMap grid_rotation_c8_smooth(std::size_t n, int eighths, double sigma) {
  const int e = ((eighths % 8) + 8) % 8;
  return grid_rotation_quarter(n, e / 2).compose(grid_rotation_gaussian(n, e % 2 ? std::numbers::pi / 4 : 0.0, sigma));
}

Tensor rotate_planes(const Tensor& x, const SparseMap& map) {
  if (x.rank() < 2) throw ShapeError("rotate_planes needs at least two axes");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (h * w != map.cols) throw ShapeError("rotate_planes: plane size does not match map");
  const std::size_t planes = x.numel() / (h * w);
  auto flat = reshape(x, {planes, h * w});
  return reshape(sparse_linear(flat, map, {map.rows}), x.shape());
}

Tensor rot90(const Tensor& x, int quarter_turns) {
  NoGradGuard guard;
  const std::size_t n = x.dim(x.rank() - 1);
  if (x.dim(x.rank() - 2) != n) throw ShapeError("rot90 needs square planes");
  return rotate_planes(x, grid_rotation_quarter(n, quarter_turns)).detach();
}

Tensor rotate_bilinear(const Tensor& x, double angle, double fill) {
  NoGradGuard guard;
  const std::size_t n = x.dim(x.rank() - 1);
  if (x.dim(x.rank() - 2) != n) throw ShapeError("rotate_bilinear needs square planes");
  const auto map = grid_rotation_bilinear(n, angle);
  auto out = rotate_planes(x, map).detach();
  if (fill != 0.0) {
    // each output sample's missing weight is filled with `fill`
    std::vector<double> covered(n * n, 0.0);
    for (const auto& e : map.entries) covered[e.row] += e.weight;
    auto v = out.mutable_data();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += fill * (1.0 - covered[k % (n * n)]);
  }
  return out;
}

}  // namespace eqmesh
