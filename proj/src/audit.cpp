#include "eqmesh/audit.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "eqmesh/grid.hpp"
#include "eqmesh/groups.hpp"
#include "eqmesh/layers.hpp"

namespace eqmesh {

namespace {

int eighths_of(int angle_deg) {
  if (angle_deg % 45 != 0)
    throw std::invalid_argument("audit angles must be multiples of 45 degrees, got " + std::to_string(angle_deg));
  return ((angle_deg / 45) % 8 + 8) % 8;
}

// Residual between `got` and `want`, both viewed as rows of `width` values,
// optionally restricted to rows where `keep` is true.
void residuals(const Tensor& got, const Tensor& want, std::size_t width, const std::vector<bool>& keep, double& rel,
               double& vmax) {
  const auto g = got.data(), w = want.data();
  if (g.size() != w.size()) throw ShapeError("audit: stage output shapes differ");
  double num = 0, den = 0, dmax = 0, ymax = 0;
  for (std::size_t row = 0; row * width < g.size(); ++row) {
    if (!keep.empty() && !keep[row]) continue;
    double d2 = 0, y2 = 0;
    for (std::size_t k = 0; k < width; ++k) {
      const double d = g[row * width + k] - w[row * width + k];
      d2 += d * d;
      y2 += w[row * width + k] * w[row * width + k];
    }
    num += d2;
    den += y2;
    dmax = std::max(dmax, std::sqrt(d2));
    ymax = std::max(ymax, std::sqrt(y2));
  }
  rel = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  vmax = ymax > 0 ? dmax / ymax : dmax;
}

// Regular-field action: rotate every plane, then move orientation r to r+k.
Tensor act_on_field(const Tensor& field, int k) {
  const std::size_t b = field.dim(0), ch = field.dim(1), s = field.dim(2);
  const auto rotated = rotate_planes(field, grid_rotation_c8_smooth(s, k, kFieldResampleSigma));
  const auto x = rotated.data();
  std::vector<double> out(x.size());
  const std::size_t plane = s * s;
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t f = c / kGroupOrder, r = c % kGroupOrder;
      const std::size_t dst = f * kGroupOrder + (r + static_cast<std::size_t>(k)) % kGroupOrder;
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((n * ch + c) * plane), plane,
                  out.begin() + static_cast<std::ptrdiff_t>((n * ch + dst) * plane));
    }
  return Tensor::from(field.shape(), std::move(out));
}

// Sites × channels layout so residuals() sees one row per site.
Tensor sites_major(const Tensor& field) {
  const std::size_t b = field.dim(0), ch = field.dim(1), plane = field.dim(2) * field.dim(3);
  const auto x = field.data();
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t p = 0; p < plane; ++p) out[(n * plane + p) * ch + c] = x[(n * ch + c) * plane + p];
  return Tensor::from({b * plane, ch}, std::move(out));
}

Tensor rotate_vectors(const Tensor& v, int k) {
  const std::size_t width = v.dim(v.rank() - 1);
  const double c = c8_cos(k), s = c8_sin(k);
  auto out = v.data();
  std::vector<double> y(out.begin(), out.end());
  for (std::size_t i = 0; i < y.size(); i += width) {
    const double a = y[i], b = y[i + 1];
    y[i] = c * a - s * b;
    y[i + 1] = s * a + c * b;
  }
  return Tensor::from(v.shape(), std::move(y));
}

}  // namespace

Tensor rotate_images(const Tensor& images, int angle_deg, double fill) {
  const int k = eighths_of(angle_deg);
  if (k % 2 == 0) return rot90(images, k / 2);
  return rotate_bilinear(images, k * std::numbers::pi / 4, fill);
}

Tensor smooth_disk_images(std::size_t batch, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double c = (static_cast<double>(size) - 1) / 2.0, radius = static_cast<double>(size) / 2.0;
  std::vector<double> v(batch * 3 * size * size, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < 3; ++ch) {
      struct Blob {
        double x, y, sigma, amp;
      };
      std::vector<Blob> blobs;
      for (int k = 0; k < 6; ++k) {
        const double rr = 0.6 * radius * std::sqrt(u(rng)), th = 2 * std::numbers::pi * u(rng);
        blobs.push_back({rr * std::cos(th), rr * std::sin(th), radius * (0.15 + 0.2 * u(rng)), u(rng)});
      }
      for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
          const double x = static_cast<double>(j) - c, y = c - static_cast<double>(i);
          const double r = std::hypot(x, y) / radius;
          const double window = r <= 0.6 ? 1.0 : r >= 0.9 ? 0.0 : 0.5 * (1 + std::cos(std::numbers::pi * (r - 0.6) / 0.3));
          double val = 0;
          for (const auto& b : blobs)
            val += b.amp * std::exp(-((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (2 * b.sigma * b.sigma));
          v[((n * 3 + ch) * size + i) * size + j] = std::min(1.0, val) * window;
        }
    }
  return Tensor::from({batch, 3, size, size}, std::move(v));
}

std::vector<AuditRow> audit_equivariance(MeshModel& model, const Tensor& images, const std::vector<int>& angles_deg,
                                         double fill) {
  NoGradGuard no_grad;
  std::vector<AuditRow> rows;
  auto* eq = dynamic_cast<EquivariantMeshModel*>(&model);

  if (!eq) {
    const auto base = model.forward(images, false);
    for (int a : angles_deg) {
      const int k = eighths_of(a);
      const auto got = model.forward(rotate_images(images, a, fill), false);
      const auto want = rotate_vectors(base, k);
      AuditRow row{"full", a, 0, 0};
      residuals(got, want, 3, {}, row.residual, row.vector_max);
      rows.push_back(row);
    }
    return rows;
  }

  const auto enc = eq->encode(images, false);
  const auto lat = eq->map_vectors(enc);
  const auto lat3 = eq->project(lat);
  const auto out = eq->decode(lat3);
  const std::size_t s = enc.dim(2);
  for (int a : angles_deg) {
    const int k = eighths_of(a);
    const auto x = rotate_images(images, a, fill);
    const auto enc_r = eq->encode(x, false);
    const auto lat_r = eq->map_vectors(enc_r);
    const auto lat3_r = eq->project(lat_r);
    const auto out_r = eq->decode(lat3_r);

    std::vector<bool> keep;
    if (k % 2) {
      const double c = (static_cast<double>(s) - 1) / 2.0;
      for (std::size_t n = 0; n < enc.dim(0); ++n)
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < s; ++j)
            keep.push_back(std::hypot(static_cast<double>(i) - c, static_cast<double>(j) - c) <= c);
    }
    AuditRow r_enc{"encoder", a, 0, 0};
    // Both sides pass through the same isotropic resampling kernel, so the
    // comparison is between equally band-limited fields.
    const auto enc_r_smooth = rotate_planes(enc_r, grid_rotation_c8_smooth(s, 0, kFieldResampleSigma));
    residuals(sites_major(enc_r_smooth), sites_major(act_on_field(enc, k)), enc.dim(1), keep, r_enc.residual,
              r_enc.vector_max);
    AuditRow r_map{"+mapping", a, 0, 0};
    residuals(lat_r, rotate_vectors(lat, k), 2, {}, r_map.residual, r_map.vector_max);
    AuditRow r_proj{"+projection", a, 0, 0};
    residuals(lat3_r, rotate_vectors(lat3, k), 3, {}, r_proj.residual, r_proj.vector_max);
    AuditRow r_full{"full", a, 0, 0};
    residuals(out_r, rotate_vectors(out, k), 3, {}, r_full.residual, r_full.vector_max);
    rows.insert(rows.end(), {r_enc, r_map, r_proj, r_full});
  }
  return rows;
}

}  // namespace eqmesh
