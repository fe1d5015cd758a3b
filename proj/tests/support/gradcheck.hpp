#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eqmesh/tensor.hpp"

namespace eqmesh::testing {

/// f maps the inputs to any tensor; the scalar under test is sum(f ⊙ R) for a
/// fixed random R.
using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Largest ‖fd − an‖∞ / max(‖fd‖∞, ‖an‖∞) over the inputs, comparing
/// central differences (step h) with the tape's gradient. At most
/// `max_coords` coordinates per input are probed.
double gradcheck(const GradFn& f, const std::vector<Tensor>& inputs, std::uint64_t seed = 1, double h = 1e-5,
                 std::size_t max_coords = 48);

struct GradCase {
  std::string name;
  std::function<double()> run;  // returns the gradcheck error
};

/// Every differentiable op and every layer, on small random instances.
std::vector<GradCase> gradient_cases();

/// Standard-normal tensor.
Tensor randn(Shape shape, std::uint64_t seed, double scale = 1.0);

}  // namespace eqmesh::testing
