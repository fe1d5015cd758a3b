#pragma once

#include <vector>

#include "eqmesh/tensor.hpp"

namespace eqmesh {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Holds first/second moment buffers for a fixed
/// list of parameters (shapes taken at construction).
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions opts = {});

  /// One update using each parameter's accumulated grad (missing grad = 0).
  void step(double lr);
  long steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamOptions opts_;
  long t_ = 0;
};

/// Scales all grads so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace eqmesh
