#pragma once

#include <cstddef>
#include <cstdint>

#include "padprobe/graph.hpp"
#include "padprobe/tensor.hpp"

namespace padprobe {

/// One op instance to check. `input_dims` is the shape of the primary input;
/// the remaining fields are only read by the ops that use them.
struct GradCheckCase {
  OpKind kind = OpKind::Conv2d;
  Shape input_dims;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  std::size_t stride = 1;
  std::size_t out_channels = 2;  // conv2d / affine
  std::size_t out_h = 0;         // bilinear-resize
  std::size_t out_w = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // number of scalar entries compared
};

/// Compares backward() against central differences of the float32 forward
/// pass, for every differentiable input of the op (data and parameters).
///
/// Tensor-valued ops are reduced to a scalar with a random positive
/// projection, summed in double. Instances are drawn so that every analytic
/// gradient entry is either exactly zero or well above float32 rounding noise
/// (small positive conv/affine operands, relu inputs with |x| > 0.1, maxpool
/// inputs separated by far more than 2*eps). The relative error per entry is
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const GradCheckCase& c, float eps, std::uint64_t seed);

}  // namespace padprobe
