#pragma once

// Forward and backward kernels on plain tensors. The autodiff graph in
// graph.hpp is a thin recorder on top of these.
//
// All reductions run in a fixed left-to-right order so that results are
// bit-reproducible. Convolution accumulates, per output cell, over
// (input channel, kernel row, kernel column) in that order starting from 0
// and adds the bias last; padded cells are skipped, which is bit-identical to
// multiplying them by zero.

#include <cstddef>
#include <span>
#include <vector>

#include "padprobe/tensor.hpp"

namespace padprobe::kernels {

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Spatial output extent of a convolution along one axis:
/// floor((in + 2*padding - k) / stride) + 1. Throws if the kernel does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dParams p);

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

/// Gradients of conv2d. Only the requested pieces are computed; the rest stay empty.
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                            Conv2dParams p, bool want_input, bool want_params);

Tensor relu(const Tensor& input);
/// d relu: passes grad where input > 0 (the gradient at exactly 0 is 0).
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output cell
};

/// 2x2 window, stride 2, floor on odd extents. Ties resolve to the first cell
/// in row-major window order.
MaxPoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const Shape& input_dims, std::span<const std::size_t> argmax,
                         const Tensor& grad_out);

/// Bilinear resize with half-pixel centres and edge clamping:
/// src = (dst + 0.5) * in / out - 0.5, clamped to [0, in - 1].
/// Returns a bit-identical copy when the size does not change.
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor bilinear_resize_backward(const Shape& input_dims, const Tensor& grad_out);

Tensor concat_channels(std::span<const Tensor* const> inputs);
Tensor concat_channels(const std::vector<Tensor>& inputs);
/// Inverse of concat_channels: splits along axis 1 into the given channel counts.
std::vector<Tensor> split_channels(const Tensor& input, std::span<const std::size_t> channels);

Tensor add(const Tensor& a, const Tensor& b);

/// N x C x H x W -> N x C, mean over the spatial plane.
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_dims, const Tensor& grad_out);

/// x: N x F, weight: O x F, bias: O -> N x O.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
struct AffineGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;
};
AffineGrads affine_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                            bool want_input, bool want_params);

/// Mean softmax cross-entropy over the batch. logits: N x C.
float softmax_xent(const Tensor& logits, std::span<const int> labels);
/// Gradient of the mean loss: (softmax - onehot) / N.
Tensor softmax_xent_backward(const Tensor& logits, std::span<const int> labels);
Tensor softmax(const Tensor& logits);

/// (1 / 2n) * sum (pred - target)^2 with n the element count.
float mse_half(const Tensor& pred, const Tensor& target);
/// (pred - target) / n.
Tensor mse_half_backward(const Tensor& pred, const Tensor& target);

}  // namespace padprobe::kernels
