#include "padprobe/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>

namespace padprobe::kernels {

namespace {

using Index = std::ptrdiff_t;

// Fixed-order sum with eight interleaved partial sums. The lanes are folded
// in a fixed tree so the result only depends on the inputs.
float sum_lanes(const float* a, std::size_t n) {
  float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) lane[l] += a[i + l];
  }
  for (std::size_t l = 0; i < n; ++i, ++l) lane[l] += a[i];
  return ((lane[0] + lane[4]) + (lane[1] + lane[5])) + ((lane[2] + lane[6]) + (lane[3] + lane[7]));
}

struct ConvShape {
  std::size_t n, c, h, w;
  std::size_t o, k;
  std::size_t oh, ow;
};

ConvShape check_conv(const Tensor& input, const Tensor& weight, Conv2dParams p) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (p.stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvShape s{};
  s.n = input.dim(0);
  s.c = input.dim(1);
  s.h = input.dim(2);
  s.w = input.dim(3);
  s.o = weight.dim(0);
  s.k = weight.dim(2);
  if (weight.dim(1) != s.c) {
    throw DimensionError("conv2d: channel axis (1) of input is " + std::to_string(s.c) +
                         " but weight expects " + std::to_string(weight.dim(1)));
  }
  if (weight.dim(3) != s.k) {
    throw DimensionError("conv2d: kernel must be square, got " + shape_to_string(weight.dims()));
  }
  try {
    s.oh = conv_output_extent(s.h, s.k, p.stride, p.padding);
  } catch (const DimensionError& e) {
    throw DimensionError(std::string("conv2d height axis (2): ") + e.what());
  }
  try {
    s.ow = conv_output_extent(s.w, s.k, p.stride, p.padding);
  } catch (const DimensionError& e) {
    throw DimensionError(std::string("conv2d width axis (3): ") + e.what());
  }
  return s;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw DimensionError("stride must be positive");
  if (kernel == 0 || kernel > in + 2 * padding) {
    throw DimensionError("kernel " + std::to_string(kernel) + " exceeds extent " +
                         std::to_string(in) + " + 2*padding " + std::to_string(padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace {

// Patch matrix for one image: rows ordered (ci, ky, kx), columns (oy, ox).
// Out-of-range taps hold 0.
void im2col(const float* src, const ConvShape& s, Conv2dParams p, float* col) {
  const auto stride = static_cast<Index>(p.stride);
  const auto pad = static_cast<Index>(p.padding);
  const std::size_t plane_out = s.oh * s.ow;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < s.c; ++ci) {
    const float* in = src + ci * s.h * s.w;
    for (std::size_t ky = 0; ky < s.k; ++ky) {
      for (std::size_t kx = 0; kx < s.k; ++kx, ++row) {
        float* dst = col + row * plane_out;
        for (std::size_t oy = 0; oy < s.oh; ++oy) {
          const Index iy = static_cast<Index>(oy) * stride + static_cast<Index>(ky) - pad;
          float* drow = dst + oy * s.ow;
          if (iy < 0 || iy >= static_cast<Index>(s.h)) {
            std::fill_n(drow, s.ow, 0.0F);
            continue;
          }
          const float* srow = in + iy * static_cast<Index>(s.w);
          for (std::size_t ox = 0; ox < s.ow; ++ox) {
            const Index ix = static_cast<Index>(ox) * stride + static_cast<Index>(kx) - pad;
            drow[ox] = (ix < 0 || ix >= static_cast<Index>(s.w)) ? 0.0F : srow[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the image.
void col2im(const float* col, const ConvShape& s, Conv2dParams p, float* dst) {
  const auto stride = static_cast<Index>(p.stride);
  const auto pad = static_cast<Index>(p.padding);
  const std::size_t plane_out = s.oh * s.ow;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < s.c; ++ci) {
    float* out = dst + ci * s.h * s.w;
    for (std::size_t ky = 0; ky < s.k; ++ky) {
      for (std::size_t kx = 0; kx < s.k; ++kx, ++row) {
        const float* src = col + row * plane_out;
        for (std::size_t oy = 0; oy < s.oh; ++oy) {
          const Index iy = static_cast<Index>(oy) * stride + static_cast<Index>(ky) - pad;
          if (iy < 0 || iy >= static_cast<Index>(s.h)) continue;
          float* orow = out + iy * static_cast<Index>(s.w);
          const float* srow = src + oy * s.ow;
          for (std::size_t ox = 0; ox < s.ow; ++ox) {
            const Index ix = static_cast<Index>(ox) * stride + static_cast<Index>(kx) - pad;
            if (ix >= 0 && ix < static_cast<Index>(s.w)) orow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

constexpr std::size_t kMR = 6;
constexpr std::size_t kNR = 16;

using v8f = float __attribute__((vector_size(32)));

inline v8f load8(const float* p) {
  v8f v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(float* p, v8f v) { std::memcpy(p, &v, sizeof(v)); }

// MR x kNR tile, accumulators held in vector registers.
template <std::size_t MR>
void gemm_tile(const float* a, std::size_t a_row, std::size_t a_col, const float* b,
               std::size_t ldb, float* c, std::size_t ldc, std::size_t kdim) {
  v8f acc[MR][2] = {};
  for (std::size_t k = 0; k < kdim; ++k) {
    const v8f b0 = load8(b + k * ldb);
    const v8f b1 = load8(b + k * ldb + 8);
    for (std::size_t i = 0; i < MR; ++i) {
      const float av = a[i * a_row + k * a_col];
      const v8f va = {av, av, av, av, av, av, av, av};
      acc[i][0] += va * b0;
      acc[i][1] += va * b1;
    }
  }
  for (std::size_t i = 0; i < MR; ++i) {
    store8(c + i * ldc, acc[i][0]);
    store8(c + i * ldc + 8, acc[i][1]);
  }
}

// C[m][n] = sum_k A(m, k) * B[k][n], k ascending from 0, with A(m, k) read at
// a[m * a_row + k * a_col]. Each C entry sees the same addition sequence no
// matter how the loops are blocked.
void gemm_k_ordered(const float* a, std::size_t a_row, std::size_t a_col, const float* b, float* c,
                    std::size_t m, std::size_t kdim, std::size_t n) {
  for (std::size_t n0 = 0; n0 < n; n0 += kNR) {
    const std::size_t nb = std::min(kNR, n - n0);
    for (std::size_t m0 = 0; m0 < m; m0 += kMR) {
      const std::size_t mb = std::min(kMR, m - m0);
      if (nb == kNR) {
        const float* at = a + m0 * a_row;
        float* ct = c + m0 * n + n0;
        switch (mb) {
          case 6: gemm_tile<6>(at, a_row, a_col, b + n0, n, ct, n, kdim); continue;
          case 5: gemm_tile<5>(at, a_row, a_col, b + n0, n, ct, n, kdim); continue;
          case 4: gemm_tile<4>(at, a_row, a_col, b + n0, n, ct, n, kdim); continue;
          case 3: gemm_tile<3>(at, a_row, a_col, b + n0, n, ct, n, kdim); continue;
          case 2: gemm_tile<2>(at, a_row, a_col, b + n0, n, ct, n, kdim); continue;
          default: gemm_tile<1>(at, a_row, a_col, b + n0, n, ct, n, kdim); continue;
        }
      }
      float acc[kMR][kNR] = {};
      for (std::size_t k = 0; k < kdim; ++k) {
        const float* brow = b + k * n + n0;
        for (std::size_t i = 0; i < mb; ++i) {
          const float av = a[(m0 + i) * a_row + k * a_col];
          for (std::size_t j = 0; j < nb; ++j) acc[i][j] += av * brow[j];
        }
      }
      for (std::size_t i = 0; i < mb; ++i) std::copy_n(acc[i], nb, c + (m0 + i) * n + n0);
    }
  }
}

void transpose(const float* src, std::size_t rows, std::size_t cols, float* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    const std::size_t r1 = std::min(rows, r0 + kBlock);
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dParams p) {
  const ConvShape s = check_conv(input, weight, p);
  if (bias.rank() != 1 || bias.dim(0) != s.o) {
    throw DimensionError("conv2d: bias shape " + shape_to_string(bias.dims()) +
                         " does not match output channel axis (0) of weight = " +
                         std::to_string(s.o));
  }
  Tensor out({s.n, s.o, s.oh, s.ow});
  const std::size_t plane_in = s.h * s.w;
  const std::size_t plane_out = s.oh * s.ow;
  const std::size_t kdim = s.c * s.k * s.k;
  const bool direct = s.k == 1 && p.stride == 1 && p.padding == 0;
  std::vector<float> col(direct ? 0 : kdim * plane_out);

  for (std::size_t n = 0; n < s.n; ++n) {
    const float* src = input.data() + n * s.c * plane_in;
    if (!direct) im2col(src, s, p, col.data());
    float* dst = out.data() + n * s.o * plane_out;
    gemm_k_ordered(weight.data(), kdim, 1, direct ? src : col.data(), dst, s.o, kdim, plane_out);
    for (std::size_t o = 0; o < s.o; ++o) {
      const float b = bias[o];
      float* plane = dst + o * plane_out;
      for (std::size_t i = 0; i < plane_out; ++i) plane[i] += b;
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                            Conv2dParams p, bool want_input, bool want_params) {
  const ConvShape s = check_conv(input, weight, p);
  if (grad_out.dims() != Shape{s.n, s.o, s.oh, s.ow}) {
    throw DimensionError("conv2d_backward: grad_out shape " + shape_to_string(grad_out.dims()));
  }
  const std::size_t plane_in = s.h * s.w;
  const std::size_t plane_out = s.oh * s.ow;
  const std::size_t kdim = s.c * s.k * s.k;
  const bool direct = s.k == 1 && p.stride == 1 && p.padding == 0;
  Conv2dGrads g;
  if (want_input) g.input = Tensor(input.dims());
  if (want_params) {
    g.weight = Tensor(weight.dims());
    g.bias = Tensor({s.o});
  }
  std::vector<float> col(kdim * plane_out);
  std::vector<float> col_t(want_params ? kdim * plane_out : 0);
  std::vector<float> wtmp(want_params ? s.o * kdim : 0);

  for (std::size_t n = 0; n < s.n; ++n) {
    const float* src = input.data() + n * s.c * plane_in;
    const float* gout = grad_out.data() + n * s.o * plane_out;
    if (want_params) {
      // grad_w[o][k] = sum_p gout[o][p] * col[k][p], p ascending.
      const float* cols = src;
      if (!direct) {
        im2col(src, s, p, col.data());
        cols = col.data();
      }
      transpose(cols, kdim, plane_out, col_t.data());
      gemm_k_ordered(gout, plane_out, 1, col_t.data(), wtmp.data(), s.o, plane_out, kdim);
      for (std::size_t i = 0; i < wtmp.size(); ++i) g.weight[i] += wtmp[i];
      for (std::size_t o = 0; o < s.o; ++o) g.bias[o] += sum_lanes(gout + o * plane_out, plane_out);
    }
    if (want_input) {
      float* gin = g.input.data() + n * s.c * plane_in;
      if (direct) {
        gemm_k_ordered(weight.data(), 1, kdim, gout, gin, kdim, s.o, plane_out);
      } else {
        gemm_k_ordered(weight.data(), 1, kdim, gout, col.data(), kdim, s.o, plane_out);
        col2im(col.data(), s, p, gin);
      }
    }
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.dims());
  const float* x = input.data();
  float* y = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) y[i] = x[i] > 0.0F ? x[i] : 0.0F;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_dims(input, grad_out, "relu_backward");
  Tensor g(input.dims());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0F ? grad_out[i] : 0.0F;
  return g;
}

MaxPoolResult maxpool2(const Tensor& input) {
  require_rank(input, 4, "maxpool2");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) {
    throw DimensionError("maxpool2: spatial extent " + shape_to_string(input.dims()) +
                         " smaller than the 2x2 window");
  }
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolResult r{Tensor({n, c, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++k) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : cand) {
          if (input[idx] > input[best]) best = idx;
        }
        r.output[k] = input[best];
        r.argmax[k] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Shape& input_dims, std::span<const std::size_t> argmax,
                         const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw DimensionError("maxpool2_backward: argmax/grad size mismatch");
  }
  Tensor g(input_dims);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

namespace {

struct Tap1d {
  std::size_t i0;
  std::size_t i1;
  float t;  // weight of i1
};

std::vector<Tap1d> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap1d> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double last = static_cast<double>(in - 1);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, last);
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, static_cast<float>(src - static_cast<double>(i0))};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 4, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: output extent must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (out_h == h && out_w == w) return input;
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  Tensor out({n, c, out_h, out_w});
  float* dst = out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const float* src = input.data() + plane * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap1d& a = ty[y];
      const float* r0 = src + a.i0 * w;
      const float* r1 = src + a.i1 * w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap1d& b = tx[x];
        const float top = (1.0F - b.t) * r0[b.i0] + b.t * r0[b.i1];
        const float bot = (1.0F - b.t) * r1[b.i0] + b.t * r1[b.i1];
        *dst++ = (1.0F - a.t) * top + a.t * bot;
      }
    }
  }
  return out;
}

Tensor bilinear_resize_backward(const Shape& input_dims, const Tensor& grad_out) {
  require_rank(grad_out, 4, "bilinear_resize_backward");
  if (input_dims.size() != 4) throw DimensionError("bilinear_resize_backward: input rank");
  const std::size_t n = input_dims[0], c = input_dims[1], h = input_dims[2], w = input_dims[3];
  const std::size_t out_h = grad_out.dim(2), out_w = grad_out.dim(3);
  if (out_h == h && out_w == w) return grad_out;
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  Tensor g(input_dims);
  const float* go = grad_out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    float* dst = g.data() + plane * h * w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap1d& a = ty[y];
      float* r0 = dst + a.i0 * w;
      float* r1 = dst + a.i1 * w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap1d& b = tx[x];
        const float v = *go++;
        const float top = (1.0F - a.t) * v;
        const float bot = a.t * v;
        r0[b.i0] += (1.0F - b.t) * top;
        r0[b.i1] += b.t * top;
        r1[b.i0] += (1.0F - b.t) * bot;
        r1[b.i1] += b.t * bot;
      }
    }
  }
  return g;
}

Tensor concat_channels(std::span<const Tensor* const> inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels: no inputs");
  const Tensor& first = *inputs[0];
  require_rank(first, 4, "concat_channels");
  std::size_t channels = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& t = *inputs[i];
    require_rank(t, 4, "concat_channels");
    for (std::size_t axis : {0U, 2U, 3U}) {
      if (t.dim(axis) != first.dim(axis)) {
        throw DimensionError("concat_channels: input " + std::to_string(i) + " axis " +
                             std::to_string(axis) + " is " + std::to_string(t.dim(axis)) +
                             ", expected " + std::to_string(first.dim(axis)));
      }
    }
    channels += t.dim(1);
  }
  const std::size_t n = first.dim(0), plane = first.dim(2) * first.dim(3);
  Tensor out({n, channels, first.dim(2), first.dim(3)});
  float* dst = out.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (const Tensor* t : inputs) {
      const std::size_t block = t->dim(1) * plane;
      const float* src = t->data() + b * block;
      dst = std::copy(src, src + block, dst);
    }
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(inputs.size());
  for (const auto& t : inputs) ptrs.push_back(&t);
  return concat_channels(std::span<const Tensor* const>(ptrs));
}

std::vector<Tensor> split_channels(const Tensor& input, std::span<const std::size_t> channels) {
  require_rank(input, 4, "split_channels");
  std::size_t total = 0;
  for (auto c : channels) total += c;
  if (total != input.dim(1)) {
    throw DimensionError("split_channels: channel counts sum to " + std::to_string(total) +
                         " but input has " + std::to_string(input.dim(1)));
  }
  const std::size_t n = input.dim(0), plane = input.dim(2) * input.dim(3);
  std::vector<Tensor> parts;
  parts.reserve(channels.size());
  for (auto c : channels) parts.emplace_back(Shape{n, c, input.dim(2), input.dim(3)});
  const float* src = input.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const std::size_t block = channels[i] * plane;
      std::copy(src, src + block, parts[i].data() + b * block);
      src += block;
    }
  }
  return parts;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "add");
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    const float* p = input.data() + i * plane;
    float acc = 0.0F;
    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    out[i] = acc / static_cast<float>(plane);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_dims, const Tensor& grad_out) {
  Tensor g(input_dims);
  const std::size_t plane = input_dims[2] * input_dims[3];
  const float inv = 1.0F / static_cast<float>(plane);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    std::fill_n(g.data() + i * plane, plane, grad_out[i] * inv);
  }
  return g;
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "affine input");
  require_rank(weight, 2, "affine weight");
  const std::size_t n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f) {
    throw DimensionError("affine: feature axis (1) is " + std::to_string(f) +
                         " but weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != o) {
    throw DimensionError("affine: bias shape " + shape_to_string(bias.dims()));
  }
  Tensor out({n, o});
  for (std::size_t b = 0; b < n; ++b) {
    const float* xr = x.data() + b * f;
    for (std::size_t j = 0; j < o; ++j) {
      const float* wr = weight.data() + j * f;
      float acc = 0.0F;
      for (std::size_t i = 0; i < f; ++i) acc += wr[i] * xr[i];
      out[b * o + j] = acc + bias[j];
    }
  }
  return out;
}

AffineGrads affine_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                            bool want_input, bool want_params) {
  const std::size_t n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (grad_out.dims() != Shape{n, o}) {
    throw DimensionError("affine_backward: grad_out shape " + shape_to_string(grad_out.dims()));
  }
  AffineGrads g;
  if (want_input) {
    g.x = Tensor(x.dims());
    for (std::size_t b = 0; b < n; ++b) {
      float* gx = g.x.data() + b * f;
      for (std::size_t j = 0; j < o; ++j) {
        const float go = grad_out[b * o + j];
        const float* wr = weight.data() + j * f;
        for (std::size_t i = 0; i < f; ++i) gx[i] += go * wr[i];
      }
    }
  }
  if (want_params) {
    g.weight = Tensor(weight.dims());
    g.bias = Tensor({o});
    for (std::size_t b = 0; b < n; ++b) {
      const float* xr = x.data() + b * f;
      for (std::size_t j = 0; j < o; ++j) {
        const float go = grad_out[b * o + j];
        float* gw = g.weight.data() + j * f;
        for (std::size_t i = 0; i < f; ++i) gw[i] += go * xr[i];
        g.bias[j] += go;
      }
    }
  }
  return g;
}

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_xent");
  if (labels.size() != logits.dim(0)) {
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(logits.dim(0)));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= logits.dim(1)) {
      throw DimensionError("softmax_xent: label " + std::to_string(l) + " out of range");
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor p(logits.dims());
  for (std::size_t b = 0; b < n; ++b) {
    const float* l = logits.data() + b * c;
    const float m = *std::max_element(l, l + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(l[j] - m));
    for (std::size_t j = 0; j < c; ++j) {
      p[b * c + j] = static_cast<float>(std::exp(static_cast<double>(l[j] - m)) / z);
    }
  }
  return p;
}

float softmax_xent(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const float* l = logits.data() + b * c;
    const double m = *std::max_element(l, l + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(l[j]) - m);
    total += std::log(z) + m - static_cast<double>(l[labels[b]]);
  }
  return static_cast<float>(total / static_cast<double>(n));
}

Tensor softmax_xent_backward(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor g = softmax(logits);
  const float inv_n = 1.0F / static_cast<float>(n);
  for (std::size_t b = 0; b < n; ++b) {
    g[b * c + static_cast<std::size_t>(labels[b])] -= 1.0F;
    for (std::size_t j = 0; j < c; ++j) g[b * c + j] *= inv_n;
  }
  return g;
}

float mse_half(const Tensor& pred, const Tensor& target) {
  require_same_dims(pred, target, "mse_half");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return static_cast<float>(acc / (2.0 * static_cast<double>(pred.size())));
}

Tensor mse_half_backward(const Tensor& pred, const Tensor& target) {
  require_same_dims(pred, target, "mse_half_backward");
  Tensor g(pred.dims());
  const auto n = static_cast<float>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = (pred[i] - target[i]) / n;
  return g;
}

}  // namespace padprobe::kernels
