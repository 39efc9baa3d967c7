#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace padprobe {

using Shape = std::vector<std::size_t>;

/// Raised when tensor extents disagree with what an operation needs.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller breaks an API contract (wrong graph, non-scalar loss, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_to_string(const Shape& dims);

/// Dense row-major float32 array. Activations use NCHW order.
///
/// A default-constructed tensor is empty (rank 0, no data) and only serves as
/// a placeholder; every constructed tensor has at least one dimension and all
/// extents >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, float fill = 0.0F);
  Tensor(Shape dims, std::vector<float> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  [[nodiscard]] const Shape& dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const;
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::span<float> values() noexcept { return data_; }
  [[nodiscard]] std::span<const float> values() const noexcept { return data_; }
  [[nodiscard]] float* data() noexcept { return data_.data(); }
  [[nodiscard]] const float* data() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  // NCHW element access; only valid on rank-4 tensors.
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }

  void fill(float v) noexcept;
  /// Same data, new extents. Element count must match.
  [[nodiscard]] Tensor reshaped(Shape dims) const;

  /// Byte-level equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
  [[nodiscard]] bool bit_equal(const Tensor& other) const noexcept;

 private:
  Shape dims_;
  std::vector<float> data_;
};

std::size_t element_count(const Shape& dims);

void require_rank(const Tensor& t, std::size_t rank, const char* what);
void require_same_dims(const Tensor& a, const Tensor& b, const char* what);

}  // namespace padprobe
