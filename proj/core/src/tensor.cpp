#include "padprobe/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace padprobe {

std::string shape_to_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i != 0) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::size_t element_count(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

void validate_dims(const Shape& dims) {
  if (dims.empty()) throw DimensionError("tensor needs at least one dimension");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) {
      throw DimensionError("tensor axis " + std::to_string(i) + " has extent 0 in " +
                           shape_to_string(dims));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape dims, float fill) : dims_(std::move(dims)) {
  validate_dims(dims_);
  data_.assign(element_count(dims_), fill);
}

Tensor::Tensor(Shape dims, std::vector<float> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
  validate_dims(dims_);
  if (data_.size() != element_count(dims_)) {
    throw DimensionError("tensor of shape " + shape_to_string(dims_) + " given " +
                         std::to_string(data_.size()) + " values");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(dims_));
  }
  return dims_[axis];
}

void Tensor::fill(float v) noexcept { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape dims) const {
  if (element_count(dims) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(dims_) + " to " +
                         shape_to_string(dims));
  }
  return Tensor(std::move(dims), data_);
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return dims_ == other.dims_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(t.dims()));
  }
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_to_string(a.dims()) +
                         " vs " + shape_to_string(b.dims()));
  }
}

}  // namespace padprobe
