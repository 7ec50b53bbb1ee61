#include "fedsim/tensor.hpp"

#include <cmath>
#include <cstring>

#include "fedsim/errors.hpp"

namespace fedsim {

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::row(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(where) + ": shape mismatch " +
                         shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

std::size_t ParamVector::flat_len() const {
  std::size_t n = 0;
  for (const auto& seg : segments) n += seg.value.numel();
  return n;
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(flat_len());
  for (const auto& seg : segments) {
    flat.insert(flat.end(), seg.value.data.begin(), seg.value.data.end());
  }
  return flat;
}

void ParamVector::assign_from_flat(const std::vector<double>& flat) {
  if (flat.size() != flat_len()) {
    throw DimensionError("assign_from_flat: length " +
                         std::to_string(flat.size()) + " vs layout length " +
                         std::to_string(flat_len()));
  }
  std::size_t off = 0;
  for (auto& seg : segments) {
    std::memcpy(seg.value.data.data(), flat.data() + off,
                seg.value.numel() * sizeof(double));
    off += seg.value.numel();
  }
}

bool ParamVector::layout_matches(const ParamVector& other) const {
  if (segments.size() != other.segments.size()) return false;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].name != other.segments[i].name) return false;
    if (segments[i].value.shape != other.segments[i].value.shape) return false;
  }
  return true;
}

bool ParamVector::bitwise_equal(const ParamVector& other) const {
  if (!layout_matches(other)) return false;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& a = segments[i].value.data;
    const auto& b = other.segments[i].value.data;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

void ParamVector::fill(double v) {
  for (auto& seg : segments) {
    for (double& x : seg.value.data) x = v;
  }
}

void ParamVector::add_scaled(const ParamVector& other, double scale) {
  require_same_layout(*this, other, "add_scaled");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    double* dst = segments[i].value.data.data();
    const double* src = other.segments[i].value.data.data();
    const std::size_t n = segments[i].value.numel();
    for (std::size_t j = 0; j < n; ++j) dst[j] += scale * src[j];
  }
}

void ParamVector::scale(double s) {
  for (auto& seg : segments) {
    for (double& x : seg.value.data) x *= s;
  }
}

void require_same_layout(const ParamVector& a, const ParamVector& b,
                         const char* where) {
  if (!a.layout_matches(b)) {
    throw DimensionError(std::string(where) +
                         ": parameter layouts differ (" +
                         std::to_string(a.segments.size()) + " vs " +
                         std::to_string(b.segments.size()) + " segments)");
  }
}

}  // namespace fedsim
