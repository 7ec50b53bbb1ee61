#ifndef FEDSIM_TENSOR_HPP_
#define FEDSIM_TENSOR_HPP_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace fedsim {

// Dense row-major array of doubles. The only numeric carrier in the library.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor row(std::vector<double> values);  // shape [1, n]

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  // 2-D accessors; shape checked by the constructor sites, not here.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 0 : shape[1]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data[r * shape[1] + c];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Throws DimensionError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

// One named parameter tensor inside a ParamVector.
struct ParamSegment {
  std::string name;
  Tensor value;
};

// An ordered list of named tensors; the aggregatable form of model
// parameters. Segment order is fixed by the model architecture and must be
// identical across clients.
struct ParamVector {
  std::vector<ParamSegment> segments;

  std::size_t flat_len() const;
  std::vector<double> flatten() const;
  // Writes flat values back into this layout; length must match flat_len().
  void assign_from_flat(const std::vector<double>& flat);

  bool layout_matches(const ParamVector& other) const;
  bool bitwise_equal(const ParamVector& other) const;

  // Elementwise in-place ops used by optimizers and aggregation.
  void fill(double v);
  void add_scaled(const ParamVector& other, double scale);
  void scale(double s);
};

// Throws DimensionError when layouts differ.
void require_same_layout(const ParamVector& a, const ParamVector& b,
                         const char* where);

}  // namespace fedsim

#endif  // FEDSIM_TENSOR_HPP_
