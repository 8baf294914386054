#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "dst2r/errors.hpp"

namespace dst2r {

/// Ordered list of mode extents. A shape has at least one mode and every
/// extent is >= 1. Mode indices are 0-based throughout the API.
class Shape {
 public:
  explicit Shape(std::vector<std::size_t> dims);
  Shape(std::initializer_list<std::size_t> dims);

  std::size_t order() const { return dims_.size(); }
  std::size_t extent(std::size_t mode) const;
  std::size_t num_elements() const;
  const std::vector<std::size_t>& dims() const { return dims_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return dims_ != other.dims_; }

 private:
  std::vector<std::size_t> dims_;
};

/// Concatenation of two mode lists, (a_1..a_n, b_1..b_m).
Shape concat(const Shape& a, const Shape& b);

/// Linear position of a multi-index in canonical order (mode 0 fastest;
/// a 2-mode tensor is stored column by column).
std::size_t linear_index(const Shape& shape, std::span<const std::size_t> idx);

/// Inverse of linear_index.
std::vector<std::size_t> multi_index(const Shape& shape, std::size_t linear);

/// Dense tensor of doubles in canonical order. Value semantics; all free
/// operations below are pure and never mutate their arguments, so shared
/// instances are safe to read concurrently.
class DenseTensor {
 public:
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.order(); }
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t linear) const { return data_[linear]; }
  double& operator[](std::size_t linear) { return data_[linear]; }

  double at(std::span<const std::size_t> idx) const;
  double& at(std::span<const std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;
  double& at(std::initializer_list<std::size_t> idx);

  template <typename... Ix>
  double operator()(Ix... ix) const {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    return data_[linear_index(shape_, idx)];
  }
  template <typename... Ix>
  double& operator()(Ix... ix) {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    return data_[linear_index(shape_, idx)];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Dense column-major matrix; at(r, c) addresses row r, column c.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

/// C[i_1..i_n, j_1..j_m] = A[i_1..i_n] * B[j_1..j_m].
DenseTensor outer_product(const DenseTensor& a, const DenseTensor& b);

/// The canonical-order flattening. The storage already is the vectorization,
/// so this is just the data vector.
const std::vector<double>& vec(const DenseTensor& t);

/// Sum of elementwise products; shapes must match exactly.
double inner_product(const DenseTensor& a, const DenseTensor& b);

/// Contraction over the last n_contracted modes of a against the first
/// n_contracted modes of b; the generalization of the matrix product.
/// Result shape is a's leading modes followed by b's trailing modes; when
/// both lists are empty the result is a single-element tensor of shape (1).
DenseTensor contracted_product(const DenseTensor& a, const DenseTensor& b,
                               std::size_t n_contracted);

/// Contraction of mode `mode` with a vector of matching length. The result
/// drops that mode; contracting the only mode of a vector yields shape (1).
DenseTensor mode_n_product(const DenseTensor& t, std::span<const double> v,
                           std::size_t mode);

/// Mode-n unfolding: rows index mode n, columns index the remaining modes,
/// earlier modes varying fastest.
Matrix matricize(const DenseTensor& t, std::size_t mode);

/// Inverse of matricize for a matrix produced from `shape` at `mode`.
DenseTensor dematricize(const Matrix& m, const Shape& shape, std::size_t mode);

double frobenius_norm(const DenseTensor& t);
double l1_norm(const DenseTensor& t);

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor subtract(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& t, double alpha);
/// alpha * x + y.
DenseTensor axpy(double alpha, const DenseTensor& x, const DenseTensor& y);

}  // namespace dst2r
