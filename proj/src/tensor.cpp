#include "dst2r/tensor.hpp"

#include <cmath>
#include <string>

namespace dst2r {

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw shape_error("Shape: at least one mode required");
  for (std::size_t d : dims_) {
    if (d == 0) throw shape_error("Shape: every extent must be >= 1");
  }
}

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::vector<std::size_t>(dims)) {}

std::size_t Shape::extent(std::size_t mode) const {
  if (mode >= dims_.size())
    throw shape_error("Shape: mode " + std::to_string(mode) +
                      " out of range for order " + std::to_string(dims_.size()));
  return dims_[mode];
}

std::size_t Shape::num_elements() const {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

Shape concat(const Shape& a, const Shape& b) {
  std::vector<std::size_t> dims = a.dims();
  dims.insert(dims.end(), b.dims().begin(), b.dims().end());
  return Shape(std::move(dims));
}

std::size_t linear_index(const Shape& shape, std::span<const std::size_t> idx) {
  if (idx.size() != shape.order())
    throw shape_error("linear_index: index order mismatch");
  std::size_t lin = 0;
  std::size_t stride = 1;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= shape.dims()[k])
      throw shape_error("linear_index: index out of range at mode " +
                        std::to_string(k));
    lin += idx[k] * stride;
    stride *= shape.dims()[k];
  }
  return lin;
}

std::vector<std::size_t> multi_index(const Shape& shape, std::size_t linear) {
  if (linear >= shape.num_elements())
    throw shape_error("multi_index: linear index out of range");
  std::vector<std::size_t> idx(shape.order());
  for (std::size_t k = 0; k < shape.order(); ++k) {
    idx[k] = linear % shape.dims()[k];
    linear /= shape.dims()[k];
  }
  return idx;
}

DenseTensor::DenseTensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_.num_elements(), 0.0) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.num_elements())
    throw shape_error("DenseTensor: data size does not match shape");
}

double DenseTensor::at(std::span<const std::size_t> idx) const {
  return data_[linear_index(shape_, idx)];
}

double& DenseTensor::at(std::span<const std::size_t> idx) {
  return data_[linear_index(shape_, idx)];
}

double DenseTensor::at(std::initializer_list<std::size_t> idx) const {
  return at(std::span<const std::size_t>(idx.begin(), idx.size()));
}

double& DenseTensor::at(std::initializer_list<std::size_t> idx) {
  return at(std::span<const std::size_t>(idx.begin(), idx.size()));
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) throw shape_error("Matrix: zero dimension");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw shape_error("Matrix: zero dimension");
  if (data_.size() != rows * cols)
    throw shape_error("Matrix: data size does not match dimensions");
}

double Matrix::at(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= cols_) throw shape_error("Matrix: index out of range");
  return data_[r + rows_ * c];
}

double& Matrix::at(std::size_t r, std::size_t c) {
  if (r >= rows_ || c >= cols_) throw shape_error("Matrix: index out of range");
  return data_[r + rows_ * c];
}

DenseTensor outer_product(const DenseTensor& a, const DenseTensor& b) {
  DenseTensor out(concat(a.shape(), b.shape()));
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  for (std::size_t j = 0; j < nb; ++j) {
    const double bj = b[j];
    for (std::size_t i = 0; i < na; ++i) out[i + na * j] = a[i] * bj;
  }
  return out;
}

const std::vector<double>& vec(const DenseTensor& t) { return t.data(); }

double inner_product(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape())
    throw shape_error("inner_product: shapes must match");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

DenseTensor contracted_product(const DenseTensor& a, const DenseTensor& b,
                               std::size_t n_contracted) {
  if (n_contracted > a.order() || n_contracted > b.order())
    throw shape_error("contracted_product: not enough modes to contract");
  const std::size_t la = a.order() - n_contracted;
  for (std::size_t i = 0; i < n_contracted; ++i) {
    if (a.shape().dims()[la + i] != b.shape().dims()[i])
      throw shape_error("contracted_product: contracted extents differ at " +
                        std::to_string(i));
  }
  std::size_t nl = 1;
  for (std::size_t i = 0; i < la; ++i) nl *= a.shape().dims()[i];
  std::size_t nk = 1;
  for (std::size_t i = 0; i < n_contracted; ++i) nk *= b.shape().dims()[i];
  std::size_t nr = 1;
  for (std::size_t i = n_contracted; i < b.order(); ++i)
    nr *= b.shape().dims()[i];

  std::vector<std::size_t> out_dims;
  for (std::size_t i = 0; i < la; ++i) out_dims.push_back(a.shape().dims()[i]);
  for (std::size_t i = n_contracted; i < b.order(); ++i)
    out_dims.push_back(b.shape().dims()[i]);
  if (out_dims.empty()) out_dims.push_back(1);

  DenseTensor out((Shape(out_dims)));
  // Both operands are column-major over (leading, contracted) and
  // (contracted, trailing); the contraction sums k in ascending order.
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t k = 0; k < nk; ++k) {
      const double bv = b[k + nk * r];
      if (bv == 0.0) continue;
      for (std::size_t l = 0; l < nl; ++l) {
        out[l + nl * r] += a[l + nl * k] * bv;
      }
    }
  }
  return out;
}

DenseTensor mode_n_product(const DenseTensor& t, std::span<const double> v,
                           std::size_t mode) {
  if (mode >= t.order()) throw shape_error("mode_n_product: mode out of range");
  const std::size_t dn = t.shape().dims()[mode];
  if (v.size() != dn)
    throw shape_error("mode_n_product: vector length does not match extent");

  std::size_t inner = 1;
  for (std::size_t m = 0; m < mode; ++m) inner *= t.shape().dims()[m];
  std::size_t outer = 1;
  for (std::size_t m = mode + 1; m < t.order(); ++m)
    outer *= t.shape().dims()[m];

  std::vector<std::size_t> out_dims;
  for (std::size_t m = 0; m < t.order(); ++m)
    if (m != mode) out_dims.push_back(t.shape().dims()[m]);
  if (out_dims.empty()) out_dims.push_back(1);

  DenseTensor out((Shape(out_dims)));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < dn; ++i) {
      const double f = v[i];
      if (f == 0.0) continue;
      const std::size_t base = (o * dn + i) * inner;
      for (std::size_t in = 0; in < inner; ++in) {
        out[o * inner + in] += f * t[base + in];
      }
    }
  }
  return out;
}

Matrix matricize(const DenseTensor& t, std::size_t mode) {
  if (mode >= t.order()) throw shape_error("matricize: mode out of range");
  const std::size_t dn = t.shape().dims()[mode];
  const std::size_t ncols = t.size() / dn;
  Matrix out(dn, ncols);
  // Column strides J_l = prod of extents before mode l, skipping `mode`.
  std::vector<std::size_t> strides(t.order(), 0);
  std::size_t acc = 1;
  for (std::size_t l = 0; l < t.order(); ++l) {
    if (l == mode) continue;
    strides[l] = acc;
    acc *= t.shape().dims()[l];
  }
  for (std::size_t lin = 0; lin < t.size(); ++lin) {
    std::vector<std::size_t> idx = multi_index(t.shape(), lin);
    std::size_t col = 0;
    for (std::size_t l = 0; l < t.order(); ++l)
      if (l != mode) col += idx[l] * strides[l];
    out.at(idx[mode], col) = t[lin];
  }
  return out;
}

DenseTensor dematricize(const Matrix& m, const Shape& shape, std::size_t mode) {
  if (mode >= shape.order()) throw shape_error("dematricize: mode out of range");
  const std::size_t dn = shape.dims()[mode];
  if (m.rows() != dn || m.cols() != shape.num_elements() / dn)
    throw shape_error("dematricize: matrix dimensions do not match shape");
  DenseTensor out(shape);
  std::vector<std::size_t> strides(shape.order(), 0);
  std::size_t acc = 1;
  for (std::size_t l = 0; l < shape.order(); ++l) {
    if (l == mode) continue;
    strides[l] = acc;
    acc *= shape.dims()[l];
  }
  for (std::size_t lin = 0; lin < out.size(); ++lin) {
    std::vector<std::size_t> idx = multi_index(shape, lin);
    std::size_t col = 0;
    for (std::size_t l = 0; l < shape.order(); ++l)
      if (l != mode) col += idx[l] * strides[l];
    out[lin] = m.at(idx[mode], col);
  }
  return out;
}

double frobenius_norm(const DenseTensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
  return std::sqrt(acc);
}

double l1_norm(const DenseTensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += std::abs(t[i]);
  return acc;
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape()) throw shape_error("add: shapes must match");
  DenseTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

DenseTensor subtract(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape()) throw shape_error("subtract: shapes must match");
  DenseTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

DenseTensor scale(const DenseTensor& t, double alpha) {
  DenseTensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = alpha * t[i];
  return out;
}

DenseTensor axpy(double alpha, const DenseTensor& x, const DenseTensor& y) {
  if (x.shape() != y.shape()) throw shape_error("axpy: shapes must match");
  DenseTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i] + y[i];
  return out;
}

}  // namespace dst2r
