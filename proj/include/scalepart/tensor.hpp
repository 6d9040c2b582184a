#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace scalepart {

// Dense row-major binary32 tensor. Most kernels view it as a matrix of rows() x cols(), where
// cols() is the last dimension and rows() the product of the leading ones.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::initializer_list<std::size_t> shape, float fill = 0.0f);
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f) { return Tensor({rows, cols}, fill); }
  static Tensor vector(std::size_t n, float fill = 0.0f) { return Tensor({n}, fill); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : data_.size() / cols(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::span<float> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(float v);
  void zero() { fill(0.0f); }
  void reshape(std::vector<std::size_t> shape);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// GEMM variants over the matrix view. Products are formed in binary64 and rounded once.
// With accumulate = true the product is added to the existing contents of c.
void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);     // a * b
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);  // a^T * b
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);  // a * b^T

Tensor transpose(const Tensor& a);
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, float s);
// Column sums of the matrix view, accumulated into out (length cols()).
void add_column_sums(const Tensor& a, Tensor& out);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
void scatter_add_rows(const Tensor& src, std::span<const std::size_t> rows, Tensor& dst);
double dot(std::span<const float> a, std::span<const float> b);

}  // namespace scalepart
