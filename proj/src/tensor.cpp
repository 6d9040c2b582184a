#include "scalepart/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/Core>

#include "scalepart/error.hpp"

namespace scalepart {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require(bool ok, const char* what, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw ValidationError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

void prepare_output(Tensor& c, std::size_t m, std::size_t n, bool accumulate) {
  if (accumulate) {
    if (c.rows() != m || c.cols() != n) throw ValidationError("matmul: accumulate target has wrong shape");
  } else if (c.rows() != m || c.cols() != n || c.rank() != 2) {
    c = Tensor::matrix(m, n);
  }
}

}  // namespace

Tensor::Tensor(std::initializer_list<std::size_t> shape, float fill)
    : Tensor(std::vector<std::size_t>(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, float fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) throw ValidationError("Tensor: data length does not match shape");
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(std::vector<std::size_t> shape) {
  if (product(shape) != data_.size()) throw ValidationError("Tensor::reshape: element count changes");
  shape_ = std::move(shape);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;

// Products accumulate in binary64 and round once into `c`.
template <typename Product>
void store_product(Tensor& c, std::size_t m, std::size_t n, bool accumulate, const Product& product) {
  prepare_output(c, m, n, accumulate);
  Eigen::Map<RowMajor> out(c.data(), Eigen::Index(m), Eigen::Index(n));
  if (accumulate) {
    RowMajorD acc = out.cast<double>();
    acc.noalias() += product;
    out = acc.cast<float>();
  } else {
    RowMajorD acc(m, n);
    acc.noalias() = product;
    out = acc.cast<float>();
  }
}

ConstMap view(const Tensor& t) { return ConstMap(t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }

}  // namespace

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  require(a.cols() == b.rows(), "matmul", a, b);
  const RowMajorD ad = view(a).cast<double>(), bd = view(b).cast<double>();
  store_product(c, a.rows(), b.cols(), accumulate, ad * bd);
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  const RowMajorD ad = view(a).cast<double>(), bd = view(b).cast<double>();
  store_product(c, a.cols(), b.cols(), accumulate, ad.transpose() * bd);
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  const RowMajorD ad = view(a).cast<double>(), bd = view(b).cast<double>();
  store_product(c, a.rows(), b.rows(), accumulate, ad * bd.transpose());
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  }
  return t;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) require(false, "add_inplace", a, b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void scale_inplace(Tensor& a, float s) {
  for (auto& v : a.values()) v *= s;
}

void add_column_sums(const Tensor& a, Tensor& out) {
  const std::size_t n = a.cols();
  if (out.size() != n) require(false, "add_column_sums", a, out);
  std::vector<double> acc(n);
  for (std::size_t j = 0; j < n; ++j) acc[j] = out[j];
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const float* r = a.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] += r[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<float>(acc[j]);
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t n = a.cols();
  Tensor out = Tensor::matrix(rows.size(), n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(a.data() + rows[i] * n, n, out.data() + i * n);
  }
  return out;
}

void scatter_add_rows(const Tensor& src, std::span<const std::size_t> rows, Tensor& dst) {
  const std::size_t n = src.cols();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    float* d = dst.data() + rows[i] * n;
    const float* s = src.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) d[j] += s[j];
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * b[i];
  return acc;
}

}  // namespace scalepart
