// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#include "asablade/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "asablade/error.hpp"

namespace asablade {

namespace {

std::size_t checked_volume(const std::vector<std::size_t>& shape) {
  require(!shape.empty(), "tensor rank must be at least 1");
  std::size_t n = 1;
  for (auto e : shape) {
    require(e > 0, "tensor extents must be positive, got " + shape_string(shape));
    n *= e;
  }
  return n;
}

void require_matrix(const Tensor& t, const char* name) {
  require(t.rank() == 2, std::string(name) + " must be rank 2, got " + shape_string(t.shape()));
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), data_(checked_volume(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(checked_volume(shape_) == data_.size(),
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_string(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  return std::accumulate(shape_.begin() + 1, shape_.end(), std::size_t{1},
                         std::multiplies<>());
}

void Tensor::check_finite(std::string_view what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      fail_numerical(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b, FlopCounter* flops) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul inner extents differ: " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
  Tensor out = Tensor::zeros(m, n);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const auto brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) = static_cast<float>(acc[j]);
  }
  if (flops) {
    flops->mults += m * n * k;
    flops->adds += m * n * (k - 1);
  }
  out.check_finite("matmul");
  return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b, float scale, FlopCounter* flops) {
  require_matrix(a, "matmul_transposed lhs");
  require_matrix(b, "matmul_transposed rhs");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, "matmul_transposed inner extents differ: " + shape_string(a.shape()) +
                             " x " + shape_string(b.shape()) + "^T");
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto br = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(ar[p]) * br[p];
      out(i, j) = static_cast<float>(acc * scale);
    }
  }
  if (flops) {
    // One extra multiply per entry for the scale.
    flops->mults += m * n * (k + 1);
    flops->adds += m * n * (k - 1);
  }
  out.check_finite("matmul_transposed");
  return out;
}

Tensor row_softmax(const Tensor& s, float scale, FlopCounter* flops) {
  require_matrix(s, "row_softmax input");
  s.check_finite("row_softmax input");
  const std::size_t m = s.rows(), n = s.cols();
  Tensor out = Tensor::zeros(m, n);
  std::vector<double> e(n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = s.row(i);
    double mx = -INFINITY;
    for (float v : r) mx = std::max(mx, static_cast<double>(v) * scale);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = std::exp(static_cast<double>(r[j]) * scale - mx);
      sum += e[j];
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) = static_cast<float>(e[j] / sum);
  }
  if (flops) {
    flops->mults += 2 * m * n;  // scale, normalize
    flops->adds += m * (2 * n - 1);
    flops->exps += m * n;
  }
  return out;
}

Tensor mean_pool_rows(const Tensor& x, std::size_t n) {
  require(n >= 1, "mean_pool_rows window must be >= 1");
  require_matrix(x, "mean_pool_rows input");
  const std::size_t rows = x.rows(), d = x.cols();
  const std::size_t out_rows = (rows + n - 1) / n;
  Tensor out = Tensor::zeros(out_rows, d);
  std::vector<double> acc(d);
  for (std::size_t j = 0; j < out_rows; ++j) {
    const std::size_t lo = j * n, hi = std::min(lo + n, rows);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = lo; r < hi; ++r) {
      const auto xr = x.row(r);
      for (std::size_t c = 0; c < d; ++c) acc[c] += xr[c];
    }
    for (std::size_t c = 0; c < d; ++c) out(j, c) = static_cast<float>(acc[c] / double(hi - lo));
  }
  return out;
}

Tensor dense_attention(const Tensor& q, const Tensor& k, const Tensor& v, float scale,
                       FlopCounter* flops) {
  require(k.rows() == v.rows(), "dense_attention: key and value lengths differ");
  const Tensor scores = matmul_transposed(q, k, scale, flops);
  const Tensor probs = row_softmax(scores, 1.0f, flops);
  return matmul(probs, v, flops);
}

}  // namespace asablade
