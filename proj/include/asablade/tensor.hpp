// Copyright 2026 The asablade Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace asablade {

/// Multiply/add/exp tallies for one run. Counters only grow; merge with +=.
struct FlopCounter {
  std::uint64_t mults = 0;
  std::uint64_t adds = 0;
  std::uint64_t exps = 0;

  std::uint64_t total() const { return mults + adds + exps; }
  FlopCounter& operator+=(const FlopCounter& o) {
    mults += o.mults;
    adds += o.adds;
    exps += o.exps;
    return *this;
  }
  bool operator==(const FlopCounter&) const = default;
};

/// Dense row-major float tensor. Rank-2 views (rows x cols) cover almost every
/// use; higher ranks exist for file I/O and grid-shaped metrics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values);
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // First extent, and the product of the remaining extents.
  std::size_t rows() const;
  std::size_t cols() const;

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  const std::vector<float>& storage() const { return data_; }

  /// Throws a numerical Error naming `what` if any entry is NaN or infinite.
  void check_finite(std::string_view what) const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// a[m x k] * b[k x n]; double accumulation, float result.
Tensor matmul(const Tensor& a, const Tensor& b, FlopCounter* flops = nullptr);

/// a[m x k] * b[n x k]^T, optionally scaled. The attention score product.
Tensor matmul_transposed(const Tensor& a, const Tensor& b, float scale = 1.0f,
                         FlopCounter* flops = nullptr);

/// Numerically stable softmax of scale*s along each row.
Tensor row_softmax(const Tensor& s, float scale = 1.0f, FlopCounter* flops = nullptr);

/// Row j is the mean of rows [j*n, min((j+1)*n, N)).
Tensor mean_pool_rows(const Tensor& x, std::size_t n);

/// Plain softmax(q k^T * scale) v through the dense route above.
Tensor dense_attention(const Tensor& q, const Tensor& k, const Tensor& v, float scale,
                       FlopCounter* flops = nullptr);

}  // namespace asablade
