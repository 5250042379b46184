#pragma once

// Batched MLP kernels. The OpenMP versions split the batch into fixed-size
// sample blocks, so their reduction order does not depend on the thread
// count; the *_reference versions are the plain per-sample loops they are
// tested against.

#include <cstddef>
#include <span>
#include <vector>

#include "dmpo/nn/mlp.hpp"

namespace dmpo::nn {

/// Row-major dense matrix, one sample per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, 0.0);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Layer activations for a whole batch; values[0] is the input, values.back() the output.
struct BatchTape {
  std::vector<Matrix> values;
  const Matrix& output() const { return values.back(); }
};

inline constexpr std::size_t kSampleBlock = 32;

void forward_batch(const Mlp& net, const Matrix& input, BatchTape& tape);
void forward_batch_reference(const Mlp& net, const Matrix& input, BatchTape& tape);

/// Accumulates sum over samples of d(out_grad_b . y_b)/d(params) into param_grad.
void backward_batch(const Mlp& net, const BatchTape& tape, const Matrix& out_grad, std::span<double> param_grad);
void backward_batch_reference(const Mlp& net, const BatchTape& tape, const Matrix& out_grad,
                              std::span<double> param_grad);

}  // namespace dmpo::nn
