#pragma once

#include <algorithm>
#include <cassert>
#include <span>
#include <vector>

namespace lmtp {

/// Dense row-major matrix. Vectors are stored as 1 x n matrices.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* row(int r) {
    assert(r >= 0 && r < rows_);
    return data_.data() + static_cast<std::size_t>(r) * cols_;
  }
  const T* row(int r) const {
    assert(r >= 0 && r < rows_);
    return data_.data() + static_cast<std::size_t>(r) * cols_;
  }
  std::span<T> row_span(int r) { return {row(r), static_cast<std::size_t>(cols_)}; }
  std::span<const T> row_span(int r) const { return {row(r), static_cast<std::size_t>(cols_)}; }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), T(0)); }

  /// Appends the rows of `other` (same column count).
  void append_rows(const Matrix& other) {
    assert(rows_ == 0 || cols_ == other.cols_);
    if (rows_ == 0) cols_ = other.cols_;
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    rows_ += other.rows_;
  }
  void append_row(std::span<const T> values) {
    assert(rows_ == 0 || static_cast<std::size_t>(cols_) == values.size());
    if (rows_ == 0) cols_ = static_cast<int>(values.size());
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }
  void truncate_rows(int rows) {
    assert(rows <= rows_);
    rows_ = rows;
    data_.resize(static_cast<std::size_t>(rows_) * cols_);
  }

  bool operator==(const Matrix&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

template <typename U, typename T>
Matrix<U> matrix_cast(const Matrix<T>& m) {
  Matrix<U> out(m.rows(), m.cols());
  std::transform(m.data(), m.data() + m.size(), out.data(), [](T v) { return static_cast<U>(v); });
  return out;
}

/// Index of the largest value; ties resolve to the lowest index.
template <typename T>
int argmax(std::span<const T> values) {
  assert(!values.empty());
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace lmtp
