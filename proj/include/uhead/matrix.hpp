// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <type_traits>
#include <algorithm>
#include <vector>

#include "uhead/error.hpp"

namespace uhead {

/// Non-owning row-major view, row = sample.
template <class T> class MatrixView {
public:
  MatrixView() = default;
  MatrixView(std::span<T> data, std::size_t rows, std::size_t cols)
      : data_(data), rows_(rows), cols_(cols) {
    require(data.size() == rows * cols, ErrorCode::DimensionMismatch,
            "matrix view: buffer size does not match rows*cols");
  }
  // const view from a mutable one
  template <class U>
    requires std::is_same_v<T, const U>
  MatrixView(MatrixView<U> other) : data_(other.data()), rows_(other.rows()), cols_(other.cols()) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<T> data() const noexcept { return data_; }
  std::span<T> row(std::size_t i) const noexcept { return data_.subspan(i * cols_, cols_); }
  T &operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

private:
  std::span<T> data_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

template <class T> class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : data_(rows * cols, fill), rows_(rows), cols_(cols) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : data_(std::move(data)), rows_(rows), cols_(cols) {
    require(data_.size() == rows * cols, ErrorCode::DimensionMismatch,
            "matrix: buffer size does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> row(std::size_t i) noexcept { return std::span<T>(data_).subspan(i * cols_, cols_); }
  std::span<const T> row(std::size_t i) const noexcept {
    return std::span<const T>(data_).subspan(i * cols_, cols_);
  }
  T &operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const T &operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  MatrixView<T> view() noexcept { return {data_, rows_, cols_}; }
  MatrixView<const T> view() const noexcept { return {std::span<const T>(data_), rows_, cols_}; }
  operator MatrixView<const T>() const noexcept { return view(); }

  bool operator==(const Matrix &) const = default;

private:
  std::vector<T> data_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

/// Copies the listed rows of `src` into a new matrix.
template <class T>
Matrix<T> gather_rows(MatrixView<const T> src, std::span<const std::size_t> rows) {
  Matrix<T> out(rows.size(), src.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto r = src.row(rows[k]);
    std::copy(r.begin(), r.end(), out.row(k).begin());
  }
  return out;
}

} // namespace uhead
