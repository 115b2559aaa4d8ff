#pragma once

// Row-wise numeric kernels shared by the model and the heads.
//
// Each output element is accumulated in a fixed order that depends only on
// the inner dimension, never on the number of rows in the call. Combined with
// -ffp-contract=off this keeps per-row results bit-identical across batch
// shapes.

#include <cmath>
#include <span>
#include <vector>

#include "lmtp/matrix.hpp"

namespace lmtp::detail {

/// y[r] = x[r] * W + b (W is in x out, b is 1 x out or empty).
template <typename T>
void linear_rows(const T* x, int rows, int in, const Matrix<T>& w, const Matrix<T>* b, T* y) {
  const int out = w.cols();
  for (int r = 0; r < rows; ++r) {
    T* yr = y + static_cast<std::size_t>(r) * out;
    if (b != nullptr && !b->empty()) {
      const T* bv = b->data();
      for (int o = 0; o < out; ++o) yr[o] = bv[o];
    } else {
      for (int o = 0; o < out; ++o) yr[o] = T(0);
    }
  }
  int r = 0;
  for (; r + 4 <= rows; r += 4) {
    const T* x0 = x + static_cast<std::size_t>(r) * in;
    const T* x1 = x0 + in;
    const T* x2 = x1 + in;
    const T* x3 = x2 + in;
    T* y0 = y + static_cast<std::size_t>(r) * out;
    T* y1 = y0 + out;
    T* y2 = y1 + out;
    T* y3 = y2 + out;
    for (int i = 0; i < in; ++i) {
      const T* wr = w.row(i);
      const T a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
      for (int o = 0; o < out; ++o) {
        const T wv = wr[o];
        y0[o] += a0 * wv;
        y1[o] += a1 * wv;
        y2[o] += a2 * wv;
        y3[o] += a3 * wv;
      }
    }
  }
  for (; r < rows; ++r) {
    const T* xr = x + static_cast<std::size_t>(r) * in;
    T* yr = y + static_cast<std::size_t>(r) * out;
    for (int i = 0; i < in; ++i) {
      const T* wr = w.row(i);
      const T a = xr[i];
      for (int o = 0; o < out; ++o) yr[o] += a * wr[o];
    }
  }
}

template <typename T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>* b) {
  Matrix<T> y(x.rows(), w.cols());
  linear_rows(x.data(), x.rows(), x.cols(), w, b, y.data());
  return y;
}

constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer norm. Optionally records xhat and 1/sigma for backprop.
template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, Matrix<T>* xhat_out = nullptr,
                     std::vector<T>* rstd_out = nullptr) {
  const int rows = x.rows();
  const int d = x.cols();
  Matrix<T> y(rows, d);
  if (xhat_out != nullptr) *xhat_out = Matrix<T>(rows, d);
  if (rstd_out != nullptr) rstd_out->assign(rows, T(0));
  for (int r = 0; r < rows; ++r) {
    const T* xr = x.row(r);
    T mean = 0;
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int c = 0; c < d; ++c) {
      const T dv = xr[c] - mean;
      var += dv * dv;
    }
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    T* yr = y.row(r);
    for (int c = 0; c < d; ++c) {
      const T xh = (xr[c] - mean) * rstd;
      if (xhat_out != nullptr) (*xhat_out)(r, c) = xh;
      yr[c] = xh * gain(0, c) + bias(0, c);
    }
    if (rstd_out != nullptr) (*rstd_out)[r] = rstd;
  }
  return y;
}

template <typename T>
T gelu(T x) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(kC * (x + static_cast<T>(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  constexpr T kC = static_cast<T>(0.7978845608028654);
  const T u = kC * (x + static_cast<T>(0.044715) * x * x * x);
  const T t = std::tanh(u);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * kC * (T(1) + static_cast<T>(3 * 0.044715) * x * x);
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
T silu(T x) {
  return x * sigmoid(x);
}

template <typename T>
T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

template <typename T>
bool all_finite(std::span<const T> values) {
  for (T v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace lmtp::detail
