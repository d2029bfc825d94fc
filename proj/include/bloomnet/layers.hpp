#pragma once

// Primitive layers on channels x frames matrices. Every backward accumulates
// parameter gradients (+=) and returns the gradient w.r.t. its input.

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace bloomnet {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Fan-in scaled uniform fill, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar>
void fan_in_uniform(Matrix<Scalar>& m, double fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(dist(rng));
}

// ---- 1x1 convolution ----------------------------------------------------

template <typename Scalar>
Matrix<Scalar> pointwise_forward(const Matrix<Scalar>& weight, const Matrix<Scalar>& bias, const Matrix<Scalar>& x) {
  Matrix<Scalar> y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

template <typename Scalar>
Matrix<Scalar> pointwise_backward(const Matrix<Scalar>& weight, const Matrix<Scalar>& x, const Matrix<Scalar>& gy,
                                  Matrix<Scalar>& grad_weight, Matrix<Scalar>& grad_bias, bool need_input_grad = true) {
  grad_weight.noalias() += gy * x.transpose();
  grad_bias.col(0) += gy.rowwise().sum();
  if (!need_input_grad) return {};
  return weight.transpose() * gy;
}

// ---- PReLU (one slope per channel) ---------------------------------------

template <typename Scalar>
Matrix<Scalar> prelu_forward(const Matrix<Scalar>& slope, const Matrix<Scalar>& x) {
  return x.cwiseMax(Scalar(0)) + slope.col(0).asDiagonal() * x.cwiseMin(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> prelu_backward(const Matrix<Scalar>& slope, const Matrix<Scalar>& x, const Matrix<Scalar>& gy,
                              Matrix<Scalar>& grad_slope) {
  grad_slope.col(0) += (gy.array() * x.array().min(Scalar(0))).matrix().rowwise().sum();
  Matrix<Scalar> gx = (x.array() > Scalar(0)).select(gy, slope.col(0).asDiagonal() * gy);
  return gx;
}

// ---- Global layer norm (statistics over all channels and frames) ---------

template <typename Scalar>
struct GlobalNormCache {
  Matrix<Scalar> normalized;
  Scalar inv_std = 1;
};

template <typename Scalar>
Matrix<Scalar> gln_forward(const Matrix<Scalar>& gamma, const Matrix<Scalar>& beta, const Matrix<Scalar>& x,
                           double epsilon, GlobalNormCache<Scalar>* cache) {
  const Scalar mean = x.mean();
  const Scalar var = (x.array() - mean).square().mean();
  const Scalar inv_std = Scalar(1) / std::sqrt(var + static_cast<Scalar>(epsilon));
  Matrix<Scalar> normalized = (x.array() - mean) * inv_std;
  Matrix<Scalar> y = gamma.col(0).asDiagonal() * normalized;
  y.colwise() += beta.col(0);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> gln_backward(const Matrix<Scalar>& gamma, const GlobalNormCache<Scalar>& cache,
                            const Matrix<Scalar>& gy, Matrix<Scalar>& grad_gamma, Matrix<Scalar>& grad_beta) {
  grad_gamma.col(0) += (gy.array() * cache.normalized.array()).matrix().rowwise().sum();
  grad_beta.col(0) += gy.rowwise().sum();
  const Matrix<Scalar> g_norm = gamma.col(0).asDiagonal() * gy;
  const Scalar mean_g = g_norm.mean();
  const Scalar mean_gx = (g_norm.array() * cache.normalized.array()).mean();
  return (cache.inv_std * (g_norm.array() - mean_g - cache.normalized.array() * mean_gx)).matrix();
}

// ---- Depthwise convolution, odd kernel, same padding ---------------------

template <typename Scalar>
Matrix<Scalar> depthwise_forward(const Matrix<Scalar>& weight, const Matrix<Scalar>& bias, const Matrix<Scalar>& x) {
  const Eigen::Index frames = x.cols();
  const Eigen::Index pad = weight.cols() / 2;
  Matrix<Scalar> y(x.rows(), frames);
  y.colwise() = bias.col(0);
  for (Eigen::Index k = 0; k < weight.cols(); ++k) {
    const Eigen::Index offset = k - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index t1 = std::min<Eigen::Index>(frames, frames - offset);
    if (t1 <= t0) continue;
    y.middleCols(t0, t1 - t0).noalias() += weight.col(k).asDiagonal() * x.middleCols(t0 + offset, t1 - t0);
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> depthwise_backward(const Matrix<Scalar>& weight, const Matrix<Scalar>& x, const Matrix<Scalar>& gy,
                                  Matrix<Scalar>& grad_weight, Matrix<Scalar>& grad_bias) {
  const Eigen::Index frames = x.cols();
  const Eigen::Index pad = weight.cols() / 2;
  grad_bias.col(0) += gy.rowwise().sum();
  Matrix<Scalar> gx = Matrix<Scalar>::Zero(x.rows(), frames);
  for (Eigen::Index k = 0; k < weight.cols(); ++k) {
    const Eigen::Index offset = k - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -offset);
    const Eigen::Index t1 = std::min<Eigen::Index>(frames, frames - offset);
    if (t1 <= t0) continue;
    const auto g = gy.middleCols(t0, t1 - t0);
    const auto xin = x.middleCols(t0 + offset, t1 - t0);
    grad_weight.col(k) += (g.array() * xin.array()).matrix().rowwise().sum();
    gx.middleCols(t0 + offset, t1 - t0).noalias() += weight.col(k).asDiagonal() * g;
  }
  return gx;
}

// ---- Elementwise nonlinearities -------------------------------------------

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

// ---- Strided framing / overlap-add ----------------------------------------

/// kernel x frames view of a waveform; column f holds samples [f*stride, f*stride+kernel).
template <typename Scalar>
Eigen::Map<const Matrix<Scalar>, 0, Eigen::OuterStride<>> frame_view(const Vector<Scalar>& x, Eigen::Index kernel,
                                                                     Eigen::Index stride) {
  const Eigen::Index frames = (x.size() - kernel) / stride + 1;
  return {x.data(), kernel, frames, Eigen::OuterStride<>(stride)};
}

/// Sums column f of `frames_matrix` into out[f*stride, f*stride+kernel).
template <typename Scalar>
Vector<Scalar> overlap_add(const Matrix<Scalar>& frames_matrix, Eigen::Index stride, Eigen::Index length) {
  Vector<Scalar> out = Vector<Scalar>::Zero(length);
  const Eigen::Index kernel = frames_matrix.rows();
  for (Eigen::Index f = 0; f < frames_matrix.cols(); ++f) {
    const Eigen::Index start = f * stride;
    const Eigen::Index n = std::min<Eigen::Index>(kernel, length - start);
    if (n <= 0) break;
    out.segment(start, n) += frames_matrix.col(f).head(n);
  }
  return out;
}

}  // namespace bloomnet
