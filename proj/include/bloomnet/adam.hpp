#pragma once

#include <cmath>
#include <vector>

#include "bloomnet/layers.hpp"

namespace bloomnet {

/// Adam with bias correction. Moment buffers are created on the first step
/// and matched to tensors by position, so a fresh Adam means fresh state.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(const std::vector<Matrix<Scalar>*>& params, const std::vector<const Matrix<Scalar>*>& grads) {
    if (first_.empty()) {
      for (const auto* p : params) {
        first_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
        second_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, steps_);
    const double c2 = 1.0 - std::pow(beta2_, steps_);
    const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    const auto step_size = static_cast<Scalar>(lr_ / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = first_[i];
      auto& v = second_[i];
      const auto& g = *grads[i];
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
      params[i]->array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + eps);
    }
  }

  double learning_rate() const { return lr_; }
  long steps() const { return steps_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<Matrix<Scalar>> first_, second_;
};

}  // namespace bloomnet
