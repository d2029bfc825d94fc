#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>

#include "bloomnet/errors.hpp"

namespace bloomnet {

/// Time-domain signal with its sample rate. Scalar defaults to double; models
/// running in single precision use BasicWave<float>.
template <typename Scalar = double>
struct BasicWave {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector samples;
  int sample_rate = 16000;

  BasicWave() = default;
  BasicWave(Vector s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  Eigen::Index length() const { return samples.size(); }

  template <typename Other>
  BasicWave<Other> cast() const {
    return BasicWave<Other>(samples.template cast<Other>(), sample_rate);
  }
};

using WaveSegment = BasicWave<double>;

constexpr double kVarianceEpsilon = 1e-12;
constexpr double kTargetEpsilon = 1e-12;
constexpr double kDefaultSiSdrCap = 100.0;

/// Throws unless the segment is non-empty, finite and has a positive rate.
template <typename Scalar>
void validate(const BasicWave<Scalar>& w) {
  if (w.length() < 1) throw Error(ErrorCode::LengthMismatch, "empty waveform");
  if (w.sample_rate <= 0) throw Error(ErrorCode::SampleRateMismatch, "non-positive sample rate");
  if (!w.samples.allFinite()) throw Error(ErrorCode::UnsupportedFormat, "non-finite samples");
}

/// Mean square of a signal.
template <typename Derived>
double power(const Eigen::MatrixBase<Derived>& x) {
  return x.template cast<double>().squaredNorm() / static_cast<double>(x.size());
}

/// Population variance (about the mean).
template <typename Derived>
double variance(const Eigen::MatrixBase<Derived>& x) {
  const auto xd = x.template cast<double>();
  const double mean = xd.mean();
  return (xd.array() - mean).square().mean();
}

struct StandardizeOptions {
  bool remove_mean = false;
};

/// Rescales to unit population variance. The mean is kept unless
/// `remove_mean` is set.
inline WaveSegment standardize(const WaveSegment& w, StandardizeOptions opts = {}) {
  validate(w);
  const double var = variance(w.samples);
  if (var < kVarianceEpsilon) throw Error(ErrorCode::ZeroVarianceSignal, "cannot standardize a constant signal");
  Eigen::VectorXd out = w.samples;
  if (opts.remove_mean) out.array() -= out.mean();
  out /= std::sqrt(var);
  return {std::move(out), w.sample_rate};
}

struct Mixture {
  WaveSegment mixture;
  WaveSegment scaled_noise;
  double noise_gain = 1.0;
};

/// Scales `noise` so that power(speech) / power(scaled_noise) hits `snr_db`
/// and adds it to `speech`.
inline Mixture mix_at_snr(const WaveSegment& speech, const WaveSegment& noise, double snr_db) {
  if (speech.length() != noise.length())
    throw Error(ErrorCode::LengthMismatch, "speech and noise lengths differ");
  if (speech.sample_rate != noise.sample_rate)
    throw Error(ErrorCode::SampleRateMismatch, "speech and noise sample rates differ");
  const double ps = power(speech.samples);
  const double pn = power(noise.samples);
  if (pn < kVarianceEpsilon) throw Error(ErrorCode::ZeroVarianceSignal, "noise has zero power");
  if (ps < kVarianceEpsilon) throw Error(ErrorCode::ZeroVarianceSignal, "speech has zero power");
  const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  Mixture m;
  m.noise_gain = gain;
  m.scaled_noise = WaveSegment(noise.samples * gain, noise.sample_rate);
  m.mixture = WaveSegment(speech.samples + m.scaled_noise.samples, speech.sample_rate);
  return m;
}

/// Scale-invariant SDR in dB. Accepts any pair of equally sized vector
/// expressions; accumulation is done in double. Values above `cap` (and
/// perfect reconstructions) are reported as `cap`.
template <typename DerivedS, typename DerivedE>
double si_sdr(const Eigen::MatrixBase<DerivedS>& target, const Eigen::MatrixBase<DerivedE>& estimate,
              double cap = kDefaultSiSdrCap) {
  if (target.size() != estimate.size()) throw Error(ErrorCode::LengthMismatch, "si_sdr operands differ in length");
  const Eigen::VectorXd s = target.template cast<double>();
  const Eigen::VectorXd e = estimate.template cast<double>();
  const double ss = s.squaredNorm();
  if (ss < kTargetEpsilon) throw Error(ErrorCode::ZeroTarget, "target has (near) zero energy");
  const double alpha = e.dot(s) / ss;
  const Eigen::VectorXd projection = alpha * s;
  const double err = (projection - e).squaredNorm();
  if (err < kTargetEpsilon) return cap;
  const double value = 10.0 * std::log10(projection.squaredNorm() / err);
  return std::min(value, cap);
}

inline double si_sdr(const WaveSegment& s, const WaveSegment& s_hat, double cap = kDefaultSiSdrCap) {
  return si_sdr(s.samples, s_hat.samples, cap);
}

template <typename DerivedS, typename DerivedE>
double neg_si_sdr_loss(const Eigen::MatrixBase<DerivedS>& target, const Eigen::MatrixBase<DerivedE>& estimate,
                       double cap = kDefaultSiSdrCap) {
  return -si_sdr(target, estimate, cap);
}

inline double neg_si_sdr_loss(const WaveSegment& s, const WaveSegment& s_hat, double cap = kDefaultSiSdrCap) {
  return -si_sdr(s, s_hat, cap);
}

/// Loss value together with d(loss)/d(estimate).
struct LossWithGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// With a = ŝᵀs, α = a/‖s‖² and E = ‖αs − ŝ‖², the loss gradient is
/// (20/ln10)·((ŝ − αs)/E − s/a). It is zero where the cap is active.
template <typename DerivedS, typename DerivedE>
LossWithGradient neg_si_sdr_loss_with_grad(const Eigen::MatrixBase<DerivedS>& target,
                                           const Eigen::MatrixBase<DerivedE>& estimate,
                                           double cap = kDefaultSiSdrCap) {
  if (target.size() != estimate.size()) throw Error(ErrorCode::LengthMismatch, "loss operands differ in length");
  const Eigen::VectorXd s = target.template cast<double>();
  const Eigen::VectorXd e = estimate.template cast<double>();
  const double ss = s.squaredNorm();
  if (ss < kTargetEpsilon) throw Error(ErrorCode::ZeroTarget, "target has (near) zero energy");
  const double a = e.dot(s);
  const double alpha = a / ss;
  const Eigen::VectorXd residual = e - alpha * s;
  const double err = residual.squaredNorm();

  LossWithGradient out;
  out.gradient = Eigen::VectorXd::Zero(s.size());
  if (err < kTargetEpsilon) {
    out.loss = -cap;
    return out;
  }
  const double value = 10.0 * std::log10(alpha * alpha * ss / err);
  if (value >= cap) {
    out.loss = -cap;
    return out;
  }
  out.loss = -value;
  const double k = 20.0 / std::numbers::ln10;
  out.gradient = k * (residual / err - s / a);
  return out;
}

/// SI-SDR of the estimate minus SI-SDR of the unprocessed mixture.
template <typename DerivedS, typename DerivedX, typename DerivedE>
double si_sdr_improvement(const Eigen::MatrixBase<DerivedS>& target, const Eigen::MatrixBase<DerivedX>& mixture,
                          const Eigen::MatrixBase<DerivedE>& estimate, double cap = kDefaultSiSdrCap) {
  return si_sdr(target, estimate, cap) - si_sdr(target, mixture, cap);
}

inline double si_sdr_improvement(const WaveSegment& s, const WaveSegment& x, const WaveSegment& s_hat,
                                 double cap = kDefaultSiSdrCap) {
  return si_sdr_improvement(s.samples, x.samples, s_hat.samples, cap);
}

}  // namespace bloomnet
