#pragma once

// The four submodule kinds: shared encoder, residual separator block,
// block-specific masker and decoder.

#include <random>
#include <string>

#include "bloomnet/config.hpp"
#include "bloomnet/errors.hpp"
#include "bloomnet/layers.hpp"

namespace bloomnet {

/// Strided 1-D conv (1 -> D channels) followed by a rectifier.
template <typename Scalar>
struct Encoder {
  Matrix<Scalar> weight;  // D x kernel
  Matrix<Scalar> bias;    // D x 1
  int stride = 1;
  bool rectify = true;

  Encoder() = default;
  explicit Encoder(const ModelConfig& cfg)
      : weight(Matrix<Scalar>::Zero(cfg.latent_channels, cfg.enc_kernel)),
        bias(Matrix<Scalar>::Zero(cfg.latent_channels, 1)),
        stride(cfg.enc_stride),
        rectify(cfg.encoder_rectify) {}

  int kernel() const { return static_cast<int>(weight.cols()); }

  void init(std::mt19937_64& rng) {
    fan_in_uniform(weight, kernel(), rng);
    fan_in_uniform(bias, kernel(), rng);
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("weight", weight);
    f("bias", bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("weight", weight);
    f("bias", bias);
  }

  Matrix<Scalar> forward(const Vector<Scalar>& x) const {
    if (x.size() < kernel())
      throw Error(ErrorCode::InputTooShort,
                  "input has " + std::to_string(x.size()) + " samples, encoder kernel is " + std::to_string(kernel()));
    Matrix<Scalar> h = weight * frame_view(x, kernel(), stride);
    h.colwise() += bias.col(0);
    if (rectify) h = h.cwiseMax(Scalar(0));
    return h;
  }

  /// `h` is the forward output; the input gradient is never needed.
  void backward(const Vector<Scalar>& x, const Matrix<Scalar>& h, const Matrix<Scalar>& gh, Encoder& grad) const {
    Matrix<Scalar> g = gh;
    if (rectify) g = (h.array() > Scalar(0)).select(gh, Matrix<Scalar>::Zero(gh.rows(), gh.cols()));
    grad.weight.noalias() += g * frame_view(x, kernel(), stride).transpose();
    grad.bias.col(0) += g.rowwise().sum();
  }
};

template <typename Scalar>
struct SeparatorCache {
  Matrix<Scalar> input;
  Matrix<Scalar> expanded;  // after the opening 1x1 conv
  GlobalNormCache<Scalar> norm1;
  Matrix<Scalar> normed1;
  Matrix<Scalar> depthwise;
  GlobalNormCache<Scalar> norm2;
  Matrix<Scalar> normed2;
};

/// Residual block body: 1x1 conv D->H, PReLU, gLN, depthwise conv, PReLU,
/// gLN, 1x1 conv H->D. The residual sum happens in the network.
template <typename Scalar>
struct SeparatorBlock {
  Matrix<Scalar> in_weight, in_bias;      // H x D, H x 1
  Matrix<Scalar> prelu1;                  // H x 1
  Matrix<Scalar> norm1_gamma, norm1_beta; // H x 1
  Matrix<Scalar> dw_weight, dw_bias;      // H x P, H x 1
  Matrix<Scalar> prelu2;
  Matrix<Scalar> norm2_gamma, norm2_beta;
  Matrix<Scalar> out_weight, out_bias;    // D x H, D x 1
  double norm_epsilon = 1e-8;

  SeparatorBlock() = default;
  explicit SeparatorBlock(const ModelConfig& cfg) {
    const int d = cfg.latent_channels, h = cfg.sep_hidden;
    in_weight = Matrix<Scalar>::Zero(h, d);
    in_bias = Matrix<Scalar>::Zero(h, 1);
    prelu1 = Matrix<Scalar>::Constant(h, 1, Scalar(0.25));
    norm1_gamma = Matrix<Scalar>::Ones(h, 1);
    norm1_beta = Matrix<Scalar>::Zero(h, 1);
    dw_weight = Matrix<Scalar>::Zero(h, cfg.sep_kernel);
    dw_bias = Matrix<Scalar>::Zero(h, 1);
    prelu2 = Matrix<Scalar>::Constant(h, 1, Scalar(0.25));
    norm2_gamma = Matrix<Scalar>::Ones(h, 1);
    norm2_beta = Matrix<Scalar>::Zero(h, 1);
    out_weight = Matrix<Scalar>::Zero(d, h);
    out_bias = Matrix<Scalar>::Zero(d, 1);
    norm_epsilon = cfg.norm_epsilon;
  }

  void init(std::mt19937_64& rng) {
    fan_in_uniform(in_weight, in_weight.cols(), rng);
    fan_in_uniform(in_bias, in_weight.cols(), rng);
    fan_in_uniform(dw_weight, dw_weight.cols(), rng);
    fan_in_uniform(dw_bias, dw_weight.cols(), rng);
    fan_in_uniform(out_weight, out_weight.cols(), rng);
    fan_in_uniform(out_bias, out_weight.cols(), rng);
  }

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("in_weight", self.in_weight);
    f("in_bias", self.in_bias);
    f("prelu1", self.prelu1);
    f("norm1_gamma", self.norm1_gamma);
    f("norm1_beta", self.norm1_beta);
    f("dw_weight", self.dw_weight);
    f("dw_bias", self.dw_bias);
    f("prelu2", self.prelu2);
    f("norm2_gamma", self.norm2_gamma);
    f("norm2_beta", self.norm2_beta);
    f("out_weight", self.out_weight);
    f("out_bias", self.out_bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each_tensor(F&& f) const { visit(*this, f); }

  Matrix<Scalar> forward(const Matrix<Scalar>& input, SeparatorCache<Scalar>* cache = nullptr) const {
    if (input.rows() != in_weight.cols())
      throw Error(ErrorCode::ShapeMismatch, "separator expects " + std::to_string(in_weight.cols()) +
                                                " channels, got " + std::to_string(input.rows()));
    Matrix<Scalar> expanded = pointwise_forward(in_weight, in_bias, input);
    GlobalNormCache<Scalar> n1, n2;
    Matrix<Scalar> normed1 = gln_forward(norm1_gamma, norm1_beta, prelu_forward(prelu1, expanded), norm_epsilon,
                                         cache ? &n1 : nullptr);
    Matrix<Scalar> depthwise = depthwise_forward(dw_weight, dw_bias, normed1);
    Matrix<Scalar> normed2 = gln_forward(norm2_gamma, norm2_beta, prelu_forward(prelu2, depthwise), norm_epsilon,
                                         cache ? &n2 : nullptr);
    Matrix<Scalar> out = pointwise_forward(out_weight, out_bias, normed2);
    if (cache) {
      cache->input = input;
      cache->expanded = std::move(expanded);
      cache->norm1 = std::move(n1);
      cache->normed1 = std::move(normed1);
      cache->depthwise = std::move(depthwise);
      cache->norm2 = std::move(n2);
      cache->normed2 = std::move(normed2);
    }
    return out;
  }

  Matrix<Scalar> backward(const SeparatorCache<Scalar>& c, const Matrix<Scalar>& gz, SeparatorBlock& grad) const {
    Matrix<Scalar> g = pointwise_backward(out_weight, c.normed2, gz, grad.out_weight, grad.out_bias);
    g = gln_backward(norm2_gamma, c.norm2, g, grad.norm2_gamma, grad.norm2_beta);
    g = prelu_backward(prelu2, c.depthwise, g, grad.prelu2);
    g = depthwise_backward(dw_weight, c.normed1, g, grad.dw_weight, grad.dw_bias);
    g = gln_backward(norm1_gamma, c.norm1, g, grad.norm1_gamma, grad.norm1_beta);
    g = prelu_backward(prelu1, c.expanded, g, grad.prelu1);
    return pointwise_backward(in_weight, c.input, g, grad.in_weight, grad.in_bias);
  }
};

template <typename Scalar>
struct MaskerCache {
  Matrix<Scalar> input;
  Matrix<Scalar> activated;
  Matrix<Scalar> mask;
};

/// PReLU -> 1x1 conv D->D -> sigmoid; emits a mask in [0, 1].
template <typename Scalar>
struct Masker {
  Matrix<Scalar> prelu;           // D x 1
  Matrix<Scalar> weight, bias;    // D x D, D x 1

  Masker() = default;
  explicit Masker(const ModelConfig& cfg)
      : prelu(Matrix<Scalar>::Constant(cfg.latent_channels, 1, Scalar(0.25))),
        weight(Matrix<Scalar>::Zero(cfg.latent_channels, cfg.latent_channels)),
        bias(Matrix<Scalar>::Zero(cfg.latent_channels, 1)) {}

  void init(std::mt19937_64& rng) {
    fan_in_uniform(weight, weight.cols(), rng);
    fan_in_uniform(bias, weight.cols(), rng);
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("prelu", prelu);
    f("weight", weight);
    f("bias", bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("prelu", prelu);
    f("weight", weight);
    f("bias", bias);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& z, MaskerCache<Scalar>* cache = nullptr) const {
    if (z.rows() != weight.cols())
      throw Error(ErrorCode::ShapeMismatch, "masker expects " + std::to_string(weight.cols()) + " channels");
    Matrix<Scalar> activated = prelu_forward(prelu, z);
    Matrix<Scalar> mask = sigmoid(pointwise_forward(weight, bias, activated));
    if (cache) {
      cache->input = z;
      cache->activated = std::move(activated);
      cache->mask = mask;
    }
    return mask;
  }

  Matrix<Scalar> backward(const MaskerCache<Scalar>& c, const Matrix<Scalar>& gm, Masker& grad) const {
    Matrix<Scalar> g = (gm.array() * c.mask.array() * (Scalar(1) - c.mask.array())).matrix();
    g = pointwise_backward(weight, c.activated, g, grad.weight, grad.bias);
    return prelu_backward(prelu, c.input, g, grad.prelu);
  }
};

/// Transposed strided conv (D -> 1 channel) reconstructing a waveform by
/// overlap-add.
template <typename Scalar>
struct Decoder {
  Matrix<Scalar> weight;  // kernel x D
  Matrix<Scalar> bias;    // 1 x 1
  int stride = 1;

  Decoder() = default;
  explicit Decoder(const ModelConfig& cfg)
      : weight(Matrix<Scalar>::Zero(cfg.enc_kernel, cfg.latent_channels)),
        bias(Matrix<Scalar>::Zero(1, 1)),
        stride(cfg.enc_stride) {}

  int kernel() const { return static_cast<int>(weight.rows()); }

  void init(std::mt19937_64& rng) {
    fan_in_uniform(weight, weight.cols(), rng);
    fan_in_uniform(bias, weight.cols(), rng);
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("weight", weight);
    f("bias", bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("weight", weight);
    f("bias", bias);
  }

  Vector<Scalar> forward(const Matrix<Scalar>& latent, Eigen::Index length) const {
    if (latent.rows() != weight.cols()) throw Error(ErrorCode::ShapeMismatch, "decoder channel mismatch");
    const Matrix<Scalar> frames = weight * latent;
    Vector<Scalar> out = overlap_add(frames, stride, length);
    out.array() += bias(0, 0);
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& latent, const Vector<Scalar>& gy, Decoder& grad) const {
    const Matrix<Scalar> g_frames = frame_view(gy, kernel(), stride).leftCols(latent.cols());
    grad.weight.noalias() += g_frames * latent.transpose();
    grad.bias(0, 0) += gy.sum();
    return weight.transpose() * g_frames;
  }
};

}  // namespace bloomnet
