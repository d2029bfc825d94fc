#pragma once

// Reverse-mode pass over a MaskingNet for a weighted sum of per-head
// negative SI-SDR losses.

#include <vector>

#include "bloomnet/network.hpp"
#include "bloomnet/signal_metrics.hpp"

namespace bloomnet {

struct LossTerm {
  int head = 0;
  double weight = 1.0;
};

struct GradientPlan {
  std::vector<LossTerm> terms;
  int first_trainable_block = 1;  // separators at levels >= this get gradients
  bool train_encoder = true;
  int diagnostic_level = 0;       // Baseline 1 only: head reads this level when > 0
};

struct ExampleLoss {
  double total = 0.0;
  std::vector<double> per_term;
};

namespace detail {

template <typename Scalar>
int term_level(const MaskingNet<Scalar>& net, const GradientPlan& plan, const LossTerm& term) {
  if (net.family == Family::baseline1 && plan.diagnostic_level > 0) return plan.diagnostic_level;
  return net.head_level(term.head);
}

template <typename Scalar>
int plan_depth(const MaskingNet<Scalar>& net, const GradientPlan& plan) {
  int depth = 0;
  for (const auto& t : plan.terms) depth = std::max(depth, term_level(net, plan, t));
  net.check_depth(depth);
  return depth;
}

}  // namespace detail

/// Loss of the plan's terms without gradients.
template <typename Scalar>
ExampleLoss plan_loss(const MaskingNet<Scalar>& net, const Vector<Scalar>& x, const Vector<Scalar>& target,
                      const GradientPlan& plan, double cap = kDefaultSiSdrCap) {
  const int depth = detail::plan_depth(net, plan);
  const auto trace = net.latent_trace(x, depth);
  ExampleLoss out;
  for (const auto& term : plan.terms) {
    const int level = detail::term_level(net, plan, term);
    const auto est = net.mask_and_decode(net.select_mask_input(trace.z[level], trace.z_bar[level]), trace.h, term.head,
                                         x.size());
    const double loss = neg_si_sdr_loss(target, est, cap);
    out.per_term.push_back(loss);
    out.total += term.weight * loss;
  }
  return out;
}

/// Forward + backward for one example. Gradients are added into `grads`
/// (a zeros_like() copy of `net`) for every separator at or above
/// plan.first_trainable_block, every head in the plan, and the encoder when
/// plan.train_encoder is set. Frozen blocks below that point run without
/// caches and are not back-propagated.
template <typename Scalar>
ExampleLoss accumulate_gradients(const MaskingNet<Scalar>& net, const Vector<Scalar>& x, const Vector<Scalar>& target,
                                 const GradientPlan& plan, MaskingNet<Scalar>& grads,
                                 double cap = kDefaultSiSdrCap) {
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  const int depth = detail::plan_depth(net, plan);
  const int first_cached = plan.train_encoder ? 1 : std::max(1, plan.first_trainable_block);

  // Forward, caching only what the backward pass revisits.
  const Mat h = net.encoder.forward(x);
  std::vector<Mat> z(depth + 1), z_bar(depth + 1);
  std::vector<SeparatorCache<Scalar>> caches(depth + 1);
  z[0] = h;
  z_bar[0] = h;
  for (int l = 1; l <= depth; ++l) {
    z[l] = net.separators[l - 1].forward(z_bar[l - 1], l >= first_cached ? &caches[l] : nullptr);
    z_bar[l] = z[l] + z_bar[l - 1];
  }

  struct HeadPass {
    MaskerCache<Scalar> masker;
    Mat masked;
    Vec estimate;
  };
  std::vector<HeadPass> passes(plan.terms.size());
  ExampleLoss out;
  std::vector<Vec> loss_grads;
  for (std::size_t i = 0; i < plan.terms.size(); ++i) {
    const auto& term = plan.terms[i];
    const int level = detail::term_level(net, plan, term);
    const auto& head = net.heads.at(term.head);
    const Mat m = head.masker.forward(net.select_mask_input(z[level], z_bar[level]), &passes[i].masker);
    passes[i].masked = (m.array() * h.array()).matrix();
    passes[i].estimate = head.decoder.forward(passes[i].masked, x.size());
    auto lg = neg_si_sdr_loss_with_grad(target, passes[i].estimate, cap);
    out.per_term.push_back(lg.loss);
    out.total += term.weight * lg.loss;
    loss_grads.push_back((lg.gradient * term.weight).template cast<Scalar>());
  }

  // Backward.
  std::vector<Mat> g_z(depth + 1), g_z_bar(depth + 1);
  auto accumulate = [](Mat& into, const Mat& g) {
    if (into.size() == 0)
      into = g;
    else
      into += g;
  };
  Mat g_h;
  for (std::size_t i = 0; i < plan.terms.size(); ++i) {
    const auto& term = plan.terms[i];
    const int level = detail::term_level(net, plan, term);
    const auto& head = net.heads.at(term.head);
    auto& ghead = grads.heads.at(term.head);
    const Mat g_masked = head.decoder.backward(passes[i].masked, loss_grads[i], ghead.decoder);
    const Mat& m = passes[i].masker.mask;
    const Mat g_mask = (g_masked.array() * h.array()).matrix();
    if (plan.train_encoder) accumulate(g_h, (g_masked.array() * m.array()).matrix());
    const Mat g_in = head.masker.backward(passes[i].masker, g_mask, ghead.masker);
    if (net.config.mask_input == MaskInput::block && level > 0)
      accumulate(g_z[level], g_in);
    else
      accumulate(g_z_bar[level], g_in);
  }

  for (int l = depth; l >= first_cached; --l) {
    Mat g_out;
    if (g_z[l].size() != 0) g_out = g_z[l];
    if (g_z_bar[l].size() != 0) accumulate(g_out, g_z_bar[l]);
    if (g_out.size() == 0) continue;
    // z̄(l) = z(l) + z̄(l-1): the residual path forwards g_z̄ unchanged.
    if (g_z_bar[l].size() != 0) accumulate(g_z_bar[l - 1], g_z_bar[l]);
    const Mat g_in = net.separators[l - 1].backward(caches[l], g_out, grads.separators[l - 1]);
    accumulate(g_z_bar[l - 1], g_in);
  }

  if (plan.train_encoder) {
    if (g_z_bar[0].size() != 0) accumulate(g_h, g_z_bar[0]);
    if (g_h.size() != 0) net.encoder.backward(x, h, g_h, grads.encoder);
  }
  return out;
}

}  // namespace bloomnet
