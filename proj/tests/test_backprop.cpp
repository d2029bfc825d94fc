#include <doctest.h>

#include <map>

#include "bloomnet/adam.hpp"
#include "bloomnet/backprop.hpp"
#include "test_util.hpp"

using namespace bloomnet;
using testutil::randn;
using Mat = Matrix<double>;
using Vec = Vector<double>;

namespace {

struct GradCheck {
  double worst = 0.0;
  std::string worst_name;
  std::map<std::string, double> analytic_norm;
};

// Central differences on every parameter against the analytic gradient.
GradCheck check_gradients(MaskingNet<double> net, const Vec& x, const Vec& s, const GradientPlan& plan) {
  MaskingNet<double> grads = net.zeros_like();
  accumulate_gradients(net, x, s, plan, grads);
  std::map<std::string, Mat*> g;
  grads.for_each_tensor([&](const std::string& n, Mat& t) { g[n] = &t; });
  GradCheck out;
  const double step = 1e-6;
  net.for_each_tensor([&](const std::string& name, Mat& t) {
    Mat fd(t.rows(), t.cols());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double keep = t.data()[i];
      t.data()[i] = keep + step;
      const double up = plan_loss(net, x, s, plan).total;
      t.data()[i] = keep - step;
      const double down = plan_loss(net, x, s, plan).total;
      t.data()[i] = keep;
      fd.data()[i] = (up - down) / (2 * step);
    }
    const Mat& a = *g.at(name);
    out.analytic_norm[name] = a.norm();
    const double scale = std::max({a.norm(), fd.norm(), 1e-3});
    const double err = (a - fd).norm() / scale;
    if (err > out.worst) {
      out.worst = err;
      out.worst_name = name;
    }
  });
  return out;
}

GradientPlan all_heads(const MaskingNet<double>& net) {
  GradientPlan p;
  for (int i = 0; i < net.num_heads(); ++i) p.terms.push_back({i, 1.0 + 0.5 * i});
  return p;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(101);
  const Vec x = randn(rng, 4 + 2 * 45);
  const Vec s = 0.6 * x + randn(rng, x.size(), 0.3);

  SUBCASE("BLOOM, every head, block mask input") {
    MaskingNet<double> net(testutil::tiny(3), Family::bloom, 1);
    const auto r = check_gradients(net, x, s, all_heads(net));
    CHECK_MESSAGE(r.worst < 1e-5, r.worst_name);
  }
  SUBCASE("BLOOM, accumulated mask input") {
    auto c = testutil::tiny(3);
    c.mask_input = MaskInput::accumulated;
    MaskingNet<double> net(c, Family::bloom, 2);
    const auto r = check_gradients(net, x, s, all_heads(net));
    CHECK_MESSAGE(r.worst < 1e-5, r.worst_name);
  }
  SUBCASE("Baseline 1") {
    MaskingNet<double> net(testutil::tiny(3), Family::baseline1, 3);
    GradientPlan p;
    p.terms = {{0, 1.0}};
    const auto r = check_gradients(net, x, s, p);
    CHECK_MESSAGE(r.worst < 1e-5, r.worst_name);
  }
  SUBCASE("Baseline 1 diagnostic level") {
    MaskingNet<double> net(testutil::tiny(3), Family::baseline1, 4);
    GradientPlan p;
    p.terms = {{0, 1.0}};
    p.diagnostic_level = 2;
    const auto r = check_gradients(net, x, s, p);
    CHECK_MESSAGE(r.worst < 1e-5, r.worst_name);
    CHECK(r.analytic_norm.at("sep.3.in_weight") == 0.0);
  }
  SUBCASE("frozen prefix gets no gradient") {
    MaskingNet<double> net(testutil::tiny(3), Family::bloom, 5);
    GradientPlan p;
    p.terms = {{1, 1.0}};
    p.first_trainable_block = 2;
    p.train_encoder = false;
    MaskingNet<double> grads = net.zeros_like();
    accumulate_gradients(net, x, s, p, grads);
    const auto r = check_gradients(net, x, s, p);
    for (const auto& [name, norm] : r.analytic_norm) {
      const bool trainable = name.starts_with("sep.2") || name.starts_with("mas.2") || name.starts_with("dec.2");
      if (!trainable) CHECK_MESSAGE(norm == 0.0, name);
      else CHECK_MESSAGE(norm > 0.0, name);
    }
  }
}

TEST_CASE("plan_loss agrees with the forward pass") {
  MaskingNet<double> net(testutil::tiny(4), Family::bloom, 7);
  std::mt19937_64 rng(8);
  const Vec x = randn(rng, 4 + 2 * 40), s = randn(rng, x.size());
  const auto loss = plan_loss(net, x, s, all_heads(net));
  double sum = 0.0;
  for (int l = 1; l <= 4; ++l) {
    const double term = neg_si_sdr_loss(s, net.forward_at_depth(x, l).estimate);
    CHECK(loss.per_term[l - 1] == doctest::Approx(term).epsilon(1e-12));
    sum += (1.0 + 0.5 * (l - 1)) * term;
  }
  CHECK(loss.total == doctest::Approx(sum).epsilon(1e-12));
  MaskingNet<double> grads = net.zeros_like();
  CHECK(accumulate_gradients(net, x, s, all_heads(net), grads).total == doctest::Approx(loss.total).epsilon(1e-12));
}

TEST_CASE("Adam") {
  std::mt19937_64 rng(9);
  Mat p = testutil::randm(rng, 3, 2);
  const Mat keep = p;
  Mat g = testutil::randm(rng, 3, 2);
  Adam<double> zero(0.0);
  zero.step({&p}, {&g});
  CHECK(p == keep);

  // first step moves every coordinate by lr against the gradient sign
  Adam<double> adam(0.01);
  adam.step({&p}, {&g});
  for (Eigen::Index i = 0; i < p.size(); ++i)
    CHECK(p.data()[i] - keep.data()[i] == doctest::Approx(-0.01 * (g.data()[i] > 0 ? 1 : -1)).epsilon(1e-6));

  // minimizes a quadratic
  Mat w = Mat::Constant(1, 1, 5.0);
  Adam<double> opt(0.1);
  for (int i = 0; i < 500; ++i) {
    Mat grad = 2 * w;
    opt.step({&w}, {&grad});
  }
  CHECK(std::abs(w(0, 0)) < 1e-2);
}
