#include <doctest.h>

#include "bloomnet/complexity.hpp"
#include "bloomnet/network.hpp"
#include "test_util.hpp"

using namespace bloomnet;

namespace {

long tensor_count(const auto& module) {
  long n = 0;
  module.for_each_tensor([&](const char*, const auto& t) { n += t.size(); });
  return n;
}

// MACs per pass read off the instantiated tensors.
struct RuntimeMacs {
  long enc, sep, mas, dec;
};

template <typename Net>
RuntimeMacs runtime_macs(const Net& net, long frames) {
  const auto& e = net.encoder;
  const auto& s = net.separators.front();
  const auto& m = net.heads.front().masker;
  const auto& d = net.heads.front().decoder;
  RuntimeMacs r;
  r.enc = (e.weight.size() + e.weight.rows()) * frames;
  r.sep = (s.in_weight.size() + s.prelu1.size() + s.norm1_gamma.size() + s.dw_weight.size() + s.prelu2.size() +
           s.norm2_gamma.size() + s.out_weight.size()) *
          frames;
  r.mas = (m.prelu.size() + m.weight.size() + 2 * m.weight.rows()) * frames;
  r.dec = d.weight.size() * frames;
  return r;
}

long traced_macs(const ExecutionTrace& t, const RuntimeMacs& m) {
  return t.encodes * m.enc + t.separators * m.sep + t.maskers * m.mas + t.decoders * m.dec;
}

}  // namespace

TEST_CASE("layer counts") {
  const LayerSpec conv{LayerKind::conv1d, 1, 4, 3, true};
  CHECK(count_params(conv) == 16);
  CHECK(count_macs(conv, 10) == 120);
  const LayerSpec dw{LayerKind::depthwise, 4, 4, 3, true};
  CHECK(count_params(dw) == 16);
  CHECK(count_macs(dw, 10) == 120);
  CHECK(count_params(LayerSpec{LayerKind::prelu, 7, 0, 1, false}) == 7);
  CHECK(count_params(LayerSpec{LayerKind::gln, 7, 0, 1, false}) == 14);
  CHECK(count_params(LayerSpec{LayerKind::transposed_conv, 4, 1, 3, true}) == 13);
  CHECK(count_macs(LayerSpec{LayerKind::mask_product, 5, 0, 1, false}, 10) == 50);
}

TEST_CASE("analytic parameters equal runtime enumeration") {
  for (auto cfg : {testutil::tiny(4), ModelConfig::desk(), ModelConfig::full()}) {
    const ModuleCosts c = module_costs(cfg);
    const MaskingNet<float> net(cfg, Family::bloom, 1);
    CHECK(tensor_count(net.encoder) == c.enc_params);
    CHECK(tensor_count(net.separators[0]) == c.sep_params);
    CHECK(tensor_count(net.heads[0].masker) == c.mas_params);
    CHECK(tensor_count(net.heads[0].decoder) == c.dec_params);

    const auto bloom = complexity_report(cfg, ModelFamily::bloom);
    const auto b1 = complexity_report(cfg, ModelFamily::baseline1_int);
    const auto b2 = complexity_report(cfg, ModelFamily::baseline2);
    long b1_sum = 0;
    for (int l = 1; l <= cfg.num_blocks; ++l) {
      ModelConfig sub = cfg;
      sub.num_blocks = l;
      const MaskingNet<float> bl(sub, Family::bloom, 1), base(sub, Family::baseline1, 1);
      const WeakBlockChain<float> chain(sub, 1);
      // Storage for every depth up to l is exactly an l-block BLOOM model.
      CHECK(bloom.rows[l - 1].cumulative_scalable_params == bl.parameter_count());
      CHECK(net.truncated(l).parameter_count() == bl.parameter_count());
      // Depth-l inference loads Enc, Sep(1..l) and head l only.
      long loaded = 0;
      net.for_each_submodule([&](const std::string& name, const auto& m) {
        const bool sep = name.rfind("sep.", 0) == 0 && std::stoi(name.substr(4)) <= l;
        const bool head = name == "mas." + std::to_string(l) || name == "dec." + std::to_string(l);
        if (name == "enc" || sep || head) loaded += tensor_count(m);
      });
      CHECK(bloom.rows[l - 1].inference_params == loaded);
      CHECK(b1.rows[l - 1].inference_params == base.parameter_count());
      b1_sum += base.parameter_count();
      CHECK(b1.rows[l - 1].cumulative_scalable_params == b1_sum);
      CHECK(b2.rows[l - 1].inference_params == chain.parameter_count());
      CHECK(b2.rows[l - 1].cumulative_scalable_params == chain.parameter_count());
    }
  }
}

TEST_CASE("analytic MACs equal a traced runtime count") {
  for (auto cfg : {testutil::tiny(4), ModelConfig::desk()}) {
    const int rate = 16000;
    const long samples = cfg.floor_valid_length(rate);
    std::mt19937_64 rng(2);
    const auto x = testutil::randn<float>(rng, samples);
    const MaskingNet<float> bloom(cfg, Family::bloom, 3);
    const WeakBlockChain<float> chain(cfg, 3);
    const long frames = bloom.encode(x).cols();
    CHECK(frames == latent_frames(cfg, 1.0, rate));
    const RuntimeMacs m = runtime_macs(bloom, frames);

    const auto rb = complexity_report(cfg, ModelFamily::bloom);
    const auto r1 = complexity_report(cfg, ModelFamily::baseline1_int);
    const auto r2 = complexity_report(cfg, ModelFamily::baseline2);
    for (int l = 1; l <= cfg.num_blocks; ++l) {
      ExecutionTrace tb, t1, t2;
      bloom.forward_at_depth(x, l, false, &tb);
      ModelConfig sub = cfg;
      sub.num_blocks = l;
      MaskingNet<float>(sub, Family::baseline1, 3).forward_at_depth(x, l, false, &t1);
      chain.forward_at_depth(x, l, &t2);
      CHECK(rb.rows[l - 1].inference_macs == traced_macs(tb, m));
      CHECK(r1.rows[l - 1].inference_macs == traced_macs(t1, m));
      CHECK(r2.rows[l - 1].inference_macs == traced_macs(t2, m));
    }
  }
}

TEST_CASE("scalability structure") {
  for (auto cfg : {testutil::tiny(6), ModelConfig::desk(), ModelConfig::full()}) {
    const auto table = scalability_table(cfg, {ModelFamily::baseline1_int, ModelFamily::bloom, ModelFamily::baseline2});
    const auto& b1 = table[0].rows;
    const auto& bl = table[1].rows;
    const auto& b2 = table[2].rows;
    const ModuleCosts c = module_costs(cfg);
    CHECK(bl[0].cumulative_scalable_params == b1[0].cumulative_scalable_params);
    for (int l = 1; l <= cfg.num_blocks; ++l) {
      const auto i = static_cast<std::size_t>(l - 1);
      CHECK(bl[i].inference_macs == b1[i].inference_macs);
      CHECK(b2[i].inference_macs - bl[i].inference_macs == (l - 1) * (c.enc_macs + c.mas_macs + c.dec_macs));
      if (l >= 2) {
        CHECK(bl[i].cumulative_scalable_params - bl[i - 1].cumulative_scalable_params ==
              bl[1].cumulative_scalable_params - bl[0].cumulative_scalable_params);
        CHECK(bl[i].cumulative_scalable_params >= bl[i - 1].cumulative_scalable_params);
        CHECK(b1[i].cumulative_scalable_params >= b1[i - 1].cumulative_scalable_params);
      }
      if (l >= 3) {
        const long d2 = b1[i].cumulative_scalable_params - 2 * b1[i - 1].cumulative_scalable_params +
                        b1[i - 2].cumulative_scalable_params;
        CHECK(d2 > 0);
        // MACs grow linearly in depth, as in the published table.
        CHECK(bl[i].inference_macs - 2 * bl[i - 1].inference_macs + bl[i - 2].inference_macs == 0);
      }
    }
  }
}

TEST_CASE("report is a pure function and renders") {
  const auto cfg = ModelConfig::desk();
  const auto a = scalability_table(cfg, {ModelFamily::bloom, ModelFamily::baseline1_int});
  const auto b = scalability_table(cfg, {ModelFamily::bloom, ModelFamily::baseline1_int});
  CHECK(to_csv(a) == to_csv(b));
  CHECK(to_text(a) == to_text(b));
  const std::string csv = to_csv(a);
  CHECK(csv.rfind("depth,bloom_macs,bloom_params,bloom_cumulative_params,baseline1_int_macs", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + cfg.num_blocks);
  CHECK(module_costs(cfg, 2.0).enc_macs > module_costs(cfg, 1.0).enc_macs);
  CHECK_THROWS_AS(latent_frames(cfg, 0.0005), Error);
}
