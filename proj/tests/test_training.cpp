#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bloomnet/hash.hpp"
#include "bloomnet/training.hpp"
#include "test_util.hpp"

using namespace bloomnet;

namespace {

const TrainingData& small_data() {
  static const TrainingData data = [] {
    CorpusSpec c;
    c.n_train = 8;
    c.n_val = 4;
    c.n_test = 0;
    c.utterance_seconds = 0.1;
    c.seed = 5;
    return TrainingData::from_corpus(build_mixture_dataset(c));
  }();
  return data;
}

RegimeSpec small_regime(int epochs = 2) {
  RegimeSpec r = RegimeSpec::desk();
  r.segment_seconds = 0.05;
  r.batch_size = 3;
  r.max_epochs = epochs;
  r.patience = 5;
  r.seed = 9;
  return r;
}

template <typename Net>
std::string digest(const Net& net) {
  std::string bytes;
  net.for_each_tensor([&](const std::string& name, const auto& t) {
    bytes += name;
    append_tensor_bytes(bytes, t);
  });
  return sha256_hex(bytes);
}

// Fixed validation crops exactly as the trainer cuts them.
struct ValCrops {
  std::vector<Eigen::VectorXd> x, s;
};

ValCrops val_crops(const TrainingData& data, const RegimeSpec& spec, const ModelConfig& cfg) {
  const long seg = segment_samples(spec, cfg, data.sample_rate);
  const auto off = validation_offsets(data, seg, spec.seed);
  ValCrops v;
  for (std::size_t i = 0; i < data.val.size(); ++i) {
    v.x.push_back(data.val[i].mixture.segment(off[i], seg));
    v.s.push_back(data.val[i].clean.segment(off[i], seg));
  }
  return v;
}

double neg_si_sdr(const Eigen::VectorXd& s, const Eigen::VectorXd& e) {
  const double a = s.dot(e) / s.squaredNorm();
  const double t = (a * s).squaredNorm(), r = (e - a * s).squaredNorm();
  return -std::min(10.0 * std::log10(t / r), kDefaultSiSdrCap);
}

}  // namespace

TEST_CASE("early stopping decisions") {
  SUBCASE("worked example") {
    const std::vector<double> v = {5, 4, 4.1, 4.2, 4.3};
    const auto d = early_stop_check(v, 3);
    CHECK(d.action == StopAction::rollback_to_best);
    CHECK(d.best_epoch == 1);
    const std::vector<double> shorter = {5, 4, 4.1, 4.2};
    CHECK(early_stop_check(shorter, 3).action == StopAction::continue_training);
  }
  SUBCASE("budget") {
    const std::vector<double> v = {5, 4, 3};
    CHECK(early_stop_check(v, 3, true).action == StopAction::stop);
    const std::vector<double> w = {5, 3, 4};
    const auto d = early_stop_check(w, 3, true);
    CHECK(d.action == StopAction::rollback_to_best);
    CHECK(d.best_epoch == 1);
  }
  SUBCASE("ties are not improvements") {
    const std::vector<double> v = {4, 4, 4};
    const auto d = early_stop_check(v, 2);
    CHECK(d.action == StopAction::rollback_to_best);
    CHECK(d.best_epoch == 0);
  }
  SUBCASE("agrees with a scan oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 500; ++trial) {
      const int patience = 1 + trial % 4;
      std::vector<double> v;
      const int n = 1 + static_cast<int>(u(rng) * 12);
      for (int i = 0; i < n; ++i) v.push_back(std::round(u(rng) * 10) / 10);
      // First index of the minimum, and whether the last `patience` entries brought nothing new.
      const int best = static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
      const bool expired = n - 1 - best >= patience;
      const auto d = early_stop_check(v, patience);
      CHECK(d.best_epoch == best);
      CHECK((d.action != StopAction::continue_training) == expired);
    }
  }
}

TEST_CASE("zero learning rate and zero epochs leave parameters alone") {
  const auto cfg = testutil::tiny(2);
  for (int mode = 0; mode < 2; ++mode) {
    RegimeSpec spec = small_regime(mode == 0 ? 2 : 0);
    if (mode == 0) spec.learning_rate = 0.0;
    MaskingNet<double> net(cfg, Family::baseline1, 4);
    const std::string before = digest(net);
    const auto h = train_end_to_end(net, small_data(), spec);
    CHECK(digest(net) == before);
    CHECK(h.epochs.size() == static_cast<std::size_t>(spec.max_epochs + 1));
    CHECK(net.trained_depth == 2);
  }
}

TEST_CASE("stage order and fine-tuning preconditions") {
  const auto cfg = testutil::tiny(3);
  MaskingNet<double> net(cfg, Family::bloom, 1);
  const auto spec = small_regime(1);
  try {
    train_bloom_stage(net, 2, small_data(), spec);
    FAIL("expected StageOrderViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StageOrderViolation);
  }
  try {
    fine_tune_joint(net, small_data(), spec);
    FAIL("expected NotFullyTrained");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotFullyTrained);
  }
  train_bloom_stage(net, 1, small_data(), spec);
  CHECK(net.trained_depth == 1);
  CHECK_THROWS_AS(train_bloom_stage(net, 1, small_data(), spec), Error);
  CHECK_THROWS_AS(train_bloom_stage(net, 3, small_data(), spec), Error);
}

TEST_CASE("BLOOM freezes every earlier stage and the encoder") {
  const auto cfg = testutil::tiny(3);
  MaskingNet<double> net(cfg, Family::bloom, 2);
  std::vector<EpochRecord> records;
  TrainHooks<double> hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { records.push_back(r); };
  const auto history = train_blockwise_latent(net, small_data(), small_regime(2), hooks);
  REQUIRE(history.stages.size() == 3);
  CHECK(records.size() == history.epochs.size());
  for (const auto& r : records) {
    const auto& first = history.epochs[history.stages[r.stage - 1].first_record];
    for (int j = 1; j < r.stage; ++j)
      for (const char* m : {"sep.", "mas.", "dec."}) {
        const std::string name = m + std::to_string(j);
        CHECK(r.module_hashes.at(name) == first.module_hashes.at(name));
      }
    if (r.stage >= 2) CHECK(r.module_hashes.at("enc") == first.module_hashes.at("enc"));
    for (int j = r.stage + 1; j <= 3; ++j)
      CHECK(r.module_hashes.at("sep." + std::to_string(j)) == first.module_hashes.at("sep." + std::to_string(j)));
  }
  // The stage's own modules do move.
  const auto& s2 = history.stages[1];
  CHECK(history.epochs[s2.first_record].module_hashes.at("sep.2") !=
        history.epochs[s2.first_record + 1].module_hashes.at("sep.2"));
  CHECK(net.trained_depth == 3);
}

TEST_CASE("Baseline 2 freezes earlier blocks and feeds them forward") {
  const auto cfg = testutil::tiny(2);
  WeakBlockChain<double> chain(cfg, 6);
  const auto spec = small_regime(2);
  std::vector<EpochRecord> records;
  TrainHooks<double> hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { records.push_back(r); };
  const auto history = train_blockwise_time(chain, small_data(), spec, hooks);
  REQUIRE(history.stages.size() == 2);
  CHECK(chain.trained_depth == 2);
  const auto& first2 = history.epochs[history.stages[1].first_record];
  for (const auto& r : records) {
    if (r.stage != 2) continue;
    for (const auto& [name, h] : r.module_hashes)
      if (name.rfind("block.1/", 0) == 0) CHECK(h == first2.module_hashes.at(name));
  }

  // Epoch 0 of stage 2 scores block 2 on block 1's output.
  WeakBlockChain<double> fresh(cfg, 6);
  fresh.blocks[0] = chain.blocks[0];
  const auto v = val_crops(small_data(), spec, cfg);
  double expect = 0;
  for (std::size_t i = 0; i < v.x.size(); ++i) expect += neg_si_sdr(v.s[i], fresh.forward_at_depth(v.x[i], 2));
  expect /= static_cast<double>(v.x.size());
  CHECK(first2.val_loss == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("BLOOM stage 1 follows the one-block Baseline 1 trajectory") {
  const auto cfg = testutil::tiny(3);
  auto one = cfg;
  one.num_blocks = 1;
  const auto spec = small_regime(3);
  MaskingNet<double> bloom(cfg, Family::bloom, 8);
  MaskingNet<double> base(one, Family::baseline1, 8);
  const auto hb = train_bloom_stage(bloom, 1, small_data(), spec);
  const auto h1 = train_end_to_end(base, small_data(), spec);
  REQUIRE(hb.epochs.size() == h1.epochs.size());
  for (std::size_t i = 0; i < hb.epochs.size(); ++i) CHECK(hb.epochs[i].val_loss == h1.epochs[i].val_loss);
  for (const char* m : {"enc", "sep.1", "mas.1", "dec.1"}) {
    std::string a, b;
    bloom.for_each_submodule([&](const std::string& n, const auto& x) { if (n == m) a = module_hash(x); });
    base.for_each_submodule([&](const std::string& n, const auto& x) { if (n == m) b = module_hash(x); });
    CHECK(a == b);
  }
}

TEST_CASE("fine-tuning scores the sum of per-block losses") {
  const auto cfg = testutil::tiny(3);
  auto spec = small_regime(1);
  MaskingNet<double> net(cfg, Family::bloom, 10);
  net.trained_depth = 3;
  const auto v = val_crops(small_data(), spec, cfg);
  for (int weighted = 0; weighted < 2; ++weighted) {
    spec.finetune_weights = weighted ? std::vector<double>{0.5, 1.0, 2.0} : std::vector<double>{};
    double expect = 0;
    for (std::size_t i = 0; i < v.x.size(); ++i) {
      const auto out = net.forward_at_depth(v.x[i], 3, true);
      for (int l = 0; l < 3; ++l) expect += (weighted ? spec.finetune_weights[l] : 1.0) * neg_si_sdr(v.s[i], out.intermediates[l]);
    }
    expect /= static_cast<double>(v.x.size());
    spec.max_epochs = 0;
    MaskingNet<double> copy = net;
    const auto h = fine_tune_joint(copy, small_data(), spec);
    CHECK(h.epochs[0].val_loss == doctest::Approx(expect).epsilon(1e-9));
  }
  spec.finetune_weights = {1.0};
  CHECK_THROWS_AS(fine_tune_joint(net, small_data(), spec), Error);
}

TEST_CASE("training is deterministic") {
  const auto cfg = testutil::tiny(2);
  auto run = [&] {
    MaskingNet<float> net(cfg, Family::bloom, 12);
    const auto h = train_blockwise_latent(net, small_data(), small_regime(2));
    std::vector<double> v;
    for (const auto& e : h.epochs) v.push_back(e.val_loss);
    return std::make_pair(digest(net), v);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("intermediate baselines are independent models") {
  const auto cfg = testutil::tiny(2);
  const auto spec = small_regime(1);
  std::vector<TrainHistory> histories;
  const auto models = train_baseline1_int<double>(cfg, small_data(), spec, &histories);
  REQUIRE(models.size() == 2);
  CHECK(histories.size() == 2);
  CHECK(models[0].num_blocks() == 1);
  CHECK(models[1].num_blocks() == 2);
  MaskingNet<double> alone(cfg, Family::baseline1, spec.seed);
  train_end_to_end(alone, small_data(), spec);
  CHECK(digest(alone) == digest(models[1]));
}

TEST_CASE("training on non-finite data is reported as divergence") {
  TrainingData bad = small_data();
  for (auto& p : bad.train) p.mixture.setConstant(std::numeric_limits<double>::quiet_NaN());
  MaskingNet<double> net(testutil::tiny(1), Family::baseline1, 1);
  try {
    train_end_to_end(net, bad, small_regime(1));
    FAIL("expected DivergenceDetected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergenceDetected);
  }
  TrainingData empty = small_data();
  empty.val.clear();
  CHECK_THROWS_AS(train_end_to_end(net, empty, small_regime(1)), Error);
}

TEST_CASE("epoch plans") {
  const auto& data = small_data();
  const auto a = epoch_plan(data, 800, 1, 1, 1), b = epoch_plan(data, 800, 1, 1, 1), c = epoch_plan(data, 800, 1, 1, 2);
  CHECK(a.offsets == b.offsets);
  CHECK(a.order == b.order);
  CHECK((a.offsets != c.offsets || a.order != c.order));
  auto sorted = a.order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}
