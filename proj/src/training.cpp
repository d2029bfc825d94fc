#include "bloomnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "bloomnet/adam.hpp"
#include "bloomnet/hash.hpp"

namespace bloomnet {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::baseline1_full: return "baseline1_full";
    case Regime::baseline1_int: return "baseline1_int";
    case Regime::baseline2: return "baseline2";
    case Regime::bloom: return "bloom";
    case Regime::bloom_ft: return "bloom_ft";
  }
  return "bloom";
}

Regime parse_regime(const std::string& s) {
  for (Regime r : {Regime::baseline1_full, Regime::baseline1_int, Regime::baseline2, Regime::bloom, Regime::bloom_ft})
    if (to_string(r) == s) return r;
  throw Error(ErrorCode::InvalidConfig, "unknown regime '" + s + "'");
}

std::string to_string(EncoderSchedule e) {
  return e == EncoderSchedule::stage1_then_freeze ? "stage1_then_freeze" : "always_frozen_pretrained";
}

EncoderSchedule parse_encoder_schedule(const std::string& s) {
  if (s == "stage1_then_freeze") return EncoderSchedule::stage1_then_freeze;
  if (s == "always_frozen_pretrained") return EncoderSchedule::always_frozen_pretrained;
  throw Error(ErrorCode::InvalidConfig, "unknown encoder schedule '" + s + "'");
}

void RegimeSpec::validate() const {
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (patience < 1) throw Error(ErrorCode::InvalidConfig, "patience must be >= 1");
  if (max_epochs < 0) throw Error(ErrorCode::InvalidConfig, "max_epochs must be >= 0");
  if (num_blocks < 1) throw Error(ErrorCode::InvalidConfig, "num_blocks must be >= 1");
  if (!(segment_seconds > 0.0)) throw Error(ErrorCode::InvalidConfig, "segment_seconds must be positive");
}

RegimeSpec RegimeSpec::full() {
  RegimeSpec r;
  r.learning_rate = 1e-4;
  r.batch_size = 64;
  r.segment_seconds = 1.0;
  r.patience = 10;
  r.max_epochs = 200;
  return r;
}

RegimeSpec RegimeSpec::desk() {
  RegimeSpec r;
  r.learning_rate = 1e-3;
  r.batch_size = 8;
  r.segment_seconds = 1.0;
  r.patience = 4;
  r.max_epochs = 30;
  return r;
}

TrainingData TrainingData::from_corpus(const Corpus& corpus) {
  TrainingData d;
  for (const auto& ex : corpus.train) d.train.push_back({ex.id, ex.mixture.samples, ex.clean.samples});
  for (const auto& ex : corpus.val) d.val.push_back({ex.id, ex.mixture.samples, ex.clean.samples});
  if (!corpus.train.empty()) d.sample_rate = corpus.train.front().mixture.sample_rate;
  return d;
}

void TrainHistory::write_jsonl(std::ostream& out) const {
  auto number = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  for (const auto& r : epochs) {
    std::string digest;
    for (const auto& [name, h] : r.module_hashes) digest += name + "=" + h + ";";
    nlohmann::json j;
    j["stage"] = r.stage;
    j["stage_name"] = r.stage_name;
    j["epoch"] = r.epoch;
    j["train_loss"] = number(r.train_loss);
    j["val_loss"] = number(r.val_loss);
    j["lr"] = r.learning_rate;
    j["wall_time"] = r.wall_time;
    j["skipped_batches"] = r.skipped_batches;
    j["params_digest"] = sha256_hex(digest);
    out << j.dump() << '\n';
  }
}

void TrainHistory::append(const TrainHistory& other) {
  const std::size_t base = epochs.size();
  epochs.insert(epochs.end(), other.epochs.begin(), other.epochs.end());
  for (auto s : other.stages) {
    s.first_record += base;
    s.last_record += base;
    stages.push_back(std::move(s));
  }
}

StopDecision early_stop_check(std::span<const double> val_losses, int patience, bool budget_exhausted) {
  StopDecision d;
  if (val_losses.empty()) return d;
  double best = std::numeric_limits<double>::infinity();
  int best_index = -1;
  for (std::size_t i = 0; i < val_losses.size(); ++i) {
    if (std::isfinite(val_losses[i]) && (best_index < 0 || val_losses[i] < best)) {
      best = val_losses[i];
      best_index = static_cast<int>(i);
    }
  }
  const int last = static_cast<int>(val_losses.size()) - 1;
  if (best_index < 0) best_index = 0;
  d.best_epoch = best_index;
  if (budget_exhausted || last - best_index >= patience)
    d.action = best_index == last ? StopAction::stop : StopAction::rollback_to_best;
  return d;
}

long segment_samples(const RegimeSpec& spec, const ModelConfig& cfg, int rate) {
  const long n = cfg.floor_valid_length(std::lround(spec.segment_seconds * rate));
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "segment shorter than the encoder kernel");
  return n;
}

std::vector<long> validation_offsets(const TrainingData& data, long segment_length, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "validation-crops"));
  std::vector<long> offsets;
  for (const auto& p : data.val) offsets.push_back(sample_offset(p.mixture.size(), segment_length, rng));
  return offsets;
}

EpochPlan epoch_plan(const TrainingData& data, long segment_length, std::uint64_t seed, int stage, int epoch) {
  const std::string tag = "/stage" + std::to_string(stage) + "/epoch" + std::to_string(epoch);
  EpochPlan plan;
  std::mt19937_64 crop_rng(derive_seed(seed, "crops" + tag));
  for (const auto& p : data.train) plan.offsets.push_back(sample_offset(p.mixture.size(), segment_length, crop_rng));
  plan.order.resize(data.train.size());
  std::iota(plan.order.begin(), plan.order.end(), std::size_t{0});
  std::mt19937_64 order_rng(derive_seed(seed, "order" + tag));
  std::shuffle(plan.order.begin(), plan.order.end(), order_rng);
  return plan;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename Scalar>
std::vector<Matrix<Scalar>*> select_tensors(MaskingNet<Scalar>& net, const std::set<std::string>& modules) {
  std::vector<Matrix<Scalar>*> out;
  net.for_each_submodule([&](const std::string& name, auto& m) {
    if (!modules.count(name)) return;
    m.for_each_tensor([&](const char*, Matrix<Scalar>& t) { out.push_back(&t); });
  });
  return out;
}

template <typename Scalar>
std::map<std::string, std::string> net_hashes(const MaskingNet<Scalar>& net, const std::string& prefix = "") {
  std::map<std::string, std::string> h;
  net.for_each_submodule([&](const std::string& name, const auto& m) { h[prefix + name] = module_hash(m); });
  return h;
}

template <typename Scalar>
struct StageProblem {
  MaskingNet<Scalar>* net = nullptr;
  GradientPlan plan;
  std::set<std::string> trainable;  // submodule names inside *net
  int stage = 1;
  std::string stage_name;
  std::function<Vector<Scalar>(const Vector<Scalar>&)> transform;
  // Hashes of every module the stage must leave untouched or may update.
  std::function<std::map<std::string, std::string>()> all_hashes;
  std::function<bool(const std::string&)> may_change;
};

template <typename Scalar>
TrainHistory run_stage(StageProblem<Scalar>& p, const TrainingData& data, const RegimeSpec& spec,
                       Clock::time_point started, const std::function<void(const EpochRecord&)>& on_epoch) {
  spec.validate();
  if (data.train.empty()) throw Error(ErrorCode::DataEmpty, "no training utterances");
  if (data.val.empty()) throw Error(ErrorCode::DataEmpty, "no validation utterances");
  MaskingNet<Scalar>& net = *p.net;
  const long seg = segment_samples(spec, net.config, data.sample_rate);

  // Fixed validation crops, passed through the input transform once.
  const auto val_offsets = validation_offsets(data, seg, spec.seed);
  std::vector<Vector<Scalar>> val_x(data.val.size()), val_s(data.val.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < data.val.size(); ++i) {
    Vector<Scalar> x = data.val[i].mixture.segment(val_offsets[i], seg).template cast<Scalar>();
    val_x[i] = p.transform ? p.transform(x) : x;
    val_s[i] = data.val[i].clean.segment(val_offsets[i], seg).template cast<Scalar>();
  }
  auto validation_loss = [&] {
    std::vector<double> losses(val_x.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < val_x.size(); ++i)
      losses[i] = plan_loss(net, val_x[i], val_s[i], p.plan, spec.si_sdr_cap).total;
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  };

  auto params = select_tensors(net, p.trainable);
  const MaskingNet<Scalar> zero_grads = net.zeros_like();
  Adam<Scalar> adam(spec.learning_rate);

  const auto reference_hashes = p.all_hashes();
  auto check_frozen = [&](const std::map<std::string, std::string>& now) {
    for (const auto& [name, h] : reference_hashes)
      if (!p.may_change(name) && now.at(name) != h)
        throw std::logic_error("frozen module " + name + " changed during stage " + p.stage_name);
  };

  TrainHistory history;
  StageRecord stage_record;
  stage_record.stage = p.stage;
  stage_record.stage_name = p.stage_name;
  stage_record.trainable.assign(p.trainable.begin(), p.trainable.end());
  stage_record.first_record = 0;

  auto snapshot = [&] {
    std::vector<Matrix<Scalar>> s;
    for (auto* t : params) s.push_back(*t);
    return s;
  };
  auto seconds = [&] { return std::chrono::duration<double>(Clock::now() - started).count(); };

  EpochRecord initial;
  initial.stage = p.stage;
  initial.stage_name = p.stage_name;
  initial.epoch = 0;
  initial.val_loss = validation_loss();
  initial.learning_rate = spec.learning_rate;
  initial.wall_time = seconds();
  initial.module_hashes = reference_hashes;
  history.epochs.push_back(initial);
  if (on_epoch) on_epoch(initial);

  std::vector<double> val_history = {initial.val_loss};
  auto best_state = snapshot();
  int best_epoch = 0;
  double best_val = std::isfinite(initial.val_loss) ? initial.val_loss : std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    const EpochPlan plan = epoch_plan(data, seg, spec.seed, p.stage, epoch);
    double loss_sum = 0.0;
    int used_batches = 0, skipped = 0;
    for (std::size_t start = 0; start < plan.order.size(); start += spec.batch_size) {
      const std::size_t n = std::min<std::size_t>(spec.batch_size, plan.order.size() - start);
      std::vector<MaskingNet<Scalar>> grads(n, zero_grads);
      std::vector<double> losses(n);
#pragma omp parallel for schedule(dynamic)
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t idx = plan.order[start + b];
        const auto& pair = data.train[idx];
        Vector<Scalar> x = pair.mixture.segment(plan.offsets[idx], seg).template cast<Scalar>();
        if (p.transform) x = p.transform(x);
        const Vector<Scalar> s = pair.clean.segment(plan.offsets[idx], seg).template cast<Scalar>();
        losses[b] = accumulate_gradients(net, x, s, p.plan, grads[b], spec.si_sdr_cap).total;
      }
      const double batch_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(n);

      // Ordered reduction keeps the update independent of thread count.
      auto total = select_tensors(grads[0], p.trainable);
      for (std::size_t b = 1; b < n; ++b) {
        auto g = select_tensors(grads[b], p.trainable);
        for (std::size_t t = 0; t < total.size(); ++t) *total[t] += *g[t];
      }
      bool finite = std::isfinite(batch_loss);
      for (auto* t : total) {
        *t /= static_cast<Scalar>(n);
        finite = finite && t->allFinite();
      }
      if (!finite) {
        ++skipped;
        continue;
      }
      adam.step(params, std::vector<const Matrix<Scalar>*>(total.begin(), total.end()));
      loss_sum += batch_loss;
      ++used_batches;
    }
    if (used_batches == 0)
      throw Error(ErrorCode::DivergenceDetected,
                  "every batch of " + p.stage_name + " epoch " + std::to_string(epoch) + " produced a non-finite loss");

    EpochRecord rec;
    rec.stage = p.stage;
    rec.stage_name = p.stage_name;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / used_batches;
    rec.val_loss = validation_loss();
    rec.learning_rate = spec.learning_rate;
    rec.wall_time = seconds();
    rec.skipped_batches = skipped;
    rec.module_hashes = p.all_hashes();
    check_frozen(rec.module_hashes);
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    val_history.push_back(rec.val_loss);
    if (std::isfinite(rec.val_loss) && rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best_epoch = epoch;
      best_state = snapshot();
    }
    const StopDecision decision = early_stop_check(val_history, spec.patience, epoch == spec.max_epochs);
    if (decision.action != StopAction::continue_training) break;
  }

  for (std::size_t t = 0; t < params.size(); ++t) *params[t] = best_state[t];
  stage_record.last_record = history.epochs.size() - 1;
  stage_record.best_epoch = best_epoch;
  stage_record.best_val_loss = best_val;
  history.stages.push_back(stage_record);
  return history;
}

template <typename Scalar>
std::set<std::string> all_submodules(const MaskingNet<Scalar>& net) {
  std::set<std::string> names;
  net.for_each_submodule([&](const std::string& name, const auto&) { names.insert(name); });
  return names;
}

template <typename Scalar>
void bind_net_hashes(StageProblem<Scalar>& p) {
  p.all_hashes = [net = p.net] { return net_hashes(*net); };
  p.may_change = [trainable = p.trainable](const std::string& n) { return trainable.count(n) > 0; };
}

}  // namespace

template <typename Scalar>
GradientPlan bloom_stage_plan(const MaskingNet<Scalar>& net, int stage, const RegimeSpec& spec,
                              std::vector<std::string>* trainable) {
  net.check_depth(stage);
  GradientPlan plan;
  plan.terms = {{stage - 1, 1.0}};
  plan.first_trainable_block = stage;
  plan.train_encoder = stage == 1 && spec.encoder_schedule == EncoderSchedule::stage1_then_freeze;
  if (trainable) {
    const std::string l = std::to_string(stage);
    *trainable = {"sep." + l, "mas." + l, "dec." + l};
    if (plan.train_encoder) trainable->push_back("enc");
  }
  return plan;
}

template <typename Scalar>
GradientPlan finetune_plan(const MaskingNet<Scalar>& net, const RegimeSpec& spec) {
  if (!spec.finetune_weights.empty() && static_cast<int>(spec.finetune_weights.size()) != net.num_heads())
    throw Error(ErrorCode::InvalidConfig, "finetune_weights needs one weight per block");
  GradientPlan plan;
  for (int i = 0; i < net.num_heads(); ++i)
    plan.terms.push_back({i, spec.finetune_weights.empty() ? 1.0 : spec.finetune_weights[i]});
  plan.first_trainable_block = 1;
  plan.train_encoder = true;
  return plan;
}

template <typename Scalar>
TrainHistory train_end_to_end(MaskingNet<Scalar>& net, const TrainingData& data, const RegimeSpec& spec,
                              const TrainHooks<Scalar>& hooks) {
  if (net.family != Family::baseline1) throw Error(ErrorCode::InvalidConfig, "end-to-end training expects Baseline 1");
  const auto started = Clock::now();
  StageProblem<Scalar> p;
  p.net = &net;
  p.plan.terms = {{0, 1.0}};
  p.trainable = all_submodules(net);
  p.stage = 1;
  p.stage_name = "end_to_end_L" + std::to_string(net.num_blocks());
  bind_net_hashes(p);
  TrainHistory h = run_stage(p, data, spec, started, hooks.on_epoch);
  net.trained_depth = net.num_blocks();
  if (hooks.on_stage_end) hooks.on_stage_end(1, net);
  return h;
}

template <typename Scalar>
std::vector<MaskingNet<Scalar>> train_baseline1_int(const ModelConfig& cfg, const TrainingData& data,
                                                    const RegimeSpec& spec, std::vector<TrainHistory>* histories,
                                                    const TrainHooks<Scalar>& hooks) {
  std::vector<MaskingNet<Scalar>> models;
  for (int k = 1; k <= cfg.num_blocks; ++k) {
    ModelConfig c = cfg;
    c.num_blocks = k;
    MaskingNet<Scalar> net(c, Family::baseline1, spec.seed);
    TrainHistory h = train_end_to_end(net, data, spec, hooks);
    if (histories) histories->push_back(std::move(h));
    models.push_back(std::move(net));
  }
  return models;
}

template <typename Scalar>
TrainHistory train_blockwise_time(WeakBlockChain<Scalar>& chain, const TrainingData& data, const RegimeSpec& spec,
                                  const TrainHooks<Scalar>& hooks) {
  const auto started = Clock::now();
  TrainHistory history;
  for (int l = chain.trained_depth + 1; l <= chain.num_blocks(); ++l) {
    StageProblem<Scalar> p;
    p.net = &chain.blocks[l - 1];
    p.plan.terms = {{0, 1.0}};
    p.trainable = all_submodules(*p.net);
    p.stage = l;
    p.stage_name = "weak_block_" + std::to_string(l);
    if (l > 1) p.transform = [&chain, l](const Vector<Scalar>& x) { return chain.forward_at_depth(x, l - 1); };
    p.all_hashes = [&chain] {
      std::map<std::string, std::string> h;
      for (int j = 0; j < chain.num_blocks(); ++j) {
        auto part = net_hashes(chain.blocks[j], "block." + std::to_string(j + 1) + "/");
        h.insert(part.begin(), part.end());
      }
      return h;
    };
    const std::string prefix = "block." + std::to_string(l) + "/";
    p.may_change = [prefix](const std::string& n) { return n.rfind(prefix, 0) == 0; };
    TrainHistory h = run_stage(p, data, spec, started, hooks.on_epoch);
    chain.blocks[l - 1].trained_depth = 1;
    chain.trained_depth = l;
    if (hooks.on_stage_end) hooks.on_stage_end(l, chain.blocks[l - 1]);
    history.append(h);
  }
  return history;
}

template <typename Scalar>
TrainHistory train_bloom_stage(MaskingNet<Scalar>& net, int stage, const TrainingData& data, const RegimeSpec& spec,
                               const TrainHooks<Scalar>& hooks) {
  if (net.family != Family::bloom) throw Error(ErrorCode::InvalidConfig, "blockwise latent training expects BLOOM-Net");
  if (stage != net.trained_depth + 1)
    throw Error(ErrorCode::StageOrderViolation, "stage " + std::to_string(stage) + " requested but " +
                                                    std::to_string(net.trained_depth) + " stage(s) are trained");
  const auto started = Clock::now();
  StageProblem<Scalar> p;
  p.net = &net;
  std::vector<std::string> trainable;
  p.plan = bloom_stage_plan(net, stage, spec, &trainable);
  p.trainable = {trainable.begin(), trainable.end()};
  p.stage = stage;
  p.stage_name = "bloom_stage_" + std::to_string(stage);
  bind_net_hashes(p);
  TrainHistory h = run_stage(p, data, spec, started, hooks.on_epoch);
  net.trained_depth = stage;
  if (hooks.on_stage_end) hooks.on_stage_end(stage, net);
  return h;
}

template <typename Scalar>
TrainHistory train_blockwise_latent(MaskingNet<Scalar>& net, const TrainingData& data, const RegimeSpec& spec,
                                    const TrainHooks<Scalar>& hooks) {
  TrainHistory history;
  for (int l = net.trained_depth + 1; l <= net.num_blocks(); ++l)
    history.append(train_bloom_stage(net, l, data, spec, hooks));
  return history;
}

template <typename Scalar>
TrainHistory fine_tune_joint(MaskingNet<Scalar>& net, const TrainingData& data, const RegimeSpec& spec,
                             const TrainHooks<Scalar>& hooks) {
  if (net.family != Family::bloom) throw Error(ErrorCode::InvalidConfig, "fine-tuning expects BLOOM-Net");
  if (net.trained_depth < net.num_blocks())
    throw Error(ErrorCode::NotFullyTrained, std::to_string(net.trained_depth) + " of " +
                                                std::to_string(net.num_blocks()) + " stages trained");
  const auto started = Clock::now();
  StageProblem<Scalar> p;
  p.net = &net;
  p.plan = finetune_plan(net, spec);
  p.trainable = all_submodules(net);
  p.stage = net.num_blocks() + 1;
  p.stage_name = "finetune";
  bind_net_hashes(p);
  TrainHistory h = run_stage(p, data, spec, started, hooks.on_epoch);
  if (hooks.on_stage_end) hooks.on_stage_end(p.stage, net);
  return h;
}

#define BLOOMNET_INSTANTIATE_TRAINING(S)                                                                          \
  template GradientPlan bloom_stage_plan<S>(const MaskingNet<S>&, int, const RegimeSpec&, std::vector<std::string>*); \
  template GradientPlan finetune_plan<S>(const MaskingNet<S>&, const RegimeSpec&);                                \
  template TrainHistory train_end_to_end<S>(MaskingNet<S>&, const TrainingData&, const RegimeSpec&,               \
                                            const TrainHooks<S>&);                                                \
  template std::vector<MaskingNet<S>> train_baseline1_int<S>(const ModelConfig&, const TrainingData&,             \
                                                             const RegimeSpec&, std::vector<TrainHistory>*,       \
                                                             const TrainHooks<S>&);                               \
  template TrainHistory train_blockwise_time<S>(WeakBlockChain<S>&, const TrainingData&, const RegimeSpec&,       \
                                                const TrainHooks<S>&);                                            \
  template TrainHistory train_bloom_stage<S>(MaskingNet<S>&, int, const TrainingData&, const RegimeSpec&,         \
                                             const TrainHooks<S>&);                                               \
  template TrainHistory train_blockwise_latent<S>(MaskingNet<S>&, const TrainingData&, const RegimeSpec&,         \
                                                  const TrainHooks<S>&);                                          \
  template TrainHistory fine_tune_joint<S>(MaskingNet<S>&, const TrainingData&, const RegimeSpec&,                \
                                           const TrainHooks<S>&);

BLOOMNET_INSTANTIATE_TRAINING(float)
BLOOMNET_INSTANTIATE_TRAINING(double)

}  // namespace bloomnet
