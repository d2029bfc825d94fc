#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bloomnet/backprop.hpp"
#include "bloomnet/data.hpp"
#include "bloomnet/network.hpp"

namespace bloomnet {

enum class Regime { baseline1_full, baseline1_int, baseline2, bloom, bloom_ft };
enum class EncoderSchedule { stage1_then_freeze, always_frozen_pretrained };

std::string to_string(Regime r);
Regime parse_regime(const std::string& s);
std::string to_string(EncoderSchedule e);
EncoderSchedule parse_encoder_schedule(const std::string& s);

struct RegimeSpec {
  Regime regime = Regime::bloom;
  int num_blocks = 6;
  double learning_rate = 1e-4;
  int batch_size = 64;
  double segment_seconds = 1.0;
  int patience = 5;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  EncoderSchedule encoder_schedule = EncoderSchedule::stage1_then_freeze;
  std::vector<double> finetune_weights;  // empty: unweighted sum
  double si_sdr_cap = kDefaultSiSdrCap;

  void validate() const;

  /// Optimizer and batch settings of the published full-scale runs.
  static RegimeSpec full();
  /// Settings used for single-CPU experiments on the synthetic corpus.
  static RegimeSpec desk();
};

/// Mixture/clean utterance pairs used for training and validation.
struct TrainingData {
  struct Pair {
    std::string id;
    Eigen::VectorXd mixture;
    Eigen::VectorXd clean;
  };
  std::vector<Pair> train;
  std::vector<Pair> val;
  int sample_rate = 16000;

  static TrainingData from_corpus(const Corpus& corpus);
};

struct EpochRecord {
  int stage = 0;  // 1..L for stagewise regimes; fine-tuning uses L+1
  std::string stage_name;
  int epoch = 0;  // 0 = evaluation of the starting parameters
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_loss = 0.0;
  double learning_rate = 0.0;
  double wall_time = 0.0;  // seconds since the run started
  int skipped_batches = 0;
  std::map<std::string, std::string> module_hashes;  // every submodule, after the epoch
};

struct StageRecord {
  int stage = 0;
  std::string stage_name;
  std::size_t first_record = 0;  // indices into TrainHistory::epochs, inclusive
  std::size_t last_record = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<std::string> trainable;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<StageRecord> stages;

  /// One JSON object per epoch: stage, epoch, train_loss, val_loss, lr, wall_time.
  void write_jsonl(std::ostream& out) const;
  void append(const TrainHistory& other);
};

enum class StopAction { continue_training, stop, rollback_to_best };

struct StopDecision {
  StopAction action = StopAction::continue_training;
  int best_epoch = 0;
};

/// Stops once `patience` epochs pass without a strict improvement on the
/// best validation loss, or when the budget is exhausted. `stop` means the
/// latest parameters are the best ones; otherwise roll back.
StopDecision early_stop_check(std::span<const double> val_losses, int patience, bool budget_exhausted = false);

template <typename Scalar>
struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(int stage, const MaskingNet<Scalar>&)> on_stage_end;
};

/// Baseline 1 (full or one intermediate size): every parameter trained
/// jointly against the loss of the single head.
template <typename Scalar>
TrainHistory train_end_to_end(MaskingNet<Scalar>& net, const TrainingData& data, const RegimeSpec& spec,
                              const TrainHooks<Scalar>& hooks = {});

/// Baseline 1 - Int.: independent models with 1..L blocks, same seed.
template <typename Scalar>
std::vector<MaskingNet<Scalar>> train_baseline1_int(const ModelConfig& cfg, const TrainingData& data,
                                                    const RegimeSpec& spec, std::vector<TrainHistory>* histories,
                                                    const TrainHooks<Scalar>& hooks = {});

/// Baseline 2: weak blocks trained in order; block l sees the frozen
/// chain's depth-(l-1) output.
template <typename Scalar>
TrainHistory train_blockwise_time(WeakBlockChain<Scalar>& chain, const TrainingData& data, const RegimeSpec& spec,
                                  const TrainHooks<Scalar>& hooks = {});

/// One BLOOM stage. Throws StageOrderViolation unless stage == trained_depth + 1.
template <typename Scalar>
TrainHistory train_bloom_stage(MaskingNet<Scalar>& net, int stage, const TrainingData& data, const RegimeSpec& spec,
                               const TrainHooks<Scalar>& hooks = {});

/// BLOOM: stages trained_depth+1..L in order.
template <typename Scalar>
TrainHistory train_blockwise_latent(MaskingNet<Scalar>& net, const TrainingData& data, const RegimeSpec& spec,
                                    const TrainHooks<Scalar>& hooks = {});

/// BLOOM-FT: all parameters against the (weighted) sum of per-block losses.
template <typename Scalar>
TrainHistory fine_tune_joint(MaskingNet<Scalar>& net, const TrainingData& data, const RegimeSpec& spec,
                             const TrainHooks<Scalar>& hooks = {});

/// Plan used by BLOOM stage `stage` under `spec`.
template <typename Scalar>
GradientPlan bloom_stage_plan(const MaskingNet<Scalar>& net, int stage, const RegimeSpec& spec,
                              std::vector<std::string>* trainable = nullptr);

/// Plan used by joint fine-tuning.
template <typename Scalar>
GradientPlan finetune_plan(const MaskingNet<Scalar>& net, const RegimeSpec& spec);

/// Segment length in samples for the given rate and model.
long segment_samples(const RegimeSpec& spec, const ModelConfig& cfg, int rate);

/// The crops used for validation: one fixed window per utterance.
std::vector<long> validation_offsets(const TrainingData& data, long segment_length, std::uint64_t seed);

/// The crop offsets and visiting order of one training epoch.
struct EpochPlan {
  std::vector<long> offsets;     // per training utterance
  std::vector<std::size_t> order;
};
EpochPlan epoch_plan(const TrainingData& data, long segment_length, std::uint64_t seed, int stage, int epoch);

}  // namespace bloomnet
