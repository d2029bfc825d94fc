#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bloomnet/data.hpp"
#include "bloomnet/network.hpp"

namespace bloomnet {

enum class VariantKind { masking_net, weak_chain, identity };

/// A loaded model of any family, evaluated in single precision.
struct ModelVariant {
  std::string name;
  VariantKind kind = VariantKind::masking_net;
  MaskingNet<float> net;
  WeakBlockChain<float> chain;
  std::string checkpoint_hash;
  std::string corpus_hash;  // hash of the corpus the model was trained on

  int num_blocks() const;
  int trained_depth() const;
  /// Depths the variant can run without diagnostic mode.
  std::vector<int> supported_depths() const;

  /// Depth-l estimate. Baseline 1 runs below L only with `diagnostic`.
  Eigen::VectorXd enhance(const Eigen::VectorXd& x, int depth, bool diagnostic = false) const;

  static ModelVariant from_net(std::string name, MaskingNet<float> net);
  static ModelVariant from_chain(std::string name, WeakBlockChain<float> chain);
  /// Test mode: every mask equal to one and the decoder replaced by the identity.
  static ModelVariant identity(int num_blocks);
};

/// Loads a masking-net or weak-chain checkpoint directory.
ModelVariant load_variant(const std::filesystem::path& checkpoint_dir, const std::string& name = "");

struct ExampleScore {
  std::string variant;
  int depth = 0;
  std::string id;
  double snr_db = 0.0;
  double si_sdr_mixture = 0.0;
  double si_sdr_estimate = 0.0;
  double improvement = 0.0;
};

struct DepthStats {
  std::string variant;
  int depth = 0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;  // population
  long count = 0;
};

struct EvalReport {
  std::vector<ExampleScore> scores;
  std::vector<DepthStats> stats;
  nlohmann::json metadata = nlohmann::json::object();

  const DepthStats* find(const std::string& variant, int depth) const;
  void merge(const EvalReport& other);
};

struct EvalOptions {
  std::set<int> depths;  // empty: every supported depth
  bool diagnostic = false;
  double si_sdr_cap = kDefaultSiSdrCap;
  std::string test_corpus_hash;  // compared with the training-time hash
  std::function<void(const std::string&)> warn;
};

/// Statistics per (variant, depth) in first-seen order.
std::vector<DepthStats> aggregate(const std::vector<ExampleScore>& scores);

EvalReport evaluate(const ModelVariant& model, const std::vector<MixtureExample>& test, const EvalOptions& opts = {});

void write_scores_csv(const std::filesystem::path& path, const std::vector<ExampleScore>& scores);
std::vector<ExampleScore> read_scores_csv(const std::filesystem::path& path);

nlohmann::json to_json(const EvalReport& report);
std::string stats_csv(const EvalReport& report);
std::string stats_text(const EvalReport& report);

/// Writes scores.csv plus eval.{csv,json,txt} for each requested format.
std::vector<std::filesystem::path> write_report(const EvalReport& report, const std::filesystem::path& dir,
                                                const std::set<std::string>& formats);

// Long signals are cut into non-overlapping chunks of `chunk_seconds`
// (floored to a valid length). The last chunk is padded by repeating its
// final sample up to the next valid length and the padding is dropped after
// decoding. The input is divided by its standard deviation before inference
// and the output multiplied back.
struct DenoiseOptions {
  int depth = 0;  // 0: trained depth
  double chunk_seconds = 4.0;
  bool diagnostic = false;
  std::optional<std::filesystem::path> reference;
};

struct DenoiseSummary {
  long num_samples = 0;
  int sample_rate = 0;
  int depth = 0;
  int chunks = 0;
  double runtime_seconds = 0.0;
  std::optional<double> si_sdr_improvement;
};

Eigen::VectorXd enhance_signal(const ModelVariant& model, const Eigen::VectorXd& x, int depth, int sample_rate,
                               const DenoiseOptions& opts = {}, int* chunks = nullptr);

DenoiseSummary denoise_file(const ModelVariant& model, const std::filesystem::path& wav_in,
                            const std::filesystem::path& wav_out, const DenoiseOptions& opts);

}  // namespace bloomnet
