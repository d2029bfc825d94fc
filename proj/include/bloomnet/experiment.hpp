#pragma once

// Config-driven runner. A config is a JSON document:
//
// {
//   "profile": "desk",            // full | desk, picks model and regime defaults
//   "seed": 7,                    // corpus and training seed
//   "output_dir": "runs/desk",
//   "corpus":  { "n_train", "n_val", "n_test", "utterance_seconds", "sample_rate",
//                "snr_low_db", "snr_high_db", "source": "synthetic" | "wav_dirs",
//                "noise_kinds": ["white", "pink", "babble_like"],
//                "speech_dir", "noise_dir" },
//   "model":   { "num_blocks", "latent_channels", "enc_kernel", "enc_stride",
//                "sep_hidden", "sep_kernel", "mask_input": "block" | "accumulated" },
//   "regime":  { "name": "bloom" | "bloom_ft" | "baseline1_full" | "baseline1_int" | "baseline2",
//                "learning_rate", "batch_size", "segment_seconds", "patience",
//                "max_epochs", "encoder_schedule", "finetune_weights", "si_sdr_cap" },
//   "report":  { "formats": ["csv", "json", "txt"], "plot_examples": 1,
//                "plot_depths": [], "diagnostic": true }
// }
//
// Every key is optional. Output layout under output_dir:
//   corpus/manifest.jsonl
//   checkpoints/<regime>/...     bloom: stage.<l>/ and final/; baseline1_int: L<l>/
//   logs/<regime>.jsonl
//   reports/<regime>/scores.csv, eval.{csv,json,txt}
//   reports/complexity.{csv,txt}
//   plots/<regime>/<example id>/*.png
//   run_manifest.json            config, status and the SHA-256 of every file

#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bloomnet/data.hpp"
#include "bloomnet/evaluation.hpp"
#include "bloomnet/training.hpp"

namespace bloomnet {

struct ExperimentConfig {
  Profile profile = Profile::desk;
  CorpusSpec corpus;
  ModelConfig model;
  RegimeSpec regime;
  std::filesystem::path output_dir = "runs/default";
  std::set<std::string> report_formats = {"csv", "json", "txt"};
  int plot_examples = 1;
  std::vector<int> plot_depths;  // empty: every depth
  bool diagnostic = true;        // Baseline 1 Full: also report intermediate-latent masking

  static ExperimentConfig defaults(Profile p);
  /// Applies `j` on top of the profile defaults it names.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  std::string hash() const;

  void set_seed(std::uint64_t seed);
  void validate() const;
};

/// Applies "a.b=value" overrides to a JSON document. Values are parsed as
/// JSON when possible and kept as strings otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

struct ExperimentResult {
  EvalReport report;
  nlohmann::json manifest;
  std::vector<std::filesystem::path> checkpoints;
};

struct ExperimentCallbacks {
  std::function<void(const std::string&)> log;
  std::function<void(const EpochRecord&)> on_epoch;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentCallbacks& cb = {});

/// Builds (or reuses) the corpus of `cfg` and writes corpus/manifest.jsonl.
Corpus prepare_corpus(const ExperimentConfig& cfg);

nlohmann::json corpus_to_json(const CorpusSpec& c);

/// Hashes every regular file below `dir` (relative paths, sorted).
nlohmann::json hash_tree(const std::filesystem::path& dir, const std::set<std::string>& skip = {});

}  // namespace bloomnet
