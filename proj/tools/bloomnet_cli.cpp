#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "bloomnet/checkpoint.hpp"
#include "bloomnet/complexity.hpp"
#include "bloomnet/evaluation.hpp"
#include "bloomnet/experiment.hpp"
#include "bloomnet/wav.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bloomnet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::DivergenceDetected: return kDivergence;
    case ErrorCode::InvalidConfig:
    case ErrorCode::DepthOutOfRange:
    case ErrorCode::DepthExceedsTrained:
    case ErrorCode::StageOrderViolation:
    case ErrorCode::NotFullyTrained: return kUsage;
    default: return kData;
  }
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile;
  int depth = 0;
  std::string output_dir;
  std::vector<std::string> overrides;
  bool quiet = false;
};

ExperimentConfig make_config(const Globals& g, const std::string& regime = "") {
  json j = json::object();
  if (!g.config.empty()) {
    std::ifstream in(g.config);
    if (!in) throw Error(ErrorCode::UnreadableFile, "cannot read config " + g.config);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, g.config + ": " + e.what());
    }
  }
  if (!g.profile.empty()) j["profile"] = g.profile;
  if (g.seed) j["seed"] = *g.seed;
  if (!g.output_dir.empty()) j["output_dir"] = g.output_dir;
  if (!regime.empty()) j["regime"]["name"] = regime;
  for (const auto& o : g.overrides) apply_override(j, o);
  return ExperimentConfig::from_json(j);
}

void print_report(const EvalReport& r) { std::cout << stats_text(r); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scalable time-domain speech enhancement with residual blocks and per-block heads"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config");
  app.add_option("--seed", g.seed, "Seed for corpus and training");
  app.add_option("--profile", g.profile, "Model size profile")->check(CLI::IsMember({"full", "desk"}));
  app.add_option("--depth", g.depth, "Number of blocks used at inference (0: trained depth)")->check(CLI::NonNegativeNumber);
  app.add_option("--output-dir", g.output_dir, "Directory for all artifacts");
  app.add_option("--set", g.overrides, "Config override key.path=value (repeatable)");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  auto* synth = app.add_subcommand("synth-data", "Build the mixture corpus and its manifest");
  std::string wav_dir;
  synth->add_option("--wav-dir", wav_dir, "Also write test mixtures and clean speech as WAV files here");

  auto* train = app.add_subcommand("train", "Train one regime, then evaluate and write reports");
  std::string regime;
  train->add_option("--regime", regime, "Training regime")
      ->check(CLI::IsMember({"bloom", "bloom_ft", "baseline1_full", "baseline1_int", "baseline2"}));

  auto* finetune = app.add_subcommand("finetune", "Jointly fine-tune a trained BLOOM model (trains it first if missing)");

  auto* eval = app.add_subcommand("evaluate", "Score checkpoints on the test split");
  std::vector<std::string> checkpoints;
  std::string manifest_path, eval_out;
  std::vector<int> depths;
  bool diagnostic = false;
  std::vector<std::string> formats = {"csv", "json", "txt"};
  eval->add_option("--checkpoint", checkpoints, "Checkpoint directory (repeatable)")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--manifest", manifest_path, "Corpus manifest (default: build from config)")->check(CLI::ExistingFile);
  eval->add_option("--depths", depths, "Depths to evaluate (default: all trained, or --depth)");
  eval->add_flag("--diagnostic", diagnostic, "Let Baseline 1 mask from intermediate latents");
  eval->add_option("--out", eval_out, "Report directory");
  eval->add_option("--formats", formats, "Report formats")->check(CLI::IsMember({"csv", "json", "txt"}));

  auto* denoise = app.add_subcommand("denoise", "Enhance a WAV file at a chosen depth");
  std::string ckpt, wav_in, wav_out, reference;
  double chunk_seconds = 4.0;
  denoise->add_option("--checkpoint", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  denoise->add_option("--in", wav_in, "Input WAV")->required()->check(CLI::ExistingFile);
  denoise->add_option("--out", wav_out, "Output WAV")->required();
  denoise->add_option("--reference", reference, "Clean reference WAV for SI-SDRi")->check(CLI::ExistingFile);
  denoise->add_option("--chunk-seconds", chunk_seconds, "Chunk length for long inputs")->check(CLI::PositiveNumber);

  auto* profile = app.add_subcommand("profile", "Print parameter and MAC counts per depth");
  double seconds = 1.0;
  std::string profile_format = "txt";
  profile->add_option("--seconds", seconds, "Input duration")->check(CLI::PositiveNumber);
  profile->add_option("--format", profile_format, "Output format")->check(CLI::IsMember({"txt", "csv"}));

  auto* report = app.add_subcommand("report", "Recompute report statistics from a per-example score file");
  std::string scores_path, report_out;
  report->add_option("--scores", scores_path, "scores.csv written by evaluate or train")->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "Write eval.{csv,json,txt} here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  auto log = [&](const std::string& m) {
    if (!g.quiet) std::cerr << m << '\n';
  };

  try {
    if (*synth) {
      const ExperimentConfig cfg = make_config(g);
      const Corpus corpus = prepare_corpus(cfg);
      std::cout << "manifest " << (cfg.output_dir / "corpus" / "manifest.jsonl").string() << '\n'
                << "train " << corpus.train.size() << " val " << corpus.val.size() << " test " << corpus.test.size()
                << '\n'
                << "hash " << corpus.manifest.hash << '\n';
      if (!wav_dir.empty()) {
        fs::create_directories(wav_dir);
        for (const auto& ex : corpus.test) {
          write_wav(fs::path(wav_dir) / (ex.id + "_mixture.wav"), ex.mixture);
          write_wav(fs::path(wav_dir) / (ex.id + "_clean.wav"), ex.clean);
        }
      }
      return kOk;
    }

    if (*train || *finetune) {
      const ExperimentConfig cfg = make_config(g, *finetune ? "bloom_ft" : regime);
      ExperimentCallbacks cb;
      cb.log = log;
      cb.on_epoch = [&](const EpochRecord& r) {
        if (g.quiet) return;
        std::ostringstream os;
        os << std::fixed << std::setprecision(3) << "  " << r.stage_name << " epoch " << r.epoch << " train "
           << r.train_loss << " val " << r.val_loss << " (" << std::setprecision(1) << r.wall_time << " s)";
        std::cerr << os.str() << '\n';
      };
      const ExperimentResult res = run_experiment(cfg, cb);
      print_report(res.report);
      std::cout << "artifacts in " << cfg.output_dir.string() << '\n';
      return kOk;
    }

    if (*eval) {
      const ExperimentConfig cfg = make_config(g);
      SplitManifest manifest;
      std::vector<MixtureExample> test;
      if (!manifest_path.empty()) {
        manifest = SplitManifest::load(manifest_path);
        test = materialize_split(manifest, Split::test);
      } else {
        Corpus c = build_mixture_dataset(cfg.corpus);
        manifest = c.manifest;
        test = std::move(c.test);
      }
      EvalOptions opts;
      if (!depths.empty()) opts.depths.insert(depths.begin(), depths.end());
      else if (g.depth > 0) opts.depths.insert(g.depth);
      opts.diagnostic = diagnostic;
      opts.test_corpus_hash = manifest.hash;
      opts.si_sdr_cap = cfg.regime.si_sdr_cap;
      opts.warn = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
      EvalReport all;
      for (const auto& c : checkpoints) {
        const ModelVariant v = load_variant(c);
        const EvalReport r = evaluate(v, test, opts);
        if (all.scores.empty()) all = r;
        else all.merge(r);
      }
      print_report(all);
      if (!eval_out.empty()) write_report(all, eval_out, std::set<std::string>(formats.begin(), formats.end()));
      return kOk;
    }

    if (*denoise) {
      const ModelVariant v = load_variant(ckpt);
      DenoiseOptions opts;
      opts.depth = g.depth;
      opts.chunk_seconds = chunk_seconds;
      if (!reference.empty()) opts.reference = reference;
      const DenoiseSummary s = denoise_file(v, wav_in, wav_out, opts);
      std::cout << wav_out << ": " << s.num_samples << " samples at " << s.sample_rate << " Hz, depth " << s.depth
                << ", " << s.chunks << " chunk(s), " << std::fixed << std::setprecision(3) << s.runtime_seconds
                << " s";
      if (s.si_sdr_improvement) std::cout << ", SI-SDRi " << std::setprecision(2) << *s.si_sdr_improvement << " dB";
      std::cout << '\n';
      return kOk;
    }

    if (*profile) {
      const ExperimentConfig cfg = make_config(g);
      const auto table = scalability_table(
          cfg.model, {ModelFamily::baseline1_int, ModelFamily::bloom, ModelFamily::baseline2}, seconds,
          cfg.corpus.sample_rate);
      std::cout << (profile_format == "csv" ? to_csv(table) : to_text(table));
      return kOk;
    }

    if (*report) {
      EvalReport r;
      r.scores = read_scores_csv(scores_path);
      r.stats = aggregate(r.scores);
      r.metadata["source"] = scores_path;
      print_report(r);
      if (!report_out.empty()) write_report(r, report_out, {"csv", "json", "txt"});
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
