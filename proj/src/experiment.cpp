#include "bloomnet/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bloomnet/checkpoint.hpp"
#include "bloomnet/complexity.hpp"
#include "bloomnet/hash.hpp"
#include "bloomnet/spectrogram.hpp"

namespace bloomnet {

using json = nlohmann::json;
namespace fs = std::filesystem;

ExperimentConfig ExperimentConfig::defaults(Profile p) {
  ExperimentConfig c;
  c.profile = p;
  c.model = ModelConfig::for_profile(p);
  c.regime = p == Profile::full ? RegimeSpec::full() : RegimeSpec::desk();
  c.regime.num_blocks = c.model.num_blocks;
  c.corpus.enc_kernel = c.model.enc_kernel;
  c.corpus.enc_stride = c.model.enc_stride;
  return c;
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  corpus.seed = seed;
  regime.seed = seed;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  try {
    ExperimentConfig c = defaults(parse_profile(j.value("profile", std::string("desk"))));
    if (j.contains("seed")) c.set_seed(j.at("seed").get<std::uint64_t>());
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("model")) {
      json m = config_to_json(c.model);
      m.update(j.at("model"));
      m["profile"] = to_string(c.profile);
      c.model = config_from_json(m);
    }
    c.regime.num_blocks = c.model.num_blocks;
    c.corpus.enc_kernel = c.model.enc_kernel;
    c.corpus.enc_stride = c.model.enc_stride;

    if (j.contains("corpus")) {
      const json& k = j.at("corpus");
      auto& s = c.corpus;
      s.n_train = k.value("n_train", s.n_train);
      s.n_val = k.value("n_val", s.n_val);
      s.n_test = k.value("n_test", s.n_test);
      s.utterance_seconds = k.value("utterance_seconds", s.utterance_seconds);
      s.sample_rate = k.value("sample_rate", s.sample_rate);
      s.snr_low_db = k.value("snr_low_db", s.snr_low_db);
      s.snr_high_db = k.value("snr_high_db", s.snr_high_db);
      s.seed = k.value("seed", s.seed);
      if (k.contains("source")) s.source = parse_corpus_source(k.at("source").get<std::string>());
      if (k.contains("noise_kinds")) {
        s.noise_kinds.clear();
        for (const auto& n : k.at("noise_kinds")) s.noise_kinds.push_back(parse_noise_kind(n.get<std::string>()));
      }
      if (k.contains("speech_dir")) s.speech_dir = k.at("speech_dir").get<std::string>();
      if (k.contains("noise_dir")) s.noise_dir = k.at("noise_dir").get<std::string>();
    }

    if (j.contains("regime")) {
      const json& r = j.at("regime");
      auto& s = c.regime;
      if (r.contains("name")) s.regime = parse_regime(r.at("name").get<std::string>());
      s.learning_rate = r.value("learning_rate", s.learning_rate);
      s.batch_size = r.value("batch_size", s.batch_size);
      s.segment_seconds = r.value("segment_seconds", s.segment_seconds);
      s.patience = r.value("patience", s.patience);
      s.max_epochs = r.value("max_epochs", s.max_epochs);
      s.seed = r.value("seed", s.seed);
      if (r.contains("encoder_schedule"))
        s.encoder_schedule = parse_encoder_schedule(r.at("encoder_schedule").get<std::string>());
      s.finetune_weights = r.value("finetune_weights", s.finetune_weights);
      s.si_sdr_cap = r.value("si_sdr_cap", s.si_sdr_cap);
    }

    if (j.contains("report")) {
      const json& r = j.at("report");
      if (r.contains("formats")) c.report_formats = r.at("formats").get<std::set<std::string>>();
      c.plot_examples = r.value("plot_examples", c.plot_examples);
      c.plot_depths = r.value("plot_depths", c.plot_depths);
      c.diagnostic = r.value("diagnostic", c.diagnostic);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return from_json(j);
}

json corpus_to_json(const CorpusSpec& s) {
  json kinds = json::array();
  for (auto k : s.noise_kinds) kinds.push_back(to_string(k));
  return {{"n_train", s.n_train},
          {"n_val", s.n_val},
          {"n_test", s.n_test},
          {"utterance_seconds", s.utterance_seconds},
          {"sample_rate", s.sample_rate},
          {"snr_low_db", s.snr_low_db},
          {"snr_high_db", s.snr_high_db},
          {"seed", s.seed},
          {"source", to_string(s.source)},
          {"noise_kinds", kinds},
          {"speech_dir", s.speech_dir.string()},
          {"noise_dir", s.noise_dir.string()}};
}

json ExperimentConfig::to_json() const {
  json m = config_to_json(model);
  json r = {{"name", to_string(regime.regime)},
            {"learning_rate", regime.learning_rate},
            {"batch_size", regime.batch_size},
            {"segment_seconds", regime.segment_seconds},
            {"patience", regime.patience},
            {"max_epochs", regime.max_epochs},
            {"seed", regime.seed},
            {"encoder_schedule", to_string(regime.encoder_schedule)},
            {"finetune_weights", regime.finetune_weights},
            {"si_sdr_cap", regime.si_sdr_cap}};
  return {{"profile", to_string(profile)},
          {"output_dir", output_dir.string()},
          {"corpus", corpus_to_json(corpus)},
          {"model", m},
          {"regime", r},
          {"report",
           {{"formats", report_formats}, {"plot_examples", plot_examples}, {"plot_depths", plot_depths},
            {"diagnostic", diagnostic}}}};
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

void ExperimentConfig::validate() const {
  model.validate();
  corpus.validate();
  regime.validate();
  if (regime.num_blocks != model.num_blocks)
    throw Error(ErrorCode::InvalidConfig, "regime and model disagree on the number of blocks");
  for (const auto& f : report_formats)
    if (f != "csv" && f != "json" && f != "txt") throw Error(ErrorCode::InvalidConfig, "unknown report format '" + f + "'");
  for (int d : plot_depths)
    if (d < 1 || d > model.num_blocks) throw Error(ErrorCode::InvalidConfig, "plot depth out of range");
  if (plot_examples < 0) throw Error(ErrorCode::InvalidConfig, "plot_examples must be >= 0");
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::InvalidConfig, "override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

json hash_tree(const fs::path& dir, const std::set<std::string>& skip) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      const std::string rel = fs::relative(e.path(), dir).generic_string();
      if (!skip.count(rel)) files.push_back(rel);
    }
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) out[f] = sha256_file(dir / f);
  return out;
}

Corpus prepare_corpus(const ExperimentConfig& cfg) {
  Corpus corpus = build_mixture_dataset(cfg.corpus);
  fs::create_directories(cfg.output_dir / "corpus");
  corpus.manifest.save(cfg.output_dir / "corpus" / "manifest.jsonl");
  return corpus;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  out << text;
}

void write_history(const fs::path& path, const TrainHistory& h) {
  std::ostringstream os;
  h.write_jsonl(os);
  write_text(path, os.str());
}

struct Runner {
  const ExperimentConfig& cfg;
  const ExperimentCallbacks& cb;
  Corpus corpus;
  TrainingData data;
  ExperimentResult result;

  void log(const std::string& msg) const {
    if (cb.log) cb.log(msg);
  }

  TrainHooks<float> hooks() const {
    TrainHooks<float> h;
    h.on_epoch = cb.on_epoch;
    return h;
  }

  fs::path ckpt(const std::string& regime, const std::string& leaf) const {
    return cfg.output_dir / "checkpoints" / regime / leaf;
  }

  void remember(const fs::path& p) { result.checkpoints.push_back(p); }

  MaskingNet<float> train_bloom() {
    log("training bloom (" + std::to_string(cfg.model.num_blocks) + " stages)");
    MaskingNet<float> net(cfg.model, Family::bloom, cfg.regime.seed);
    TrainHooks<float> h = hooks();
    h.on_stage_end = [&](int stage, const MaskingNet<float>& n) {
      const auto p = ckpt("bloom", "stage." + std::to_string(stage));
      save_checkpoint(n, p, corpus.manifest.hash);
      remember(p);
      log("  stage " + std::to_string(stage) + " done");
    };
    const TrainHistory hist = train_blockwise_latent(net, data, cfg.regime, h);
    write_history(cfg.output_dir / "logs" / "bloom.jsonl", hist);
    save_checkpoint(net, ckpt("bloom", "final"), corpus.manifest.hash);
    remember(ckpt("bloom", "final"));
    return net;
  }

  MaskingNet<float> bloom_for_finetune() {
    const auto p = ckpt("bloom", "final");
    if (fs::exists(p / "manifest.json")) {
      const auto info = read_checkpoint_info(p);
      if (info.kind == "masking_net" && info.family == Family::bloom && info.trained_depth == cfg.model.num_blocks &&
          config_to_json(info.config) == config_to_json(cfg.model)) {
        if (info.corpus_hash != corpus.manifest.hash)
          log(std::string("warning: ") + to_string(ErrorCode::ManifestMismatch) + ": bloom checkpoint was trained on another corpus");
        log("fine-tuning the existing bloom checkpoint " + p.string());
        auto net = load_checkpoint<float>(p);
        return net;
      }
    }
    return train_bloom();
  }

  void add(const ModelVariant& v, const EvalOptions& opts) {
    EvalOptions o = opts;
    o.si_sdr_cap = cfg.regime.si_sdr_cap;
    o.test_corpus_hash = corpus.manifest.hash;
    o.warn = [this](const std::string& m) { log("warning: " + m); };
    const EvalReport r = evaluate(v, corpus.test, o);
    if (result.report.scores.empty()) result.report = r;
    else result.report.merge(r);
  }

  void plots(const ModelVariant& v, std::vector<int> depths) {
    if (!cfg.plot_depths.empty()) {
      std::vector<int> keep;
      for (int d : depths)
        if (std::find(cfg.plot_depths.begin(), cfg.plot_depths.end(), d) != cfg.plot_depths.end()) keep.push_back(d);
      depths = keep;
    }
    const int n = std::min<int>(cfg.plot_examples, static_cast<int>(corpus.test.size()));
    for (int i = 0; i < n; ++i) {
      const auto& ex = corpus.test[i];
      std::map<int, Eigen::VectorXd> est;
      for (int d : depths) est[d] = v.enhance(ex.mixture.samples, d);
      emit_spectrograms(ex.mixture.samples, est, ex.clean.samples, ex.mixture.sample_rate,
                        cfg.output_dir / "plots" / v.name / ex.id);
    }
  }

  ModelVariant variant_of(const std::string& name, const fs::path& dir) {
    ModelVariant v = load_variant(dir, name);
    return v;
  }

  void run() {
    const std::string regime = to_string(cfg.regime.regime);
    const int L = cfg.model.num_blocks;
    switch (cfg.regime.regime) {
      case Regime::bloom: {
        train_bloom();
        const auto v = variant_of("bloom", ckpt("bloom", "final"));
        add(v, {});
        plots(v, v.supported_depths());
        break;
      }
      case Regime::bloom_ft: {
        MaskingNet<float> net = bloom_for_finetune();
        const auto before = variant_of("bloom", ckpt("bloom", "final"));
        log("fine-tuning bloom jointly");
        const TrainHistory hist = fine_tune_joint(net, data, cfg.regime, hooks());
        write_history(cfg.output_dir / "logs" / "bloom_ft.jsonl", hist);
        save_checkpoint(net, ckpt("bloom_ft", "final"), corpus.manifest.hash);
        remember(ckpt("bloom_ft", "final"));
        const auto v = variant_of("bloom_ft", ckpt("bloom_ft", "final"));
        add(before, {});
        add(v, {});
        plots(v, v.supported_depths());
        break;
      }
      case Regime::baseline1_full: {
        log("training baseline1_full");
        MaskingNet<float> net(cfg.model, Family::baseline1, cfg.regime.seed);
        const TrainHistory hist = train_end_to_end(net, data, cfg.regime, hooks());
        write_history(cfg.output_dir / "logs" / "baseline1_full.jsonl", hist);
        save_checkpoint(net, ckpt("baseline1_full", "final"), corpus.manifest.hash);
        remember(ckpt("baseline1_full", "final"));
        const auto v = variant_of("baseline1_full", ckpt("baseline1_full", "final"));
        add(v, {});
        if (cfg.diagnostic && L > 1) {
          ModelVariant diag = v;
          diag.name = "baseline1_full_diagnostic";
          EvalOptions o;
          for (int l = 1; l < L; ++l) o.depths.insert(l);
          o.diagnostic = true;
          add(diag, o);
        }
        plots(v, {L});
        break;
      }
      case Regime::baseline1_int: {
        log("training baseline1_int (" + std::to_string(L) + " models)");
        std::vector<TrainHistory> histories;
        const auto nets = train_baseline1_int(cfg.model, data, cfg.regime, &histories, hooks());
        TrainHistory all;
        for (const auto& h : histories) all.append(h);
        write_history(cfg.output_dir / "logs" / "baseline1_int.jsonl", all);
        for (int l = 1; l <= L; ++l) {
          const auto p = ckpt("baseline1_int", "L" + std::to_string(l));
          save_checkpoint(nets[l - 1], p, corpus.manifest.hash);
          remember(p);
          const auto v = variant_of("baseline1_int", p);
          add(v, {});
          plots(v, {l});
        }
        break;
      }
      case Regime::baseline2: {
        log("training baseline2 (" + std::to_string(L) + " weak blocks)");
        WeakBlockChain<float> chain(cfg.model, cfg.regime.seed);
        const TrainHistory hist = train_blockwise_time(chain, data, cfg.regime, hooks());
        write_history(cfg.output_dir / "logs" / "baseline2.jsonl", hist);
        save_chain(chain, ckpt("baseline2", "final"), corpus.manifest.hash);
        remember(ckpt("baseline2", "final"));
        const auto v = variant_of("baseline2", ckpt("baseline2", "final"));
        add(v, {});
        plots(v, v.supported_depths());
        break;
      }
    }
    result.report.metadata["config_hash"] = cfg.hash();
    result.report.metadata["corpus_hash"] = corpus.manifest.hash;
    write_report(result.report, cfg.output_dir / "reports" / regime, cfg.report_formats);

    const auto table = scalability_table(cfg.model, {ModelFamily::baseline1_int, ModelFamily::bloom, ModelFamily::baseline2},
                                         cfg.regime.segment_seconds, cfg.corpus.sample_rate);
    write_text(cfg.output_dir / "reports" / "complexity.csv", to_csv(table));
    write_text(cfg.output_dir / "reports" / "complexity.txt", to_text(table));
  }
};

void write_run_manifest(const ExperimentConfig& cfg, const std::string& status, const std::string& corpus_hash,
                        json* out) {
  json m;
  m["status"] = status;
  m["config"] = cfg.to_json();
  m["config_hash"] = cfg.hash();
  m["corpus_hash"] = corpus_hash;
  m["files"] = fs::exists(cfg.output_dir) ? hash_tree(cfg.output_dir, {"run_manifest.json"}) : json::object();
  write_text(cfg.output_dir / "run_manifest.json", m.dump(2) + "\n");
  if (out) *out = m;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentCallbacks& cb) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  Runner r{cfg, cb, {}, {}, {}};
  try {
    r.log("building corpus");
    r.corpus = prepare_corpus(cfg);
    r.data = TrainingData::from_corpus(r.corpus);
    r.run();
  } catch (const std::exception& e) {
    write_run_manifest(cfg, std::string("partial: ") + e.what(), r.corpus.manifest.hash, nullptr);
    throw;
  }
  write_run_manifest(cfg, "complete", r.corpus.manifest.hash, &r.result.manifest);
  return std::move(r.result);
}

}  // namespace bloomnet
