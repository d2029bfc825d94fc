#include "bloomnet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "bloomnet/checkpoint.hpp"
#include "bloomnet/wav.hpp"

namespace bloomnet {

using json = nlohmann::json;

int ModelVariant::num_blocks() const {
  switch (kind) {
    case VariantKind::masking_net: return net.num_blocks();
    case VariantKind::weak_chain: return chain.num_blocks();
    case VariantKind::identity: return chain.config.num_blocks;
  }
  return 0;
}

int ModelVariant::trained_depth() const {
  switch (kind) {
    case VariantKind::masking_net: return net.trained_depth;
    case VariantKind::weak_chain: return chain.trained_depth;
    case VariantKind::identity: return chain.config.num_blocks;
  }
  return 0;
}

std::vector<int> ModelVariant::supported_depths() const {
  if (kind == VariantKind::masking_net && net.family == Family::baseline1) return {net.num_blocks()};
  std::vector<int> d;
  for (int l = 1; l <= trained_depth(); ++l) d.push_back(l);
  return d;
}

Eigen::VectorXd ModelVariant::enhance(const Eigen::VectorXd& x, int depth, bool diagnostic) const {
  if (depth < 1 || depth > num_blocks())
    throw Error(ErrorCode::DepthOutOfRange,
                "depth " + std::to_string(depth) + " outside [1, " + std::to_string(num_blocks()) + "]");
  const bool baseline1 = kind == VariantKind::masking_net && net.family == Family::baseline1;
  const int needed = baseline1 ? num_blocks() : depth;
  if (needed > trained_depth())
    throw Error(ErrorCode::DepthExceedsTrained, name + ": depth " + std::to_string(depth) + " requested but only " +
                                                    std::to_string(trained_depth()) + " block(s) are trained");
  if (baseline1 && depth != num_blocks() && !diagnostic)
    throw Error(ErrorCode::DepthOutOfRange, name + ": Baseline 1 runs only at depth " + std::to_string(num_blocks()));
  const Eigen::VectorXf xf = x.cast<float>();
  switch (kind) {
    case VariantKind::masking_net: return net.forward_at_depth(xf, depth, false, nullptr, diagnostic).estimate.cast<double>();
    case VariantKind::weak_chain: return chain.forward_at_depth(xf, depth).cast<double>();
    case VariantKind::identity: return x;
  }
  return x;
}

ModelVariant ModelVariant::from_net(std::string name, MaskingNet<float> net) {
  ModelVariant v;
  v.name = std::move(name);
  v.kind = VariantKind::masking_net;
  v.net = std::move(net);
  return v;
}

ModelVariant ModelVariant::from_chain(std::string name, WeakBlockChain<float> chain) {
  ModelVariant v;
  v.name = std::move(name);
  v.kind = VariantKind::weak_chain;
  v.chain = std::move(chain);
  return v;
}

ModelVariant ModelVariant::identity(int num_blocks) {
  ModelVariant v;
  v.name = "identity";
  v.kind = VariantKind::identity;
  v.chain.config.num_blocks = num_blocks;
  return v;
}

ModelVariant load_variant(const std::filesystem::path& dir, const std::string& name) {
  const CheckpointInfo info = read_checkpoint_info(dir);
  const std::string n = name.empty() ? dir.filename().string() : name;
  ModelVariant v = info.kind == "weak_chain" ? ModelVariant::from_chain(n, load_chain<float>(dir))
                                             : ModelVariant::from_net(n, load_checkpoint<float>(dir));
  v.checkpoint_hash = checkpoint_hash(dir);
  v.corpus_hash = info.corpus_hash;
  return v;
}

const DepthStats* EvalReport::find(const std::string& variant, int depth) const {
  for (const auto& s : stats)
    if (s.variant == variant && s.depth == depth) return &s;
  return nullptr;
}

void EvalReport::merge(const EvalReport& other) {
  scores.insert(scores.end(), other.scores.begin(), other.scores.end());
  stats = aggregate(scores);
  if (!other.metadata.is_object()) return;
  for (auto it = other.metadata.begin(); it != other.metadata.end(); ++it) {
    if (it.key() == "variants" && metadata.contains("variants"))
      for (const auto& v : it.value()) metadata["variants"].push_back(v);
    else
      metadata[it.key()] = it.value();
  }
}

std::vector<DepthStats> aggregate(const std::vector<ExampleScore>& scores) {
  std::vector<std::pair<std::string, int>> keys;
  for (const auto& s : scores) {
    const std::pair<std::string, int> k{s.variant, s.depth};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  std::vector<DepthStats> out;
  for (const auto& [variant, depth] : keys) {
    std::vector<double> v;
    for (const auto& s : scores)
      if (s.variant == variant && s.depth == depth) v.push_back(s.improvement);
    DepthStats d;
    d.variant = variant;
    d.depth = depth;
    d.count = static_cast<long>(v.size());
    d.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - d.mean) * (x - d.mean);
    d.std = std::sqrt(ss / static_cast<double>(v.size()));
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    d.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    out.push_back(d);
  }
  return out;
}

EvalReport evaluate(const ModelVariant& model, const std::vector<MixtureExample>& test, const EvalOptions& opts) {
  if (test.empty()) throw Error(ErrorCode::DataEmpty, "test split is empty");
  std::vector<int> depths(opts.depths.begin(), opts.depths.end());
  if (depths.empty()) depths = model.supported_depths();
  for (int d : depths) {
    const bool baseline1 = model.kind == VariantKind::masking_net && model.net.family == Family::baseline1;
    if (d > model.trained_depth() || (baseline1 && model.trained_depth() < model.num_blocks()))
      throw Error(ErrorCode::DepthExceedsTrained, model.name + ": depth " + std::to_string(d) + " requested but only " +
                                                      std::to_string(model.trained_depth()) + " block(s) are trained");
  }

  EvalReport report;
  bool mismatch = false;
  if (!opts.test_corpus_hash.empty() && !model.corpus_hash.empty() && opts.test_corpus_hash != model.corpus_hash) {
    mismatch = true;
    const std::string msg = std::string(to_string(ErrorCode::ManifestMismatch)) + ": " + model.name +
                            " was trained on a different corpus (" + model.corpus_hash.substr(0, 12) + " vs " +
                            opts.test_corpus_hash.substr(0, 12) + ")";
    if (opts.warn) opts.warn(msg);
    else std::cerr << "warning: " << msg << '\n';
  }

  const std::size_t n = test.size();
  std::vector<ExampleScore> scores(n * depths.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = test[i];
    const double base = si_sdr(ex.clean.samples, ex.mixture.samples, opts.si_sdr_cap);
    for (std::size_t k = 0; k < depths.size(); ++k) {
      const Eigen::VectorXd est = model.enhance(ex.mixture.samples, depths[k], opts.diagnostic);
      ExampleScore& s = scores[k * n + i];
      s.variant = model.name;
      s.depth = depths[k];
      s.id = ex.id;
      s.snr_db = ex.snr_db;
      s.si_sdr_mixture = base;
      s.si_sdr_estimate = si_sdr(ex.clean.samples, est, opts.si_sdr_cap);
      s.improvement = s.si_sdr_estimate - s.si_sdr_mixture;
    }
  }
  report.scores = std::move(scores);
  report.stats = aggregate(report.scores);
  json m;
  m["name"] = model.name;
  m["depths"] = depths;
  m["checkpoint_hash"] = model.checkpoint_hash;
  m["training_corpus_hash"] = model.corpus_hash;
  m["test_corpus_hash"] = opts.test_corpus_hash;
  m["corpus_mismatch"] = mismatch;
  m["diagnostic"] = opts.diagnostic;
  m["test_examples"] = n;
  report.metadata["si_sdr_cap_db"] = opts.si_sdr_cap;
  report.metadata["variants"] = json::array({m});
  return report;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ExampleScore>& scores) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  out << "variant,depth,id,snr_db,si_sdr_mixture,si_sdr_estimate,si_sdri\n" << std::setprecision(17);
  for (const auto& s : scores)
    out << s.variant << ',' << s.depth << ',' << s.id << ',' << s.snr_db << ',' << s.si_sdr_mixture << ','
        << s.si_sdr_estimate << ',' << s.improvement << '\n';
}

std::vector<ExampleScore> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ExampleScore> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw Error(ErrorCode::UnsupportedFormat, path.string() + ": malformed row '" + line + "'");
    ExampleScore s;
    s.variant = f[0];
    s.depth = std::stoi(f[1]);
    s.id = f[2];
    s.snr_db = std::stod(f[3]);
    s.si_sdr_mixture = std::stod(f[4]);
    s.si_sdr_estimate = std::stod(f[5]);
    s.improvement = std::stod(f[6]);
    out.push_back(s);
  }
  return out;
}

json to_json(const EvalReport& r) {
  json j;
  j["metadata"] = r.metadata;
  j["stats"] = json::array();
  for (const auto& s : r.stats)
    j["stats"].push_back({{"variant", s.variant}, {"depth", s.depth}, {"mean_si_sdri", s.mean},
                          {"median_si_sdri", s.median}, {"std_si_sdri", s.std}, {"count", s.count}});
  return j;
}

std::string stats_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "variant,depth,mean_si_sdri,median_si_sdri,std_si_sdri,count\n" << std::setprecision(17);
  for (const auto& s : r.stats)
    os << s.variant << ',' << s.depth << ',' << s.mean << ',' << s.median << ',' << s.std << ',' << s.count << '\n';
  return os.str();
}

std::string stats_text(const EvalReport& r) {
  std::ostringstream os;
  os << "SI-SDR improvement (dB) on the test split\n";
  os << std::left << std::setw(28) << "variant" << std::right << std::setw(6) << "depth" << std::setw(10) << "mean"
     << std::setw(10) << "median" << std::setw(10) << "std" << std::setw(8) << "n" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& s : r.stats)
    os << std::left << std::setw(28) << s.variant << std::right << std::setw(6) << s.depth << std::setw(10) << s.mean
       << std::setw(10) << s.median << std::setw(10) << s.std << std::setw(8) << s.count << '\n';
  return os.str();
}

std::vector<std::filesystem::path> write_report(const EvalReport& report, const std::filesystem::path& dir,
                                                const std::set<std::string>& formats) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  write_scores_csv(dir / "scores.csv", report.scores);
  written.push_back(dir / "scores.csv");
  auto put = [&](const std::string& file, const std::string& text) {
    std::ofstream out(dir / file);
    if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + (dir / file).string());
    out << text;
    written.push_back(dir / file);
  };
  for (const auto& f : formats) {
    if (f == "csv") put("eval.csv", stats_csv(report));
    else if (f == "json") put("eval.json", to_json(report).dump(2) + "\n");
    else if (f == "txt") put("eval.txt", stats_text(report));
    else throw Error(ErrorCode::InvalidConfig, "unknown report format '" + f + "'");
  }
  return written;
}

namespace {

long ceil_valid_length(const ModelConfig& cfg, long n) {
  if (n <= cfg.enc_kernel) return cfg.enc_kernel;
  const long over = (n - cfg.enc_kernel) % cfg.enc_stride;
  return over == 0 ? n : n + cfg.enc_stride - over;
}

const ModelConfig& variant_config(const ModelVariant& m) {
  return m.kind == VariantKind::masking_net ? m.net.config : m.chain.config;
}

}  // namespace

Eigen::VectorXd enhance_signal(const ModelVariant& model, const Eigen::VectorXd& x, int depth, int sample_rate,
                               const DenoiseOptions& opts, int* chunks) {
  if (x.size() < 1) throw Error(ErrorCode::InputTooShort, "empty input signal");
  const ModelConfig& cfg = variant_config(model);
  const double var = variance(x);
  if (var < kVarianceEpsilon) throw Error(ErrorCode::ZeroVarianceSignal, "input is constant");
  const double scale = std::sqrt(var);
  const Eigen::VectorXd xs = x / scale;

  long chunk = cfg.floor_valid_length(std::lround(opts.chunk_seconds * sample_rate));
  if (chunk < cfg.enc_kernel) chunk = cfg.enc_kernel;
  Eigen::VectorXd y(x.size());
  int count = 0;
  for (long start = 0; start < x.size(); start += chunk) {
    const long len = std::min<long>(chunk, x.size() - start);
    const long padded = ceil_valid_length(cfg, len);
    Eigen::VectorXd seg(padded);
    seg.head(len) = xs.segment(start, len);
    if (padded > len) seg.tail(padded - len).setConstant(xs(start + len - 1));
    y.segment(start, len) = model.enhance(seg, depth, opts.diagnostic).head(len);
    ++count;
  }
  if (chunks) *chunks = count;
  return y * scale;
}

DenoiseSummary denoise_file(const ModelVariant& model, const std::filesystem::path& wav_in,
                            const std::filesystem::path& wav_out, const DenoiseOptions& opts) {
  const WavData in = read_wav(wav_in);
  const int depth = opts.depth > 0 ? opts.depth : model.trained_depth();
  const bool baseline1 = model.kind == VariantKind::masking_net && model.net.family == Family::baseline1;
  if (depth > model.trained_depth() || (baseline1 && model.trained_depth() < model.num_blocks()))
    throw Error(ErrorCode::DepthExceedsTrained, "depth " + std::to_string(depth) + " requested but only " +
                                                    std::to_string(model.trained_depth()) + " block(s) are trained");
  std::optional<WaveSegment> reference;
  if (opts.reference) {
    reference = read_wav(*opts.reference).wave;
    if (reference->sample_rate != in.wave.sample_rate)
      throw Error(ErrorCode::SampleRateMismatch, "reference and input sample rates differ");
    if (reference->length() != in.wave.length())
      throw Error(ErrorCode::LengthMismatch, "reference and input lengths differ");
  }

  DenoiseSummary summary;
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::VectorXd y = enhance_signal(model, in.wave.samples, depth, in.wave.sample_rate, opts, &summary.chunks);
  summary.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_wav(wav_out, WaveSegment(y, in.wave.sample_rate), in.encoding);
  summary.num_samples = y.size();
  summary.sample_rate = in.wave.sample_rate;
  summary.depth = depth;
  if (reference) summary.si_sdr_improvement = si_sdr_improvement(reference->samples, in.wave.samples, y);
  return summary;
}

}  // namespace bloomnet
