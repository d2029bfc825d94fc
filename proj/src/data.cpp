#include "bloomnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "bloomnet/config.hpp"
#include "bloomnet/errors.hpp"
#include "bloomnet/hash.hpp"
#include "bloomnet/wav.hpp"

namespace bloomnet {

using json = nlohmann::json;

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::babble_like: return "babble_like";
  }
  return "white";
}
std::string to_string(CorpusSource s) { return s == CorpusSource::synthetic ? "synthetic" : "wav_dirs"; }
std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "white") return NoiseKind::white;
  if (s == "pink") return NoiseKind::pink;
  if (s == "babble_like" || s == "babble") return NoiseKind::babble_like;
  throw Error(ErrorCode::InvalidConfig, "unknown noise kind '" + s + "'");
}
CorpusSource parse_corpus_source(const std::string& s) {
  if (s == "synthetic") return CorpusSource::synthetic;
  if (s == "wav_dirs") return CorpusSource::wav_dirs;
  throw Error(ErrorCode::InvalidConfig, "unknown corpus source '" + s + "'");
}
Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error(ErrorCode::InvalidConfig, "unknown split '" + s + "'");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

long seconds_to_samples(double seconds, int rate) { return std::lround(seconds * rate); }

Eigen::VectorXd speechlike_samples(std::uint64_t seed, long n, int rate, std::optional<double> steady_f0) {
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double base = uniform(100.0, 220.0);
  const double vibrato_rate = uniform(3.0, 7.0), vibrato_depth = uniform(0.02, 0.06), vibrato_phase = uniform(0, kTwoPi);
  const double drift_rate = uniform(0.3, 1.0), drift_phase = uniform(0, kTwoPi);
  const int harmonics = static_cast<int>(std::floor(uniform(3.0, 9.0)));
  const double decay = uniform(0.7, 1.4);
  std::vector<double> phases(harmonics);
  for (auto& p : phases) p = uniform(0, kTwoPi);

  // Syllabic envelope: Hann-shaped voiced stretches separated by pauses.
  Eigen::VectorXd envelope = Eigen::VectorXd::Zero(n);
  long t = 0;
  while (t < n) {
    const long voiced = std::max<long>(1, seconds_to_samples(uniform(0.12, 0.35), rate));
    const double level = uniform(0.5, 1.0);
    for (long i = 0; i < voiced && t + i < n; ++i)
      envelope[t + i] = level * std::sin(std::numbers::pi * (i + 0.5) / voiced);
    t += voiced + seconds_to_samples(uniform(0.04, 0.2), rate);
  }

  Eigen::VectorXd out(n);
  double phase = 0.0;
  const double nyquist = rate / 2.0;
  for (long i = 0; i < n; ++i) {
    const double time = static_cast<double>(i) / rate;
    double f0 = steady_f0.value_or(base * (1.0 + vibrato_depth * std::sin(kTwoPi * vibrato_rate * time + vibrato_phase) +
                                           0.15 * std::sin(kTwoPi * drift_rate * time + drift_phase)));
    if (!steady_f0) f0 = std::clamp(f0, 80.0, 300.0);
    double v = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      if (k * f0 >= nyquist) break;
      v += std::pow(static_cast<double>(k), -decay) * std::sin(k * phase + phases[k - 1]);
    }
    out[i] = envelope[i] * v;
    phase = std::fmod(phase + kTwoPi * f0 / rate, kTwoPi);
  }
  return out;
}

Eigen::VectorXd noise_samples(std::uint64_t seed, long n, int rate, NoiseKind kind) {
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  switch (kind) {
    case NoiseKind::white: {
      Eigen::VectorXd out(n);
      for (long i = 0; i < n; ++i) out[i] = gauss(rng);
      return out;
    }
    case NoiseKind::pink: {
      // 1/f power: scale each bin's amplitude by 1/sqrt(f), DC removed.
      std::vector<std::complex<double>> time(n), spec;
      for (long i = 0; i < n; ++i) time[i] = gauss(rng);
      Eigen::FFT<double> fft;
      fft.fwd(spec, time);
      for (long k = 0; k < n; ++k) {
        const long folded = std::min(k, n - k);
        spec[k] *= folded == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(folded));
      }
      fft.inv(time, spec);
      Eigen::VectorXd out(n);
      for (long i = 0; i < n; ++i) out[i] = time[i].real();
      return out;
    }
    case NoiseKind::babble_like: {
      constexpr int kTalkers = 6;
      Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
      for (int j = 0; j < kTalkers; ++j) {
        Eigen::VectorXd talker = speechlike_samples(derive_seed(seed, "talker." + std::to_string(j)), n, rate, {});
        out += standardize(WaveSegment(talker, rate)).samples;
      }
      return out;
    }
  }
  return Eigen::VectorXd::Zero(n);
}

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw Error(ErrorCode::UnreadableFile, "not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

WaveSegment load_checked(const std::filesystem::path& path, int rate) {
  WavData d = read_wav(path);
  if (d.wave.sample_rate != rate)
    throw Error(ErrorCode::SampleRateMismatch, path.string() + " is " + std::to_string(d.wave.sample_rate) +
                                                   " Hz, corpus expects " + std::to_string(rate) + " Hz");
  return d.wave;
}

double draw_snr(const CorpusSpec& spec, const std::string& id) {
  std::mt19937_64 rng(derive_seed(spec.seed, id + "/snr"));
  if (spec.snr_high_db == spec.snr_low_db) return spec.snr_low_db;
  std::uniform_real_distribution<double> dist(spec.snr_low_db, spec.snr_high_db);
  return dist(rng);
}

std::string make_id(Split split, int index) {
  std::ostringstream os;
  os << to_string(split) << '-' << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

json to_json(const ExampleDescriptor& d, CorpusSource source) {
  json j;
  j["id"] = d.id;
  j["split"] = to_string(d.split);
  j["snr_db"] = d.snr_db;
  j["num_samples"] = d.num_samples;
  j["sample_rate"] = d.sample_rate;
  j["source"] = to_string(source);
  if (source == CorpusSource::synthetic) {
    j["speech_seed"] = d.speech_seed;
    j["noise_seed"] = d.noise_seed;
    j["noise_kind"] = to_string(d.noise_kind);
  } else {
    j["speech_path"] = d.speech_path;
    j["noise_path"] = d.noise_path;
  }
  return j;
}

}  // namespace

WaveSegment synthesize_speechlike(std::uint64_t seed, double seconds, int rate, std::optional<double> steady_f0) {
  const long n = seconds_to_samples(seconds, rate);
  if (n < 1) throw Error(ErrorCode::LengthMismatch, "requested signal is empty");
  return standardize(WaveSegment(speechlike_samples(seed, n, rate, steady_f0), rate));
}

WaveSegment synthesize_noise(std::uint64_t seed, double seconds, int rate, NoiseKind kind) {
  const long n = seconds_to_samples(seconds, rate);
  if (n < 2) throw Error(ErrorCode::LengthMismatch, "requested noise is too short");
  return standardize(WaveSegment(noise_samples(seed, n, rate, kind), rate));
}

void CorpusSpec::validate() const {
  if (n_train < 0 || n_val < 0 || n_test < 0) throw Error(ErrorCode::InvalidConfig, "split sizes must be >= 0");
  if (n_train + n_val + n_test == 0) throw Error(ErrorCode::EmptyCorpus, "corpus has no examples");
  if (snr_low_db > snr_high_db) throw Error(ErrorCode::InvalidConfig, "snr range low > high");
  if (sample_rate <= 0) throw Error(ErrorCode::InvalidConfig, "sample_rate must be positive");
  if (utterance_samples() < 1) throw Error(ErrorCode::InvalidConfig, "utterance shorter than the encoder kernel");
  if (noise_kinds.empty()) throw Error(ErrorCode::InvalidConfig, "no noise kinds configured");
}

long CorpusSpec::utterance_samples() const {
  ModelConfig cfg;
  cfg.enc_kernel = enc_kernel;
  cfg.enc_stride = enc_stride;
  return cfg.floor_valid_length(seconds_to_samples(utterance_seconds, sample_rate));
}

std::vector<ExampleDescriptor> SplitManifest::split(Split s) const {
  std::vector<ExampleDescriptor> out;
  for (const auto& d : examples)
    if (d.split == s) out.push_back(d);
  return out;
}

std::string SplitManifest::to_jsonl() const {
  std::string text;
  for (const auto& d : examples) {
    text += to_json(d, source).dump();
    text += '\n';
  }
  return text;
}

std::string SplitManifest::compute_hash() const { return sha256_hex(to_jsonl()); }

SplitManifest SplitManifest::from_jsonl(const std::string& text) {
  SplitManifest m;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const CorpusSource source = parse_corpus_source(j.at("source").get<std::string>());
    if (first) m.source = source;
    first = false;
    ExampleDescriptor d;
    d.id = j.at("id").get<std::string>();
    d.split = parse_split(j.at("split").get<std::string>());
    d.snr_db = j.at("snr_db").get<double>();
    d.num_samples = j.at("num_samples").get<long>();
    d.sample_rate = j.at("sample_rate").get<int>();
    if (source == CorpusSource::synthetic) {
      d.speech_seed = j.at("speech_seed").get<std::uint64_t>();
      d.noise_seed = j.at("noise_seed").get<std::uint64_t>();
      d.noise_kind = parse_noise_kind(j.at("noise_kind").get<std::string>());
    } else {
      d.speech_path = j.at("speech_path").get<std::string>();
      d.noise_path = j.at("noise_path").get<std::string>();
    }
    m.examples.push_back(std::move(d));
  }
  if (m.examples.empty()) throw Error(ErrorCode::EmptyCorpus, "manifest has no records");
  m.hash = m.compute_hash();
  return m;
}

void SplitManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  out << to_jsonl();
}

SplitManifest SplitManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

SplitManifest build_manifest(const CorpusSpec& spec) {
  spec.validate();
  SplitManifest m;
  m.source = spec.source;
  const std::pair<Split, int> splits[] = {{Split::train, spec.n_train}, {Split::val, spec.n_val}, {Split::test, spec.n_test}};

  if (spec.source == CorpusSource::synthetic) {
    for (const auto& [split, count] : splits) {
      for (int i = 0; i < count; ++i) {
        ExampleDescriptor d;
        d.id = make_id(split, i);
        d.split = split;
        d.snr_db = draw_snr(spec, d.id);
        d.num_samples = spec.utterance_samples();
        d.sample_rate = spec.sample_rate;
        d.speech_seed = derive_seed(spec.seed, d.id + "/speech");
        d.noise_seed = derive_seed(spec.seed, d.id + "/noise");
        std::mt19937_64 rng(derive_seed(spec.seed, d.id + "/kind"));
        std::uniform_int_distribution<std::size_t> pick(0, spec.noise_kinds.size() - 1);
        d.noise_kind = spec.noise_kinds[pick(rng)];
        m.examples.push_back(std::move(d));
      }
    }
  } else {
    const auto speech = list_wavs(spec.speech_dir);
    const auto noise = list_wavs(spec.noise_dir);
    if (speech.empty()) throw Error(ErrorCode::EmptyCorpus, "no WAV files in " + spec.speech_dir.string());
    if (noise.size() < 3) throw Error(ErrorCode::EmptyCorpus, "need at least 3 noise WAV files (one per split)");
    const std::size_t needed = static_cast<std::size_t>(spec.n_train + spec.n_val + spec.n_test);
    if (speech.size() < needed)
      throw Error(ErrorCode::EmptyCorpus, "need " + std::to_string(needed) + " speech files, found " +
                                              std::to_string(speech.size()));
    // Consecutive speech files per split; noise files split proportionally.
    std::size_t speech_cursor = 0;
    std::size_t noise_begin = 0;
    for (int s = 0; s < 3; ++s) {
      const auto [split, count] = splits[s];
      std::size_t noise_count =
          s == 2 ? noise.size() - noise_begin
                 : std::max<std::size_t>(1, noise.size() * static_cast<std::size_t>(count) / needed);
      noise_count = std::min(noise_count, noise.size() - noise_begin - (2 - s));
      for (int i = 0; i < count; ++i) {
        ExampleDescriptor d;
        d.id = make_id(split, i);
        d.split = split;
        d.snr_db = draw_snr(spec, d.id);
        d.sample_rate = spec.sample_rate;
        d.speech_path = speech[speech_cursor++].string();
        std::mt19937_64 rng(derive_seed(spec.seed, d.id + "/noise"));
        std::uniform_int_distribution<std::size_t> pick(0, noise_count - 1);
        d.noise_path = noise[noise_begin + pick(rng)].string();
        const long len = load_checked(d.speech_path, spec.sample_rate).length();
        ModelConfig cfg;
        cfg.enc_kernel = spec.enc_kernel;
        cfg.enc_stride = spec.enc_stride;
        d.num_samples = cfg.floor_valid_length(std::min(len, spec.utterance_samples()));
        if (d.num_samples < 1) throw Error(ErrorCode::UnsupportedFormat, d.speech_path + " is too short");
        m.examples.push_back(std::move(d));
      }
      noise_begin += noise_count;
    }
  }
  m.hash = m.compute_hash();
  return m;
}

MixtureExample materialize(const ExampleDescriptor& d) {
  WaveSegment speech, noise;
  if (!d.speech_path.empty()) {
    const WaveSegment raw_speech = load_checked(d.speech_path, d.sample_rate);
    const WaveSegment raw_noise = load_checked(d.noise_path, d.sample_rate);
    if (raw_speech.length() < d.num_samples)
      throw Error(ErrorCode::LengthMismatch, d.speech_path + " is shorter than its manifest record");
    speech = standardize(WaveSegment(raw_speech.samples.head(d.num_samples), d.sample_rate));
    Eigen::VectorXd tiled(d.num_samples);
    for (long i = 0; i < d.num_samples; ++i) tiled[i] = raw_noise.samples[i % raw_noise.length()];
    noise = standardize(WaveSegment(tiled, d.sample_rate));
  } else {
    speech = standardize(WaveSegment(speechlike_samples(d.speech_seed, d.num_samples, d.sample_rate, {}), d.sample_rate));
    noise = standardize(WaveSegment(noise_samples(d.noise_seed, d.num_samples, d.sample_rate, d.noise_kind), d.sample_rate));
  }
  const Mixture mix = mix_at_snr(speech, noise, d.snr_db);
  MixtureExample ex;
  ex.id = d.id;
  ex.split = d.split;
  ex.snr_db = d.snr_db;
  ex.clean = std::move(speech);
  ex.noise = mix.scaled_noise;
  ex.mixture = mix.mixture;
  return ex;
}

std::vector<MixtureExample> materialize_split(const SplitManifest& manifest, Split split) {
  const auto descriptors = manifest.split(split);
  std::vector<MixtureExample> out(descriptors.size());
  // Each example depends only on its own descriptor, so order is irrelevant.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < descriptors.size(); ++i) out[i] = materialize(descriptors[i]);
  return out;
}

Corpus build_mixture_dataset(const CorpusSpec& spec) {
  Corpus c;
  c.manifest = build_manifest(spec);
  c.train = materialize_split(c.manifest, Split::train);
  c.val = materialize_split(c.manifest, Split::val);
  c.test = materialize_split(c.manifest, Split::test);
  return c;
}

long sample_offset(long utterance_length, long segment_length, std::mt19937_64& rng) {
  if (segment_length > utterance_length)
    throw Error(ErrorCode::LengthMismatch, "segment longer than utterance");
  std::uniform_int_distribution<long> dist(0, utterance_length - segment_length);
  return dist(rng);
}

SegmentPair sample_segments(const MixtureExample& ex, long segment_length, std::mt19937_64& rng) {
  if (ex.mixture.length() != ex.clean.length())
    throw Error(ErrorCode::LengthMismatch, "mixture and clean lengths differ");
  SegmentPair p;
  p.offset = sample_offset(ex.mixture.length(), segment_length, rng);
  p.mixture = ex.mixture.samples.segment(p.offset, segment_length);
  p.clean = ex.clean.samples.segment(p.offset, segment_length);
  return p;
}

}  // namespace bloomnet
