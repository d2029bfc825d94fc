#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bloomnet/signal_metrics.hpp"

namespace bloomnet {

enum class NoiseKind { white, pink, babble_like };
enum class CorpusSource { synthetic, wav_dirs };
enum class Split { train, val, test };

std::string to_string(NoiseKind k);
std::string to_string(CorpusSource s);
std::string to_string(Split s);
NoiseKind parse_noise_kind(const std::string& s);
CorpusSource parse_corpus_source(const std::string& s);
Split parse_split(const std::string& s);

/// Harmonic "speech-like" signal: a pitch contour inside 80-300 Hz, 3-8
/// harmonics with decaying amplitudes and a syllabic envelope with pauses.
/// Unit variance, deterministic per seed. `steady_f0` pins the pitch.
WaveSegment synthesize_speechlike(std::uint64_t seed, double seconds, int rate,
                                  std::optional<double> steady_f0 = std::nullopt);

/// Unit-variance noise. Pink noise is shaped to a 1/f power spectrum;
/// babble is a sum of several speech-like talkers.
WaveSegment synthesize_noise(std::uint64_t seed, double seconds, int rate, NoiseKind kind);

struct CorpusSpec {
  int n_train = 500;
  int n_val = 100;
  int n_test = 100;
  double utterance_seconds = 3.0;
  int sample_rate = 16000;
  double snr_low_db = -5.0;
  double snr_high_db = 10.0;
  std::uint64_t seed = 0;
  CorpusSource source = CorpusSource::synthetic;
  std::vector<NoiseKind> noise_kinds = {NoiseKind::white, NoiseKind::pink, NoiseKind::babble_like};
  // wav_dirs source: directories of mono WAV files at `sample_rate`.
  std::filesystem::path speech_dir;
  std::filesystem::path noise_dir;
  // Utterance lengths are floored so that (T - enc_kernel) % enc_stride == 0.
  int enc_kernel = 16;
  int enc_stride = 8;

  void validate() const;
  long utterance_samples() const;
};

/// One manifest record: enough to regenerate the example bit-exactly.
struct ExampleDescriptor {
  std::string id;
  Split split = Split::train;
  double snr_db = 0.0;
  long num_samples = 0;
  int sample_rate = 16000;
  NoiseKind noise_kind = NoiseKind::white;
  std::uint64_t speech_seed = 0;  // synthetic source
  std::uint64_t noise_seed = 0;
  std::string speech_path;        // wav_dirs source
  std::string noise_path;
};

struct SplitManifest {
  CorpusSource source = CorpusSource::synthetic;
  std::vector<ExampleDescriptor> examples;
  std::string hash;  // SHA-256 over the serialized records

  std::vector<ExampleDescriptor> split(Split s) const;

  /// One JSON object per line: id, split, path-or-seed, snr_db, ...
  std::string to_jsonl() const;
  static SplitManifest from_jsonl(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static SplitManifest load(const std::filesystem::path& path);

  /// Recomputes the content hash from the records.
  std::string compute_hash() const;
};

struct MixtureExample {
  std::string id;
  Split split = Split::train;
  WaveSegment mixture;
  WaveSegment clean;
  WaveSegment noise;  // scaled noise, mixture == clean + noise
  double snr_db = 0.0;
};

SplitManifest build_manifest(const CorpusSpec& spec);
MixtureExample materialize(const ExampleDescriptor& d);

struct Corpus {
  SplitManifest manifest;
  std::vector<MixtureExample> train, val, test;
};

/// Manifest plus every materialized example, grouped by split.
Corpus build_mixture_dataset(const CorpusSpec& spec);
std::vector<MixtureExample> materialize_split(const SplitManifest& manifest, Split split);

/// Uniform crop offset in [0, utterance_length - segment_length].
long sample_offset(long utterance_length, long segment_length, std::mt19937_64& rng);

struct SegmentPair {
  Eigen::VectorXd mixture;
  Eigen::VectorXd clean;
  long offset = 0;
};

/// Aligned crops of mixture and clean speech with a shared offset.
SegmentPair sample_segments(const MixtureExample& ex, long segment_length, std::mt19937_64& rng);

}  // namespace bloomnet
