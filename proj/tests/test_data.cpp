#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <unsupported/Eigen/FFT>

#include "bloomnet/data.hpp"
#include "bloomnet/wav.hpp"

using namespace bloomnet;
namespace fs = std::filesystem;

namespace {

double snr_of(const Eigen::VectorXd& s, const Eigen::VectorXd& n) {
  return 10.0 * std::log10(s.squaredNorm() / n.squaredNorm());
}

// Welch periodogram with a Hann window, 50% overlap.
Eigen::VectorXd periodogram(const Eigen::VectorXd& x, int nfft) {
  Eigen::FFT<double> fft;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(nfft / 2 + 1);
  std::vector<double> frame(nfft);
  std::vector<std::complex<double>> spec;
  int count = 0;
  for (long start = 0; start + nfft <= x.size(); start += nfft / 2, ++count) {
    for (int i = 0; i < nfft; ++i) frame[i] = x(start + i) * (0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / nfft));
    fft.fwd(spec, frame);
    for (int k = 0; k <= nfft / 2; ++k) acc(k) += std::norm(spec[k]);
  }
  return acc / count;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("bloomnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CorpusSpec small_corpus(int train, int val, int test) {
  CorpusSpec c;
  c.n_train = train;
  c.n_val = val;
  c.n_test = test;
  c.utterance_seconds = 0.5;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("speech-like synthesis is deterministic and unit variance") {
  const auto a = synthesize_speechlike(11, 1.0, 16000);
  const auto b = synthesize_speechlike(11, 1.0, 16000);
  CHECK((a.samples.array() == b.samples.array()).all());
  CHECK(a.length() == 16000);
  const double mean = a.samples.mean();
  const double var = (a.samples.array() - mean).square().mean();
  CHECK(std::abs(var - 1.0) < 1e-10);
  CHECK_FALSE((a.samples.array() == synthesize_speechlike(12, 1.0, 16000).samples.array()).all());
}

TEST_CASE("steady pitch puts the spectral peak at f0") {
  for (double f0 : {90.0, 150.0, 220.0, 290.0}) {
    const int rate = 16000;
    const auto w = synthesize_speechlike(5, 1.0, rate, f0);
    Eigen::FFT<double> fft;
    std::vector<double> x(w.samples.data(), w.samples.data() + w.length());
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, x);
    const double bin = static_cast<double>(rate) / w.length();
    // Search below the third harmonic so the fundamental competes only with the second.
    const int hi = static_cast<int>(2.5 * f0 / bin);
    int best = 1;
    for (int k = 1; k < hi; ++k)
      if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
    CHECK(std::abs(best * bin - f0) <= bin);
  }
}

TEST_CASE("noise synthesis") {
  const int rate = 16000;
  SUBCASE("determinism and unit variance") {
    for (auto kind : {NoiseKind::white, NoiseKind::pink, NoiseKind::babble_like}) {
      const auto a = synthesize_noise(4, 1.0, rate, kind);
      const auto b = synthesize_noise(4, 1.0, rate, kind);
      CHECK((a.samples.array() == b.samples.array()).all());
      const double m = a.samples.mean();
      CHECK(std::abs((a.samples.array() - m).square().mean() - 1.0) < 1e-10);
    }
  }
  SUBCASE("white noise is uncorrelated") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto w = synthesize_noise(seed, 1.0, rate, NoiseKind::white).samples;
      const Eigen::VectorXd c = w.array() - w.mean();
      const double r0 = c.squaredNorm();
      for (int lag = 1; lag <= 20; ++lag) {
        const double r = c.head(c.size() - lag).dot(c.tail(c.size() - lag)) / r0;
        CHECK(std::abs(r) < 0.05);
      }
    }
  }
  SUBCASE("pink noise falls at about 3 dB per octave") {
    const auto w = synthesize_noise(9, 10.0, rate, NoiseKind::pink).samples;
    const int nfft = 4096;
    const Eigen::VectorXd p = periodogram(w, nfft);
    // Least-squares fit of dB against log2(frequency).
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int k = 1; k <= nfft / 2; ++k) {
      const double f = static_cast<double>(k) * rate / nfft;
      if (f < 100.0 || f > 4000.0) continue;
      const double xo = std::log2(f), yo = 10.0 * std::log10(p(k));
      sx += xo, sy += yo, sxx += xo * xo, sxy += xo * yo, ++n;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    MESSAGE("pink slope " << slope << " dB/octave");
    CHECK(std::abs(slope + 3.0) <= 1.0);
  }
}

TEST_CASE("manifest SNRs are uniform over the configured range") {
  CorpusSpec c = small_corpus(1000, 0, 0);
  const auto m = build_manifest(c);
  std::vector<double> snr;
  for (const auto& d : m.examples) snr.push_back(d.snr_db);
  REQUIRE(snr.size() == 1000);
  std::sort(snr.begin(), snr.end());
  double ks = 0;
  const double n = static_cast<double>(snr.size());
  for (std::size_t i = 0; i < snr.size(); ++i) {
    const double cdf = (snr[i] - c.snr_low_db) / (c.snr_high_db - c.snr_low_db);
    ks = std::max({ks, std::abs((i + 1) / n - cdf), std::abs(cdf - i / n)});
  }
  MESSAGE("KS statistic " << ks);
  CHECK(ks < 0.05);
  CHECK(snr.front() >= c.snr_low_db);
  CHECK(snr.back() <= c.snr_high_db);
}

TEST_CASE("mixtures are exact and splits disjoint") {
  const Corpus corpus = build_mixture_dataset(small_corpus(12, 4, 4));
  CHECK(corpus.train.size() == 12);
  CHECK(corpus.val.size() == 4);
  CHECK(corpus.test.size() == 4);
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  for (const auto& d : corpus.manifest.examples) {
    ids.insert(d.id);
    seeds.insert(d.speech_seed);
  }
  CHECK(ids.size() == corpus.manifest.examples.size());
  CHECK(seeds.size() == corpus.manifest.examples.size());

  for (const auto* split : {&corpus.train, &corpus.val, &corpus.test})
    for (const auto& ex : *split) {
      CHECK((ex.mixture.samples - ex.clean.samples - ex.noise.samples).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(snr_of(ex.clean.samples, ex.noise.samples) - ex.snr_db) < 1e-6);
      CHECK(ex.mixture.samples.allFinite());
      CHECK(ex.mixture.sample_rate == 16000);
      CHECK((ex.mixture.length() - 16) % 8 == 0);
    }
}

TEST_CASE("manifest hashing is a pure function of the spec") {
  const auto a = build_manifest(small_corpus(20, 5, 5));
  const auto b = build_manifest(small_corpus(20, 5, 5));
  CHECK(a.hash == b.hash);
  CHECK(a.to_jsonl() == b.to_jsonl());
  auto other = small_corpus(20, 5, 5);
  other.seed = 4;
  CHECK(build_manifest(other).hash != a.hash);

  const auto back = SplitManifest::from_jsonl(a.to_jsonl());
  CHECK(back.hash == a.hash);
  CHECK(back.compute_hash() == a.hash);
  REQUIRE(back.examples.size() == a.examples.size());
  const auto ex1 = materialize(a.examples[7]);
  const auto ex2 = materialize(back.examples[7]);
  CHECK((ex1.mixture.samples.array() == ex2.mixture.samples.array()).all());

  const auto dir = scratch("manifest");
  a.save(dir / "m.jsonl");
  CHECK(SplitManifest::load(dir / "m.jsonl").hash == a.hash);
}

TEST_CASE("corpus spec validation") {
  CHECK_THROWS_AS(build_manifest(small_corpus(0, 0, 0)), Error);
  try {
    build_manifest(small_corpus(0, 0, 0));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCorpus);
  }
  auto bad = small_corpus(1, 1, 1);
  bad.snr_low_db = 5;
  bad.snr_high_db = 0;
  try {
    build_manifest(bad);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("segment crops") {
  const Corpus corpus = build_mixture_dataset(small_corpus(2, 0, 0));
  const auto& ex = corpus.train[0];
  std::mt19937_64 rng(1);

  SUBCASE("full-length crop starts at zero") {
    for (int i = 0; i < 20; ++i) CHECK(sample_segments(ex, ex.mixture.length(), rng).offset == 0);
  }
  SUBCASE("crops stay aligned") {
    for (int i = 0; i < 20; ++i) {
      const auto p = sample_segments(ex, 2000, rng);
      CHECK(p.mixture.size() == 2000);
      const Eigen::VectorXd n = ex.noise.samples.segment(p.offset, 2000);
      CHECK((p.mixture - p.clean - n).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((p.clean.array() == ex.clean.samples.segment(p.offset, 2000).array()).all());
    }
  }
  SUBCASE("too long") { CHECK_THROWS_AS(sample_segments(ex, ex.mixture.length() + 1, rng), Error); }
  SUBCASE("offsets are uniform") {
    const long utt = 48000, seg = 16000;
    const int bins = 20, draws = 10000;
    std::vector<int> hist(bins, 0);
    const double width = static_cast<double>(utt - seg + 1) / bins;
    for (int i = 0; i < draws; ++i) ++hist[static_cast<int>(sample_offset(utt, seg, rng) / width)];
    double chi2 = 0;
    for (int h : hist) chi2 += (h - draws / double(bins)) * (h - draws / double(bins)) / (draws / double(bins));
    // 99th percentile of chi-square with 19 degrees of freedom.
    MESSAGE("chi-square " << chi2);
    CHECK(chi2 < 36.191);
  }
}

TEST_CASE("wav round trip") {
  const auto dir = scratch("wav");
  const auto w = synthesize_speechlike(2, 0.25, 16000);
  WaveSegment scaled(w.samples * 0.2, 16000);
  write_wav(dir / "f.wav", scaled, WavEncoding::float32);
  const auto f = read_wav(dir / "f.wav");
  CHECK(f.encoding == WavEncoding::float32);
  CHECK(f.wave.sample_rate == 16000);
  CHECK((f.wave.samples - scaled.samples).cwiseAbs().maxCoeff() < 1e-7);

  write_wav(dir / "p.wav", scaled, WavEncoding::pcm16);
  const auto p = read_wav(dir / "p.wav");
  CHECK(p.encoding == WavEncoding::pcm16);
  CHECK((p.wave.samples - scaled.samples).cwiseAbs().maxCoeff() <= 1.0 / 32768 + 1e-12);

  std::ofstream(dir / "junk.wav") << "not a wav";
  CHECK_THROWS_AS(read_wav(dir / "junk.wav"), Error);
}

TEST_CASE("wav directories") {
  const auto root = scratch("wavdirs");
  fs::create_directories(root / "speech");
  fs::create_directories(root / "noise");
  for (int i = 0; i < 3; ++i) {
    write_wav(root / "speech" / ("s" + std::to_string(i) + ".wav"),
              WaveSegment(synthesize_speechlike(i, 0.3, 16000).samples * 0.1, 16000));
    write_wav(root / "noise" / ("n" + std::to_string(i) + ".wav"),
              WaveSegment(synthesize_noise(i, 0.2, 16000, NoiseKind::white).samples * 0.1, 16000));
  }
  CorpusSpec c = small_corpus(1, 1, 1);
  c.source = CorpusSource::wav_dirs;
  c.speech_dir = root / "speech";
  c.noise_dir = root / "noise";

  const Corpus corpus = build_mixture_dataset(c);
  CHECK(corpus.manifest.hash == build_manifest(c).hash);
  for (const auto& ex : corpus.test) {
    CHECK(std::abs(snr_of(ex.clean.samples, ex.noise.samples) - ex.snr_db) < 1e-6);
    CHECK((ex.mixture.length() - 16) % 8 == 0);
  }

  write_wav(root / "speech" / "s9_8k.wav", WaveSegment(Eigen::VectorXd::Constant(4000, 0.1), 8000));
  c.n_train = 2;
  try {
    build_manifest(c);
    FAIL("expected SampleRateMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SampleRateMismatch);
  }
}
