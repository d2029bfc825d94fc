#include "bloomnet/spectrogram.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <unsupported/Eigen/FFT>

#include "bloomnet/errors.hpp"
#include "bloomnet/signal_metrics.hpp"

namespace bloomnet {

Spectrogram stft_log_magnitude(const Eigen::VectorXd& x, int sample_rate, int window, int hop) {
  if (window < 2 || hop < 1) throw Error(ErrorCode::InvalidConfig, "bad STFT window or hop");
  if (x.size() < 1) throw Error(ErrorCode::InputTooShort, "empty signal");
  const long frames = x.size() <= window ? 1 : 1 + (x.size() - window + hop - 1) / hop;
  const int bins = window / 2 + 1;
  Eigen::VectorXd hann(window);
  for (int n = 0; n < window; ++n) hann(n) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window);

  Spectrogram s;
  s.sample_rate = sample_rate;
  s.window = window;
  s.hop = hop;
  s.log_magnitude.resize(bins, frames);
  Eigen::FFT<double> fft;
  std::vector<double> frame(window);
  std::vector<std::complex<double>> spec;
  for (long f = 0; f < frames; ++f) {
    for (int n = 0; n < window; ++n) {
      const long i = f * hop + n;
      frame[n] = i < x.size() ? x(i) * hann(n) : 0.0;
    }
    fft.fwd(spec, frame);
    for (int k = 0; k < bins; ++k) s.log_magnitude(k, f) = 20.0 * std::log10(std::abs(spec[k]) + 1e-10);
  }
  return s;
}

namespace {

// Black, blue, magenta, orange, pale yellow.
std::array<unsigned char, 3> ramp(double t) {
  static const double stops[5][3] = {{0, 0, 4}, {60, 15, 130}, {185, 55, 120}, {250, 140, 40}, {252, 250, 190}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double w = t - i;
  std::array<unsigned char, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = static_cast<unsigned char>(std::lround(stops[i][k] * (1 - w) + stops[i + 1][k] * w));
  return c;
}

}  // namespace

void write_spectrogram_png(const Spectrogram& s, const std::filesystem::path& path, double range_db) {
  const int height = static_cast<int>(s.log_magnitude.rows());
  const int width = static_cast<int>(s.log_magnitude.cols());
  const double top = s.log_magnitude.maxCoeff();
  std::vector<unsigned char> pixels(static_cast<std::size_t>(height) * width * 3);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const double v = (s.log_magnitude(height - 1 - r, c) - (top - range_db)) / range_db;
      const auto rgb = ramp(v);
      std::copy(rgb.begin(), rgb.end(), pixels.begin() + (static_cast<std::size_t>(r) * width + c) * 3);
    }

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorCode::UnreadableFile, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) png_write_row(png, pixels.data() + static_cast<std::size_t>(r) * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<std::filesystem::path> emit_spectrograms(const Eigen::VectorXd& mixture,
                                                     const std::map<int, Eigen::VectorXd>& estimates,
                                                     const Eigen::VectorXd& clean, int sample_rate,
                                                     const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto label = [&](const Eigen::VectorXd& e) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", si_sdr(clean, e));
    return std::string(buf);
  };
  std::vector<std::filesystem::path> out;
  auto emit = [&](const Eigen::VectorXd& x, const std::string& name) {
    const auto p = out_dir / name;
    write_spectrogram_png(stft_log_magnitude(x, sample_rate), p);
    out.push_back(p);
  };
  emit(mixture, "mixture_sisdr" + label(mixture) + "dB.png");
  for (const auto& [l, e] : estimates) emit(e, "block" + std::to_string(l) + "_sisdr" + label(e) + "dB.png");
  emit(clean, "clean.png");
  return out;
}

}  // namespace bloomnet
