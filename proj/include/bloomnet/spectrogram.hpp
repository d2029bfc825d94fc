#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bloomnet {

/// Log-magnitude STFT with a periodic Hann window. Frames start at 0 and
/// advance by `hop`; the signal is zero-padded to fill the last frame.
/// Rows are frequency bins 0..window/2, columns are frames.
struct Spectrogram {
  Eigen::MatrixXd log_magnitude;  // 20 log10(|X| + 1e-10)
  int sample_rate = 16000;
  int window = 512;
  int hop = 128;

  double bin_hz() const { return static_cast<double>(sample_rate) / window; }
};

Spectrogram stft_log_magnitude(const Eigen::VectorXd& x, int sample_rate, int window = 512, int hop = 128);

/// Renders bins as rows (low frequencies at the bottom) with a fixed 80 dB
/// range below the maximum mapped to an 8-bit colour ramp.
void write_spectrogram_png(const Spectrogram& s, const std::filesystem::path& path, double range_db = 80.0);

/// Writes mixture, one image per estimate and clean speech:
///   mixture_sisdr<v>dB.png, block<l>_sisdr<v>dB.png, clean.png
/// where <v> is the SI-SDR against `clean` with two decimals.
std::vector<std::filesystem::path> emit_spectrograms(const Eigen::VectorXd& mixture,
                                                     const std::map<int, Eigen::VectorXd>& estimates,
                                                     const Eigen::VectorXd& clean, int sample_rate,
                                                     const std::filesystem::path& out_dir);

}  // namespace bloomnet
