#pragma once

#include <filesystem>

#include "bloomnet/signal_metrics.hpp"

namespace bloomnet {

enum class WavEncoding { pcm16, float32 };

struct WavData {
  WaveSegment wave;
  WavEncoding encoding = WavEncoding::pcm16;
};

/// Reads a mono WAV file with 16-bit PCM or 32-bit float samples. PCM is
/// scaled to [-1, 1).
WavData read_wav(const std::filesystem::path& path);

/// Writes a mono WAV file; PCM output is clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const WaveSegment& wave, WavEncoding encoding = WavEncoding::float32);

}  // namespace bloomnet
