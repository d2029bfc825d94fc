#pragma once

#include <cstdint>
#include <string>

#include "bloomnet/errors.hpp"

namespace bloomnet {

enum class Profile { full, desk };

/// Which latent the block-specific masker reads.
enum class MaskInput {
  block,        // z(l), the separator output
  accumulated,  // z̄(l), the residual accumulation
};

struct ModelConfig {
  int num_blocks = 6;         // L
  int latent_channels = 64;   // D
  int enc_kernel = 16;
  int enc_stride = 8;
  int sep_hidden = 64;        // H
  int sep_kernel = 3;         // P, odd
  Profile profile = Profile::desk;
  MaskInput mask_input = MaskInput::block;
  // Test-mode switches for oracle tests.
  bool encoder_rectify = true;
  double norm_epsilon = 1e-8;

  /// Number of encoder frames for a T-sample input.
  long frames(long num_samples) const { return (num_samples - enc_kernel) / enc_stride + 1; }

  /// True when T reconstructs exactly through the decoder overlap-add.
  bool valid_length(long num_samples) const {
    return num_samples >= enc_kernel && (num_samples - enc_kernel) % enc_stride == 0;
  }

  /// Largest valid length not exceeding `num_samples` (0 when none).
  long floor_valid_length(long num_samples) const {
    if (num_samples < enc_kernel) return 0;
    return num_samples - (num_samples - enc_kernel) % enc_stride;
  }

  void validate() const {
    if (num_blocks < 1 || latent_channels < 1 || enc_kernel < 1 || enc_stride < 1 || sep_hidden < 1 || sep_kernel < 1)
      throw Error(ErrorCode::InvalidConfig, "all model sizes must be >= 1");
    if (enc_stride > enc_kernel) throw Error(ErrorCode::InvalidConfig, "enc_stride must not exceed enc_kernel");
    if (sep_kernel % 2 == 0) throw Error(ErrorCode::InvalidConfig, "sep_kernel must be odd");
  }

  static ModelConfig full() {
    ModelConfig c;
    c.num_blocks = 6;
    c.latent_channels = 512;
    c.enc_kernel = 16;
    c.enc_stride = 8;
    c.sep_hidden = 512;
    c.sep_kernel = 3;
    c.profile = Profile::full;
    return c;
  }

  static ModelConfig desk() {
    ModelConfig c;
    c.profile = Profile::desk;
    return c;
  }

  static ModelConfig for_profile(Profile p) { return p == Profile::full ? full() : desk(); }
};

inline std::string to_string(Profile p) { return p == Profile::full ? "full" : "desk"; }
inline std::string to_string(MaskInput m) { return m == MaskInput::block ? "block" : "accumulated"; }

inline Profile parse_profile(const std::string& s) {
  if (s == "full") return Profile::full;
  if (s == "desk") return Profile::desk;
  throw Error(ErrorCode::InvalidConfig, "unknown profile '" + s + "'");
}

inline MaskInput parse_mask_input(const std::string& s) {
  if (s == "block") return MaskInput::block;
  if (s == "accumulated") return MaskInput::accumulated;
  throw Error(ErrorCode::InvalidConfig, "unknown mask_input '" + s + "'");
}

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a named stream, e.g. derive_seed(seed, "sep.3").
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
  return mix_seed(seed ^ mix_seed(h));
}

}  // namespace bloomnet
