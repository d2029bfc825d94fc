#pragma once

// Composite architectures over the shared submodules:
//   * BLOOM-Net: one encoder, L residual separator blocks, one masker/decoder
//     head per block. Depth-l inference runs blocks 1..l and only head l.
//   * Baseline 1: same trunk, a single head after block L.
//   * Weak-block chain (Baseline 2): L stand-alone one-block models applied
//     one after another in the time domain.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bloomnet/modules.hpp"
#include "bloomnet/signal_metrics.hpp"

namespace bloomnet {

enum class Family { bloom, baseline1 };

inline std::string to_string(Family f) { return f == Family::bloom ? "bloom" : "baseline1"; }
inline Family parse_family(const std::string& s) {
  if (s == "bloom") return Family::bloom;
  if (s == "baseline1") return Family::baseline1;
  throw Error(ErrorCode::InvalidConfig, "unknown model family '" + s + "'");
}

/// Counts submodule executions; filled by the forward passes when supplied.
struct ExecutionTrace {
  int encodes = 0;
  int separators = 0;
  int maskers = 0;
  int decoders = 0;
};

template <typename Scalar>
struct Head {
  Masker<Scalar> masker;
  Decoder<Scalar> decoder;
};

/// Latent-domain masking network shared by BLOOM-Net and Baseline 1.
template <typename Scalar>
class MaskingNet {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  ModelConfig config;
  Family family = Family::bloom;
  std::uint64_t seed = 0;
  int trained_depth = 0;

  Encoder<Scalar> encoder;
  std::vector<SeparatorBlock<Scalar>> separators;
  std::vector<Head<Scalar>> heads;

  MaskingNet() = default;

  /// Builds and initializes a network. Each submodule draws from its own
  /// stream derived from (seed, submodule name), so equally named submodules
  /// of two models built from one seed start identical.
  MaskingNet(const ModelConfig& cfg, Family fam, std::uint64_t init_seed)
      : config(cfg), family(fam), seed(init_seed), encoder(cfg) {
    cfg.validate();
    separators.assign(cfg.num_blocks, SeparatorBlock<Scalar>(cfg));
    const int num_heads = fam == Family::bloom ? cfg.num_blocks : 1;
    heads.assign(num_heads, Head<Scalar>{Masker<Scalar>(cfg), Decoder<Scalar>(cfg)});
    reinitialize(init_seed);
  }

  void reinitialize(std::uint64_t init_seed) {
    seed = init_seed;
    for_each_submodule([&](const std::string& name, auto& module) {
      std::mt19937_64 rng(derive_seed(init_seed, name));
      module.init(rng);
    });
  }

  int num_blocks() const { return static_cast<int>(separators.size()); }
  int num_heads() const { return static_cast<int>(heads.size()); }

  /// Block level (1-based) whose latent the given head reads.
  int head_level(int head_index) const { return family == Family::bloom ? head_index + 1 : num_blocks(); }

  /// Visits submodules with their checkpoint names: enc, sep.l, mas.l, dec.l.
  template <typename Self, typename F>
  static void visit_submodules(Self& self, F&& f) {
    f(std::string("enc"), self.encoder);
    for (std::size_t i = 0; i < self.separators.size(); ++i) f("sep." + std::to_string(i + 1), self.separators[i]);
    for (std::size_t i = 0; i < self.heads.size(); ++i) {
      f("mas." + std::to_string(i + 1), self.heads[i].masker);
      f("dec." + std::to_string(i + 1), self.heads[i].decoder);
    }
  }
  template <typename F>
  void for_each_submodule(F&& f) { visit_submodules(*this, f); }
  template <typename F>
  void for_each_submodule(F&& f) const { visit_submodules(*this, f); }

  /// Visits every tensor as (qualified name, tensor).
  template <typename F>
  void for_each_tensor(F&& f) {
    for_each_submodule([&](const std::string& mod, auto& m) {
      m.for_each_tensor([&](const char* t, Mat& tensor) { f(mod + "." + t, tensor); });
    });
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    for_each_submodule([&](const std::string& mod, const auto& m) {
      m.for_each_tensor([&](const char* t, const Mat& tensor) { f(mod + "." + t, tensor); });
    });
  }

  /// Exhaustive count of instantiated parameters.
  long parameter_count() const {
    long n = 0;
    for_each_tensor([&](const std::string&, const Mat& t) { n += static_cast<long>(t.size()); });
    return n;
  }

  /// Same-shaped network with all tensors zeroed (gradient buffer).
  MaskingNet zeros_like() const {
    MaskingNet g = *this;
    g.for_each_tensor([](const std::string&, Mat& t) { t.setZero(); });
    return g;
  }

  /// Copy keeping only the first `depth` blocks (and their heads for BLOOM).
  MaskingNet truncated(int depth) const {
    check_depth(depth);
    if (family != Family::bloom) throw Error(ErrorCode::InvalidConfig, "only BLOOM-Net supports truncation");
    MaskingNet t = *this;
    t.separators.resize(depth);
    t.heads.resize(depth);
    t.config.num_blocks = depth;
    t.trained_depth = std::min(trained_depth, depth);
    return t;
  }

  void check_depth(int depth) const {
    if (depth < 1 || depth > num_blocks())
      throw Error(ErrorCode::DepthOutOfRange,
                  "depth " + std::to_string(depth) + " outside [1, " + std::to_string(num_blocks()) + "]");
  }

  // ---- Inference building blocks ------------------------------------------

  Mat encode(const Vec& x, ExecutionTrace* trace = nullptr) const {
    if (trace) ++trace->encodes;
    return encoder.forward(x);
  }

  /// Returns (z_l, z̄_l) for block l (1-based) given z̄_{l-1}.
  std::pair<Mat, Mat> separator_forward(const Mat& z_bar_prev, int level, ExecutionTrace* trace = nullptr) const {
    check_depth(level);
    if (z_bar_prev.rows() != config.latent_channels)
      throw Error(ErrorCode::ShapeMismatch, "latent has wrong channel count");
    if (trace) ++trace->separators;
    Mat z = separators[level - 1].forward(z_bar_prev);
    Mat z_bar = z + z_bar_prev;
    return {std::move(z), std::move(z_bar)};
  }

  Mat mask(const Mat& mask_input, int head_index, ExecutionTrace* trace = nullptr) const {
    if (trace) ++trace->maskers;
    return heads.at(head_index).masker.forward(mask_input);
  }

  /// Masks the shared latent h with head `head_index` and decodes T samples.
  Vec mask_and_decode(const Mat& mask_input, const Mat& h, int head_index, Eigen::Index length,
                      ExecutionTrace* trace = nullptr) const {
    if (mask_input.rows() != h.rows() || mask_input.cols() != h.cols())
      throw Error(ErrorCode::ShapeMismatch, "mask input and encoded mixture differ in shape");
    const Mat m = mask(mask_input, head_index, trace);
    if (trace) ++trace->decoders;
    return heads.at(head_index).decoder.forward((m.array() * h.array()).matrix(), length);
  }

  struct LatentTrace {
    Mat h;
    std::vector<Mat> z;      // z[l] for l = 1..depth (z[0] = h)
    std::vector<Mat> z_bar;  // z̄[l] for l = 0..depth
  };

  /// Encoder plus separator chain with every intermediate latent kept.
  LatentTrace latent_trace(const Vec& x, int depth) const {
    check_depth(depth);
    LatentTrace t;
    t.h = encode(x);
    t.z.push_back(t.h);
    t.z_bar.push_back(t.h);
    for (int l = 1; l <= depth; ++l) {
      auto [z, z_bar] = separator_forward(t.z_bar.back(), l);
      t.z.push_back(std::move(z));
      t.z_bar.push_back(std::move(z_bar));
    }
    return t;
  }

  const Mat& select_mask_input(const Mat& z, const Mat& z_bar) const {
    return config.mask_input == MaskInput::block ? z : z_bar;
  }

  struct DepthOutput {
    Vec estimate;
    std::vector<Vec> intermediates;  // ŝ(1..depth) when requested
  };

  /// Depth-selectable inference. BLOOM runs Enc, Sep(1..depth) and only head
  /// `depth`; `all_intermediate` additionally decodes every head below it.
  /// Baseline 1 requires depth == L unless `diagnostic` is set, in which case
  /// its single head reads the latent at `depth`.
  DepthOutput forward_at_depth(const Vec& x, int depth, bool all_intermediate = false,
                               ExecutionTrace* trace = nullptr, bool diagnostic = false) const {
    check_depth(depth);
    if (family == Family::baseline1 && depth != num_blocks() && !diagnostic)
      throw Error(ErrorCode::DepthOutOfRange, "Baseline 1 only runs at its full depth");
    if (family == Family::baseline1) all_intermediate = false;
    const Mat h = encode(x, trace);
    DepthOutput out;
    Mat z_bar = h;
    for (int l = 1; l <= depth; ++l) {
      auto [z, z_bar_next] = separator_forward(z_bar, l, trace);
      z_bar = std::move(z_bar_next);
      const bool emit = l == depth || all_intermediate;
      if (emit) {
        const int head = family == Family::bloom ? l - 1 : 0;
        Vec est = mask_and_decode(select_mask_input(z, z_bar), h, head, x.size(), trace);
        if (all_intermediate) out.intermediates.push_back(est);
        if (l == depth) out.estimate = std::move(est);
      }
    }
    return out;
  }

  /// Full-depth forward of Baseline 1 (or BLOOM at depth L).
  Vec forward(const Vec& x) const { return forward_at_depth(x, num_blocks()).estimate; }

  WaveSegment forward_at_depth(const WaveSegment& x, int depth) const {
    return WaveSegment(forward_at_depth(Vec(x.samples.template cast<Scalar>()), depth).estimate.template cast<double>(),
                       x.sample_rate);
  }
};

/// Baseline 2: stand-alone one-block models chained in the time domain.
template <typename Scalar>
struct WeakBlockChain {
  using Vec = Vector<Scalar>;

  ModelConfig config;  // num_blocks = chain length
  std::uint64_t seed = 0;
  int trained_depth = 0;
  std::vector<MaskingNet<Scalar>> blocks;  // each a one-block Baseline 1

  WeakBlockChain() = default;

  /// Block 1 uses `seed` directly so it matches a one-block Baseline 1 or
  /// BLOOM-Net built from the same seed; later blocks derive their own.
  WeakBlockChain(const ModelConfig& cfg, std::uint64_t init_seed) : config(cfg), seed(init_seed) {
    cfg.validate();
    ModelConfig one = cfg;
    one.num_blocks = 1;
    for (int l = 1; l <= cfg.num_blocks; ++l) {
      const std::uint64_t s = l == 1 ? init_seed : derive_seed(init_seed, "block." + std::to_string(l));
      blocks.emplace_back(one, Family::baseline1, s);
    }
  }

  int num_blocks() const { return static_cast<int>(blocks.size()); }

  long parameter_count() const {
    long n = 0;
    for (const auto& b : blocks) n += b.parameter_count();
    return n;
  }

  /// ŝ(0) = x; ŝ(l) = F(l)(ŝ(l-1)).
  Vec forward_at_depth(const Vec& x, int depth, ExecutionTrace* trace = nullptr) const {
    if (depth < 1 || depth > num_blocks())
      throw Error(ErrorCode::DepthOutOfRange,
                  "depth " + std::to_string(depth) + " outside [1, " + std::to_string(num_blocks()) + "]");
    Vec s = x;
    for (int l = 0; l < depth; ++l) s = blocks[l].forward_at_depth(s, 1, false, trace).estimate;
    return s;
  }
};

/// Free-function spellings of the composite forwards.
template <typename Scalar>
Vector<Scalar> bloom_forward_at_depth(const MaskingNet<Scalar>& net, const Vector<Scalar>& x, int depth,
                                      ExecutionTrace* trace = nullptr) {
  return net.forward_at_depth(x, depth, false, trace).estimate;
}

template <typename Scalar>
Vector<Scalar> baseline1_forward(const MaskingNet<Scalar>& net, const Vector<Scalar>& x) {
  return net.forward(x);
}

template <typename Scalar>
Vector<Scalar> weak_chain_forward(const WeakBlockChain<Scalar>& chain, const Vector<Scalar>& x, int depth,
                                  ExecutionTrace* trace = nullptr) {
  return chain.forward_at_depth(x, depth, trace);
}

}  // namespace bloomnet
