#pragma once

// Closed-form parameter and MAC counts.
//
// MAC convention (a fixed constant of this tool):
//   * conv / 1x1 conv / transposed conv: C_in * C_out * K per output frame
//     (transposed conv: per input frame);
//   * depthwise conv: C * K per frame;
//   * ReLU, PReLU, sigmoid and gLN: one MAC per element per pass;
//   * applying the mask (elementwise product with h): one MAC per element;
//   * bias additions and residual sums are free.

#include <string>
#include <vector>

#include "bloomnet/config.hpp"

namespace bloomnet {

enum class LayerKind { conv1d, depthwise, transposed_conv, prelu, relu, sigmoid, gln, mask_product };

struct LayerSpec {
  LayerKind kind = LayerKind::conv1d;
  long in_channels = 1;
  long out_channels = 1;
  long kernel = 1;
  bool bias = true;
};

struct ModuleSpec {
  std::string name;
  std::vector<LayerSpec> layers;
};

long count_params(const LayerSpec& layer);
long count_params(const ModuleSpec& module);

/// MACs for one pass over `frames` latent frames.
long count_macs(const LayerSpec& layer, long frames);
long count_macs(const ModuleSpec& module, long frames);

ModuleSpec encoder_spec(const ModelConfig& cfg);
ModuleSpec separator_spec(const ModelConfig& cfg);
ModuleSpec masker_spec(const ModelConfig& cfg);  // includes the mask product
ModuleSpec decoder_spec(const ModelConfig& cfg);

/// Latent frames for an input of `input_seconds` at `rate`.
long latent_frames(const ModelConfig& cfg, double input_seconds, int rate = 16000);

enum class ModelFamily { baseline1_int, bloom, baseline2 };
std::string to_string(ModelFamily f);
ModelFamily parse_model_family(const std::string& s);

struct ComplexityRow {
  int depth = 1;
  long inference_macs = 0;
  long inference_params = 0;            // parameters loaded for depth-l inference
  long cumulative_scalable_params = 0;  // storage supporting every depth <= l
};

struct ComplexityReport {
  ModelFamily family = ModelFamily::bloom;
  double input_seconds = 1.0;
  std::vector<ComplexityRow> rows;  // depth 1..L
};

struct ModuleCosts {
  long enc_params, sep_params, mas_params, dec_params;
  long enc_macs, sep_macs, mas_macs, dec_macs;
};

ModuleCosts module_costs(const ModelConfig& cfg, double input_seconds = 1.0, int rate = 16000);

ComplexityReport complexity_report(const ModelConfig& cfg, ModelFamily family, double input_seconds = 1.0,
                                   int rate = 16000);

std::vector<ComplexityReport> scalability_table(const ModelConfig& cfg, const std::vector<ModelFamily>& families,
                                                double input_seconds = 1.0, int rate = 16000);

/// Rows = depth; columns = family x {macs, params, cumulative_params}.
std::string to_csv(const std::vector<ComplexityReport>& reports);
/// Same table, aligned, with MACs in G and parameters in M.
std::string to_text(const std::vector<ComplexityReport>& reports);

}  // namespace bloomnet
