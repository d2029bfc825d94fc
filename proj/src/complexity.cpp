#include "bloomnet/complexity.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "bloomnet/errors.hpp"

namespace bloomnet {

long count_params(const LayerSpec& l) {
  const long bias = l.bias ? 1 : 0;
  switch (l.kind) {
    case LayerKind::conv1d:
    case LayerKind::transposed_conv:
      return l.in_channels * l.out_channels * l.kernel + bias * l.out_channels;
    case LayerKind::depthwise: return l.in_channels * l.kernel + bias * l.in_channels;
    case LayerKind::prelu: return l.in_channels;
    case LayerKind::gln: return 2 * l.in_channels;
    case LayerKind::relu:
    case LayerKind::sigmoid:
    case LayerKind::mask_product: return 0;
  }
  return 0;
}

long count_params(const ModuleSpec& m) {
  long n = 0;
  for (const auto& l : m.layers) n += count_params(l);
  return n;
}

long count_macs(const LayerSpec& l, long frames) {
  switch (l.kind) {
    case LayerKind::conv1d:
    case LayerKind::transposed_conv: return l.in_channels * l.out_channels * l.kernel * frames;
    case LayerKind::depthwise: return l.in_channels * l.kernel * frames;
    case LayerKind::prelu:
    case LayerKind::relu:
    case LayerKind::sigmoid:
    case LayerKind::gln:
    case LayerKind::mask_product: return l.in_channels * frames;
  }
  return 0;
}

long count_macs(const ModuleSpec& m, long frames) {
  long n = 0;
  for (const auto& l : m.layers) n += count_macs(l, frames);
  return n;
}

ModuleSpec encoder_spec(const ModelConfig& c) {
  return {"enc",
          {{LayerKind::conv1d, 1, c.latent_channels, c.enc_kernel, true}, {LayerKind::relu, c.latent_channels, 0, 1, false}}};
}

ModuleSpec separator_spec(const ModelConfig& c) {
  const long d = c.latent_channels, h = c.sep_hidden;
  return {"sep",
          {{LayerKind::conv1d, d, h, 1, true},
           {LayerKind::prelu, h, 0, 1, false},
           {LayerKind::gln, h, 0, 1, false},
           {LayerKind::depthwise, h, h, c.sep_kernel, true},
           {LayerKind::prelu, h, 0, 1, false},
           {LayerKind::gln, h, 0, 1, false},
           {LayerKind::conv1d, h, d, 1, true}}};
}

ModuleSpec masker_spec(const ModelConfig& c) {
  const long d = c.latent_channels;
  return {"mas",
          {{LayerKind::prelu, d, 0, 1, false},
           {LayerKind::conv1d, d, d, 1, true},
           {LayerKind::sigmoid, d, 0, 1, false},
           {LayerKind::mask_product, d, 0, 1, false}}};
}

ModuleSpec decoder_spec(const ModelConfig& c) {
  return {"dec", {{LayerKind::transposed_conv, c.latent_channels, 1, c.enc_kernel, true}}};
}

long latent_frames(const ModelConfig& cfg, double input_seconds, int rate) {
  const long t = cfg.floor_valid_length(std::lround(input_seconds * rate));
  if (t < 1) throw Error(ErrorCode::InputTooShort, "input duration shorter than the encoder kernel");
  return cfg.frames(t);
}

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::baseline1_int: return "baseline1_int";
    case ModelFamily::bloom: return "bloom";
    case ModelFamily::baseline2: return "baseline2";
  }
  return "bloom";
}

ModelFamily parse_model_family(const std::string& s) {
  for (auto f : {ModelFamily::baseline1_int, ModelFamily::bloom, ModelFamily::baseline2})
    if (to_string(f) == s) return f;
  throw Error(ErrorCode::InvalidConfig, "unknown model family '" + s + "'");
}

ModuleCosts module_costs(const ModelConfig& cfg, double input_seconds, int rate) {
  const long frames = latent_frames(cfg, input_seconds, rate);
  const auto enc = encoder_spec(cfg), sep = separator_spec(cfg), mas = masker_spec(cfg), dec = decoder_spec(cfg);
  return {count_params(enc),       count_params(sep),       count_params(mas),       count_params(dec),
          count_macs(enc, frames), count_macs(sep, frames), count_macs(mas, frames), count_macs(dec, frames)};
}

ComplexityReport complexity_report(const ModelConfig& cfg, ModelFamily family, double input_seconds, int rate) {
  cfg.validate();
  const ModuleCosts c = module_costs(cfg, input_seconds, rate);
  ComplexityReport r;
  r.family = family;
  r.input_seconds = input_seconds;
  long cumulative = 0;
  for (int l = 1; l <= cfg.num_blocks; ++l) {
    ComplexityRow row;
    row.depth = l;
    switch (family) {
      case ModelFamily::bloom:
        row.inference_macs = c.enc_macs + l * c.sep_macs + c.mas_macs + c.dec_macs;
        row.inference_params = c.enc_params + l * c.sep_params + c.mas_params + c.dec_params;
        cumulative = c.enc_params + l * (c.sep_params + c.mas_params + c.dec_params);
        break;
      case ModelFamily::baseline1_int:
        row.inference_macs = c.enc_macs + l * c.sep_macs + c.mas_macs + c.dec_macs;
        row.inference_params = c.enc_params + l * c.sep_params + c.mas_params + c.dec_params;
        cumulative += row.inference_params;
        break;
      case ModelFamily::baseline2: {
        const long block_macs = c.enc_macs + c.sep_macs + c.mas_macs + c.dec_macs;
        const long block_params = c.enc_params + c.sep_params + c.mas_params + c.dec_params;
        row.inference_macs = l * block_macs;
        row.inference_params = l * block_params;
        cumulative = l * block_params;
        break;
      }
    }
    row.cumulative_scalable_params = cumulative;
    r.rows.push_back(row);
  }
  return r;
}

std::vector<ComplexityReport> scalability_table(const ModelConfig& cfg, const std::vector<ModelFamily>& families,
                                                double input_seconds, int rate) {
  std::vector<ComplexityReport> out;
  for (auto f : families) out.push_back(complexity_report(cfg, f, input_seconds, rate));
  return out;
}

std::string to_csv(const std::vector<ComplexityReport>& reports) {
  std::ostringstream os;
  os << "depth";
  for (const auto& r : reports) {
    const auto f = to_string(r.family);
    os << ',' << f << "_macs," << f << "_params," << f << "_cumulative_params";
  }
  os << '\n';
  const std::size_t rows = reports.empty() ? 0 : reports.front().rows.size();
  for (std::size_t i = 0; i < rows; ++i) {
    os << reports.front().rows[i].depth;
    for (const auto& r : reports)
      os << ',' << r.rows[i].inference_macs << ',' << r.rows[i].inference_params << ','
         << r.rows[i].cumulative_scalable_params;
    os << '\n';
  }
  return os.str();
}

std::string to_text(const std::vector<ComplexityReport>& reports) {
  std::ostringstream os;
  if (reports.empty()) return "";
  os << "input: " << reports.front().input_seconds << " s\n";
  os << std::left << std::setw(16) << "metric" << std::setw(16) << "family";
  for (const auto& row : reports.front().rows) os << std::right << std::setw(9) << ("l=" + std::to_string(row.depth));
  os << '\n';
  os << std::fixed;
  auto line = [&](const std::string& metric, const ComplexityReport& r, auto value, double scale) {
    os << std::left << std::setw(16) << metric << std::setw(16) << to_string(r.family) << std::right;
    for (const auto& row : r.rows) os << std::setw(9) << std::setprecision(3) << value(row) / scale;
    os << '\n';
  };
  for (const auto& r : reports)
    line("MACs (G)", r, [](const ComplexityRow& x) { return static_cast<double>(x.inference_macs); }, 1e9);
  for (const auto& r : reports)
    line("Params (M)", r, [](const ComplexityRow& x) { return static_cast<double>(x.inference_params); }, 1e6);
  for (const auto& r : reports)
    line("Storage (M)", r, [](const ComplexityRow& x) { return static_cast<double>(x.cumulative_scalable_params); },
         1e6);
  return os.str();
}

}  // namespace bloomnet
