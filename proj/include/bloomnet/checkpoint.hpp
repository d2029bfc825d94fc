#pragma once

// Checkpoint layout (one directory per model):
//
//   manifest.json     kind, family, ModelConfig, profile, seed, trained_depth,
//                     corpus hash, entries [{name, file, sha256}]
//   enc.bin           one file per submodule: enc, sep.1..L, mas.1..N, dec.1..N
//   sep.1.bin ...
//
// A .bin file is "BNT1", u32 tensor count, then per tensor: u16 name length,
// name, u32 rows, u32 cols, rows*cols little-endian float64 (column-major).
// A weak-block chain is a directory with its own manifest.json (kind
// "weak_chain") and one sub-checkpoint per block: block.1/, block.2/, ...

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bloomnet/hash.hpp"
#include "bloomnet/network.hpp"

namespace bloomnet {

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

struct CheckpointInfo {
  std::string kind;  // "masking_net" or "weak_chain"
  Family family = Family::bloom;
  ModelConfig config;
  std::uint64_t seed = 0;
  int trained_depth = 0;
  int num_blocks = 0;
  std::string corpus_hash;
  nlohmann::json raw;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Hash over the manifest entries (i.e. over every submodule file hash).
std::string checkpoint_hash(const std::filesystem::path& dir);

namespace detail {
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& manifest);
}

template <typename Scalar>
void save_checkpoint(const MaskingNet<Scalar>& net, const std::filesystem::path& dir,
                     const std::string& corpus_hash = "") {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  net.for_each_submodule([&](const std::string& name, const auto& module) {
    std::vector<NamedTensor> tensors;
    module.for_each_tensor([&](const char* t, const Matrix<Scalar>& m) {
      tensors.push_back({t, m.template cast<double>()});
    });
    const std::string file = name + ".bin";
    write_tensor_file(dir / file, tensors);
    entries.push_back({{"name", name}, {"file", file}, {"sha256", sha256_file(dir / file)}});
  });
  nlohmann::json m;
  m["format"] = "bloomnet-checkpoint/1";
  m["kind"] = "masking_net";
  m["family"] = to_string(net.family);
  m["config"] = config_to_json(net.config);
  m["profile"] = to_string(net.config.profile);
  m["seed"] = net.seed;
  m["trained_depth"] = net.trained_depth;
  m["num_blocks"] = net.num_blocks();
  m["corpus_hash"] = corpus_hash;
  m["entries"] = entries;
  detail::write_manifest(dir, m);
}

/// Loads a BLOOM-Net or Baseline 1 checkpoint. For BLOOM, `max_depth`
/// loads only enc, sep.1..l, mas.1..l and dec.1..l.
template <typename Scalar>
MaskingNet<Scalar> load_checkpoint(const std::filesystem::path& dir, std::optional<int> max_depth = std::nullopt) {
  const CheckpointInfo info = read_checkpoint_info(dir);
  if (info.kind != "masking_net")
    throw Error(ErrorCode::CorruptCheckpoint, dir.string() + " holds a " + info.kind + ", not a masking network");
  ModelConfig cfg = info.config;
  if (max_depth) {
    if (info.family != Family::bloom && *max_depth != cfg.num_blocks)
      throw Error(ErrorCode::DepthOutOfRange, "partial loading is only defined for BLOOM-Net");
    if (*max_depth < 1 || *max_depth > cfg.num_blocks)
      throw Error(ErrorCode::DepthOutOfRange, "requested depth " + std::to_string(*max_depth) + " of " +
                                                  std::to_string(cfg.num_blocks) + " blocks");
    cfg.num_blocks = *max_depth;
  }
  MaskingNet<Scalar> net(cfg, info.family, info.seed);
  net.trained_depth = std::min(info.trained_depth, cfg.num_blocks);
  std::map<std::string, std::string> expected;
  for (const auto& e : info.raw.at("entries")) expected[e.at("name").get<std::string>()] = e.at("sha256").get<std::string>();
  net.for_each_submodule([&](const std::string& name, auto& module) {
    const auto path = dir / (name + ".bin");
    const auto it = expected.find(name);
    if (it == expected.end()) throw Error(ErrorCode::CorruptCheckpoint, dir.string() + ": manifest lacks entry " + name);
    if (!std::filesystem::exists(path) || sha256_file(path) != it->second)
      throw Error(ErrorCode::CorruptCheckpoint, path.string() + " is missing or does not match its manifest hash");
    const auto tensors = read_tensor_file(path);
    std::size_t i = 0;
    module.for_each_tensor([&](const char* t, Matrix<Scalar>& m) {
      if (i >= tensors.size() || tensors[i].name != t || tensors[i].value.rows() != m.rows() ||
          tensors[i].value.cols() != m.cols())
        throw Error(ErrorCode::CorruptCheckpoint, path.string() + ": tensor '" + t + "' missing or misshapen");
      m = tensors[i++].value.template cast<Scalar>();
    });
  });
  return net;
}

template <typename Scalar>
void save_chain(const WeakBlockChain<Scalar>& chain, const std::filesystem::path& dir,
                const std::string& corpus_hash = "") {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (int l = 1; l <= chain.num_blocks(); ++l) {
    const std::string name = "block." + std::to_string(l);
    save_checkpoint(chain.blocks[l - 1], dir / name, corpus_hash);
    entries.push_back({{"name", name}, {"file", name + "/manifest.json"}, {"sha256", checkpoint_hash(dir / name)}});
  }
  nlohmann::json m;
  m["format"] = "bloomnet-checkpoint/1";
  m["kind"] = "weak_chain";
  m["family"] = "baseline2";
  m["config"] = config_to_json(chain.config);
  m["profile"] = to_string(chain.config.profile);
  m["seed"] = chain.seed;
  m["trained_depth"] = chain.trained_depth;
  m["num_blocks"] = chain.num_blocks();
  m["corpus_hash"] = corpus_hash;
  m["entries"] = entries;
  detail::write_manifest(dir, m);
}

template <typename Scalar>
WeakBlockChain<Scalar> load_chain(const std::filesystem::path& dir, std::optional<int> max_depth = std::nullopt) {
  const CheckpointInfo info = read_checkpoint_info(dir);
  if (info.kind != "weak_chain") throw Error(ErrorCode::CorruptCheckpoint, dir.string() + " is not a weak-block chain");
  int blocks = info.num_blocks;
  if (max_depth) {
    if (*max_depth < 1 || *max_depth > blocks) throw Error(ErrorCode::DepthOutOfRange, "requested depth out of range");
    blocks = *max_depth;
  }
  WeakBlockChain<Scalar> chain;
  chain.config = info.config;
  chain.config.num_blocks = blocks;
  chain.seed = info.seed;
  chain.trained_depth = std::min(info.trained_depth, blocks);
  for (int l = 1; l <= blocks; ++l)
    chain.blocks.push_back(load_checkpoint<Scalar>(dir / ("block." + std::to_string(l))));
  return chain;
}

}  // namespace bloomnet
