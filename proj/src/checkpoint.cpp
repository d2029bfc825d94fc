#include "bloomnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace bloomnet {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'B', 'N', 'T', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::CorruptCheckpoint, source_ + ": truncated tensor file");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(sizeof(double) * t.value.size()));
  }
  if (!out) throw Error(ErrorCode::UnreadableFile, "failed writing " + path.string());
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::CorruptCheckpoint, "missing checkpoint entry " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()), path.string());
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::CorruptCheckpoint, path.string() + ": bad magic");
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(r.get<std::uint16_t>());
    r.read(t.name.data(), t.name.size());
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    t.value.resize(rows, cols);
    r.read(t.value.data(), sizeof(double) * t.value.size());
    out.push_back(std::move(t));
  }
  return out;
}

json config_to_json(const ModelConfig& c) {
  return {{"num_blocks", c.num_blocks},   {"latent_channels", c.latent_channels}, {"enc_kernel", c.enc_kernel},
          {"enc_stride", c.enc_stride},   {"sep_hidden", c.sep_hidden},           {"sep_kernel", c.sep_kernel},
          {"profile", to_string(c.profile)}, {"mask_input", to_string(c.mask_input)},
          {"encoder_rectify", c.encoder_rectify}, {"norm_epsilon", c.norm_epsilon}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c = ModelConfig::for_profile(parse_profile(j.value("profile", std::string("desk"))));
  c.num_blocks = j.value("num_blocks", c.num_blocks);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.enc_kernel = j.value("enc_kernel", c.enc_kernel);
  c.enc_stride = j.value("enc_stride", c.enc_stride);
  c.sep_hidden = j.value("sep_hidden", c.sep_hidden);
  c.sep_kernel = j.value("sep_kernel", c.sep_kernel);
  c.mask_input = parse_mask_input(j.value("mask_input", std::string("block")));
  c.encoder_rectify = j.value("encoder_rectify", c.encoder_rectify);
  c.norm_epsilon = j.value("norm_epsilon", c.norm_epsilon);
  c.validate();
  return c;
}

namespace detail {
void write_manifest(const std::filesystem::path& dir, const json& manifest) {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error(ErrorCode::UnreadableFile, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}
}  // namespace detail

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorCode::CorruptCheckpoint, "no checkpoint manifest in " + dir.string());
  CheckpointInfo info;
  try {
    in >> info.raw;
    info.kind = info.raw.at("kind").get<std::string>();
    if (info.kind == "masking_net") info.family = parse_family(info.raw.at("family").get<std::string>());
    info.config = config_from_json(info.raw.at("config"));
    info.seed = info.raw.at("seed").get<std::uint64_t>();
    info.trained_depth = info.raw.at("trained_depth").get<int>();
    info.num_blocks = info.raw.at("num_blocks").get<int>();
    info.corpus_hash = info.raw.value("corpus_hash", std::string());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, dir.string() + "/manifest.json: " + e.what());
  }
  return info;
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
  const auto info = read_checkpoint_info(dir);
  std::string digest;
  for (const auto& e : info.raw.at("entries")) digest += e.at("name").get<std::string>() + ":" + e.at("sha256").get<std::string>() + "\n";
  return sha256_hex(digest);
}

}  // namespace bloomnet
