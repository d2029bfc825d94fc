#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bloomnet/checkpoint.hpp"
#include "test_util.hpp"

using namespace bloomnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("bloomnet_ckpt_" + name);
  fs::remove_all(p);
  return p;
}

template <typename Net>
bool same_tensors(const Net& a, const Net& b) {
  std::vector<Matrix<float>> ta, tb;
  a.for_each_tensor([&](const std::string&, const auto& t) { ta.push_back(t); });
  b.for_each_tensor([&](const std::string&, const auto& t) { tb.push_back(t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].rows() != tb[i].rows() || ta[i].cols() != tb[i].cols() || !(ta[i].array() == tb[i].array()).all())
      return false;
  return true;
}

}  // namespace

TEST_CASE("masking network round trip is bit exact") {
  for (auto family : {Family::bloom, Family::baseline1}) {
    MaskingNet<float> net(testutil::tiny(3), family, 21);
    net.trained_depth = 2;
    const auto dir = scratch("rt");
    save_checkpoint(net, dir, "corpus-abc");
    const auto info = read_checkpoint_info(dir);
    CHECK(info.kind == "masking_net");
    CHECK(info.family == family);
    CHECK(info.trained_depth == 2);
    CHECK(info.seed == 21);
    CHECK(info.corpus_hash == "corpus-abc");
    CHECK(info.config.latent_channels == 6);
    const auto back = load_checkpoint<float>(dir);
    CHECK(same_tensors(net, back));
    CHECK(back.trained_depth == 2);
    CHECK(back.family == family);
    CHECK(checkpoint_hash(dir) == checkpoint_hash(dir));

    std::mt19937_64 rng(1);
    const auto x = testutil::randn<float>(rng, 64);
    CHECK((net.forward(x).array() == back.forward(x).array()).all());
  }
}

TEST_CASE("partial load equals truncation") {
  MaskingNet<float> net(testutil::tiny(4), Family::bloom, 22);
  net.trained_depth = 4;
  const auto dir = scratch("partial");
  save_checkpoint(net, dir);
  std::mt19937_64 rng(2);
  const auto x = testutil::randn<float>(rng, 80);
  for (int l = 1; l <= 4; ++l) {
    const auto part = load_checkpoint<float>(dir, l);
    CHECK(part.num_blocks() == l);
    CHECK(part.num_heads() == l);
    CHECK(same_tensors(part, net.truncated(l)));
    CHECK((part.forward_at_depth(x, l).estimate.array() == net.forward_at_depth(x, l).estimate.array()).all());
  }
  // Blocks beyond the requested depth are never read.
  fs::remove(dir / "sep.4.bin");
  CHECK_NOTHROW(load_checkpoint<float>(dir, 3));
  CHECK_THROWS_AS(load_checkpoint<float>(dir), Error);
  CHECK_THROWS_AS(load_checkpoint<float>(dir, 5), Error);

  MaskingNet<float> base(testutil::tiny(2), Family::baseline1, 1);
  save_checkpoint(base, scratch("partial_b1"));
  CHECK_THROWS_AS(load_checkpoint<float>(scratch("partial_b1").string() + "", 1), Error);
}

TEST_CASE("corruption is detected") {
  MaskingNet<float> net(testutil::tiny(2), Family::bloom, 23);
  const auto dir = scratch("corrupt");
  save_checkpoint(net, dir);
  const std::string before = checkpoint_hash(dir);
  {
    std::fstream f(dir / "sep.1.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  try {
    load_checkpoint<float>(dir);
    FAIL("expected CorruptCheckpoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptCheckpoint);
  }
  save_checkpoint(net, dir);
  CHECK(checkpoint_hash(dir) == before);
  std::ofstream(dir / "manifest.json") << "{ nope";
  CHECK_THROWS_AS(read_checkpoint_info(dir), Error);
  CHECK_THROWS_AS(read_checkpoint_info(scratch("missing")), Error);
}

TEST_CASE("weak chain round trip") {
  WeakBlockChain<float> chain(testutil::tiny(3), 24);
  chain.trained_depth = 3;
  const auto dir = scratch("chain");
  save_chain(chain, dir, "h");
  CHECK(read_checkpoint_info(dir).kind == "weak_chain");
  const auto back = load_chain<float>(dir);
  REQUIRE(back.num_blocks() == 3);
  for (int l = 0; l < 3; ++l) CHECK(same_tensors(chain.blocks[l], back.blocks[l]));
  std::mt19937_64 rng(3);
  const auto x = testutil::randn<float>(rng, 64);
  CHECK((chain.forward_at_depth(x, 3).array() == back.forward_at_depth(x, 3).array()).all());
  CHECK(load_chain<float>(dir, 2).num_blocks() == 2);
  CHECK_THROWS_AS(load_checkpoint<float>(dir), Error);
  CHECK_THROWS_AS(load_chain<float>(dir / "block.1"), Error);
}

TEST_CASE("tensor files") {
  const auto dir = scratch("tensors");
  fs::create_directories(dir);
  std::mt19937_64 rng(4);
  const std::vector<NamedTensor> t = {{"a", testutil::randm(rng, 3, 2)}, {"bias", testutil::randm(rng, 1, 1)}};
  write_tensor_file(dir / "x.bin", t);
  const auto back = read_tensor_file(dir / "x.bin");
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK((back[0].value.array() == t[0].value.array()).all());
  std::ofstream(dir / "y.bin") << "XXXX";
  CHECK_THROWS_AS(read_tensor_file(dir / "y.bin"), Error);
}
