#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bloomnet/layers.hpp"

namespace bloomnet {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Appends shape and raw scalar bytes of a tensor to `out`.
template <typename Scalar>
void append_tensor_bytes(std::string& out, const Matrix<Scalar>& t) {
  const std::int64_t shape[2] = {t.rows(), t.cols()};
  out.append(reinterpret_cast<const char*>(shape), sizeof(shape));
  out.append(reinterpret_cast<const char*>(t.data()), sizeof(Scalar) * static_cast<std::size_t>(t.size()));
}

/// Content hash of one submodule's tensors.
template <typename Module>
std::string module_hash(const Module& m) {
  std::string bytes;
  m.for_each_tensor([&](const char* name, const auto& t) {
    bytes.append(name);
    append_tensor_bytes(bytes, t);
  });
  return sha256_hex(bytes);
}

}  // namespace bloomnet
