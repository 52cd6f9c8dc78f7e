#pragma once

#include <cstddef>
#include <string>

#include "ldmshield/tensor.hpp"

namespace ldms {

std::string sha256_hex(const void* data, std::size_t n);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::string& path);

// Shape header plus little-endian payload, so the hash is layout-stable.
std::string sha256_tensor(const Tensor& t);

std::uint32_t crc32_bytes(const void* data, std::size_t n, std::uint32_t seed = 0);

}  // namespace ldms
