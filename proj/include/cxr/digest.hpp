#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cxr {

using Digest = std::array<std::uint8_t, 32>;

// SHA-256, incrementally fed.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> bytes);
  Sha256& update(std::string_view text);
  Sha256& update_u64(std::uint64_t value);  // little-endian
  Digest finish();

 private:
  void* ctx_;
};

Digest sha256(std::string_view text);
std::string to_hex(std::span<const std::uint8_t> bytes);

// First eight digest bytes read little-endian; used to derive RNG seeds.
std::uint64_t leading_u64(const Digest& d);

}  // namespace cxr
