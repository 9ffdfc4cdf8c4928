#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace dgpo::util {

// 64-bit FNV-1a, streamed.
class Digest {
 public:
  Digest& update(std::string_view bytes);
  Digest& update(const void* data, std::size_t len);
  Digest& update_u64(std::uint64_t v) { return update(&v, sizeof v); }
  Digest& update_doubles(std::span<const double> xs) { return update(xs.data(), xs.size_bytes()); }
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string digest_hex(std::string_view bytes);

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Uniform double in [0, 1) using the top 53 bits; portable across stdlibs.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on uniform01; portable across stdlibs.
double standard_normal(std::mt19937_64& rng);

}  // namespace dgpo::util
