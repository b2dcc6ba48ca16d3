#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace stgms {

//! FNV-1a over raw bytes; the basis for cache keys and run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t hash_doubles(const std::vector<double>& v, std::uint64_t seed = 1469598103934665603ull) {
  return v.empty() ? seed : fnv1a64(v.data(), v.size() * sizeof(double), seed);
}

inline std::uint64_t hash_string(const std::string& s, std::uint64_t seed = 1469598103934665603ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return fnv1a64(&b, sizeof(b), a);
}

inline std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace stgms
