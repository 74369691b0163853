// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pf {

using Vec3 = std::array<float, 3>;
using Rng = std::mt19937_64;

// Segmentation labels are 0..31 with 0 = "unspecified"; 15 building types.
inline constexpr int kNumPartLabels = 32;
inline constexpr int kNumPartClasses = 31;
inline constexpr int kNumBuildingTypes = 15;
inline constexpr int kUnspecifiedLabel = 0;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

enum class Axis : int { X = 0, Y = 1, Z = 2 };

Axis parse_axis(std::string_view text);
std::string_view axis_name(Axis axis);

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a base seed with a list of stream coordinates (entry, epoch, ...).
/// Each part is hashed before combining so that (1, 0) and (0, 1) differ.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  std::uint64_t salt = 1;
  for (std::uint64_t p : parts) {
    h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL * salt));
    ++salt;
  }
  return h;
}

inline float squared_distance(const Vec3& a, const Vec3& b) {
  const float dx = a[0] - b[0];
  const float dy = a[1] - b[1];
  const float dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace pf
