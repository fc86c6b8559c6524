// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace infillgen {

/// splitmix64 finaliser over (base, salt). Used to derive independent
/// per-document and per-step seeds from one run seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) noexcept {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace infillgen
