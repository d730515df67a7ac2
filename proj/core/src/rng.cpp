// SPDX-License-Identifier: Apache-2.0
#include "ctta/rng.hpp"

#include <cmath>
#include <numbers>

namespace ctta {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngState::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ 0xD1B54A32D192ED03ULL);
  return mix64(key + (++counter_) * kGolden);
}

double RngState::uniform() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngState::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngState::uniform_index(std::size_t n) {
  auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

RngState RngState::split(std::uint64_t stream) const {
  return RngState(mix64(seed_ ^ mix64(stream + kGolden)), 0);
}

}  // namespace ctta
