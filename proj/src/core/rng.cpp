// Copyright (c) 2026 The rnalab authors.
// SPDX-License-Identifier: Apache-2.0

#include "core/rng.hpp"

#include <cmath>

#include "core/error.hpp"

namespace rna {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

int Rng::uniform_int(int upper) {
  if (upper <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "uniform_int: upper must be > 0");
  }
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) *
      static_cast<unsigned __int128>(static_cast<std::uint64_t>(upper));
  return static_cast<int>(wide >> 64);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index) {
  std::uint64_t x = seed;
  std::uint64_t a = splitmix64(x);
  x ^= stream * 0x9e3779b97f4a7c15ULL;
  std::uint64_t b = splitmix64(x);
  x ^= index * 0xd1342543de82ef95ULL;
  std::uint64_t c = splitmix64(x);
  return a ^ rotl(b, 17) ^ rotl(c, 41);
}

}  // namespace rna
