// Copyright (c) 2026 The rnalab authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace rna {

// Deterministic xoshiro256++ stream. Distributions are hand-rolled on top of
// the raw 64-bit output so that sequences are identical across platforms and
// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                           // [0, 1)
  double uniform(double lo, double hi);
  double normal();                            // standard normal, Box-Muller
  double normal(double mean, double stddev);
  int uniform_int(int upper);                 // [0, upper), upper > 0

  // Child seed derivation; gives every domain, run and worker its own stream.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index = 0);

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rna
