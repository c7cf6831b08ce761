#pragma once

#include <cstdint>
#include <random>

namespace ocn {

/// Seeded generator that can be split into independent, replayable streams
/// (one per search candidate), so parallel runs reproduce serial ones.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  Rng split(std::uint64_t child) const { return Rng(seed_, stream_ * 0x9E3779B97F4A7C15ULL + child + 1); }

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace ocn
