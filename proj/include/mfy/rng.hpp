#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace mfy {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, stream_id); the output of stream i never
/// depends on how many other streams were drawn, so particle i's noise is a
/// function of (seed, i) only.
class Philox
{
public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint64_t stream_id)
    : key_{ static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32) }
    , counter_{ 0, 0, static_cast<std::uint32_t>(stream_id),
                static_cast<std::uint32_t>(stream_id >> 32) }
  {
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()()
  {
    if (used_ == 2) {
      block_ = round10(counter_, key_);
      increment();
      used_ = 0;
    }
    const auto lo = static_cast<std::uint64_t>(block_[2 * used_]);
    const auto hi = static_cast<std::uint64_t>(block_[2 * used_ + 1]);
    ++used_;
    return lo | (hi << 32);
  }

  /// Uniform double in [0,1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

  static Block round10(Block ctr, Key key)
  {
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      ctr = { static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
              static_cast<std::uint32_t>(p1),
              static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
              static_cast<std::uint32_t>(p0) };
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

  void increment()
  {
    if (++counter_[0] == 0)
      ++counter_[1];
  }

  Key key_;
  Block counter_;
  Block block_{};
  int used_ = 2;
};

/// Standard normal sampler on top of a Philox stream.
class NormalStream
{
public:
  NormalStream(std::uint64_t seed, std::uint64_t stream_id)
    : engine_(seed, stream_id)
  {
  }

  double operator()() { return dist_(engine_); }
  Philox& engine() { return engine_; }

private:
  Philox engine_;
  std::normal_distribution<double> dist_{ 0.0, 1.0 };
};

/// Seed for a sub-experiment identified by `tags`: a splitmix64 mix, so
/// distinct tag tuples give unrelated seeds.
inline std::uint64_t
derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags)
{
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (auto t : tags)
    h = mix(h ^ mix(t));
  return h;
}

/// Stream identifiers used across the library so that independent uses of
/// one seed never share a stream.
namespace streams {
constexpr std::uint64_t kRegularising = 0x5A00'0000'0000'0000ULL;
constexpr std::uint64_t kInitial = 0x1000'0000'0000'0000ULL;
constexpr std::uint64_t kIdiosyncratic = 0x2000'0000'0000'0000ULL;
constexpr std::uint64_t kSampling = 0x3000'0000'0000'0000ULL;
constexpr std::uint64_t kProjections = 0x4000'0000'0000'0000ULL;
} // namespace streams

} // namespace mfy
