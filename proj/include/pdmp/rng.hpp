#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace pdmp {

/// Philox4x32-10 block function (Salmon et al., SC'11). Maps a 128-bit counter
/// and a 64-bit key to 128 pseudo-random bits.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// SplitMix64 finalizer; used to derive child stream ids.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based random stream.
///
/// A stream is identified by (seed, stream id); its n-th 64-bit output is a
/// pure function of (seed, id, n). Two streams with distinct ids never share a
/// Philox block, and re-running with the same (seed, id) reproduces the same
/// draws regardless of which thread consumes them.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();

  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Exp(rate) by inversion; strictly positive.
  double exponential(double rate);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, no cached second variate).
  double normal();

  /// Child stream whose id is derived from this stream's id and `child`.
  /// Does not consume draws from the parent.
  RngStream split(std::uint64_t child) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;  // blocks consumed
  std::uint64_t buffered_ = 0;
  bool has_buffered_ = false;
};

}  // namespace pdmp
