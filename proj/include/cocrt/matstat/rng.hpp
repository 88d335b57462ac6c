#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace cocrt {

using Engine = std::mt19937_64;

/// Identifies an independent random stream by (base_seed, stream_index).
///
/// The stream carries no mutable state: `engine()` always returns a freshly
/// seeded generator positioned at the start of the stream, so replicate i of a
/// simulation can be run on any thread and still draw the same numbers.
class RngStream {
 public:
  constexpr RngStream(std::uint64_t base_seed, std::uint64_t stream_index) noexcept
      : base_seed_(base_seed), stream_index_(stream_index) {}

  std::uint64_t base_seed() const noexcept { return base_seed_; }
  std::uint64_t stream_index() const noexcept { return stream_index_; }

  /// A child stream, independent of the parent and of its other children.
  RngStream substream(std::uint64_t index) const noexcept;

  Engine engine() const;

 private:
  std::uint64_t base_seed_;
  std::uint64_t stream_index_;
};

std::vector<double> rng_gaussian(const RngStream& stream, std::size_t n);

/// Gamma(shape, scale) draws; valid for every shape > 0.
std::vector<double> rng_gamma(const RngStream& stream, double shape, double scale, std::size_t n);

/// The splitmix64 finalizer; used to derive well-mixed seeds from counters.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace cocrt
