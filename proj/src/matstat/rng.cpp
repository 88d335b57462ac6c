#include "cocrt/matstat/rng.hpp"

#include <array>

#include "cocrt/error.hpp"

namespace cocrt {

RngStream RngStream::substream(std::uint64_t index) const noexcept {
  return RngStream(mix64(base_seed_ ^ mix64(stream_index_ + 0x632be59bd9b4e019ULL)),
                   index);
}

Engine RngStream::engine() const {
  const std::uint64_t a = mix64(base_seed_);
  const std::uint64_t b = mix64(a ^ stream_index_);
  const std::uint64_t c = mix64(b + 0x2545f4914f6cdd1dULL);
  std::array<std::uint32_t, 6> words{
      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

std::vector<double> rng_gaussian(const RngStream& stream, std::size_t n) {
  Engine eng = stream.engine();
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(eng);
  return out;
}

std::vector<double> rng_gamma(const RngStream& stream, double shape, double scale,
                              std::size_t n) {
  require(shape > 0.0 && scale > 0.0, "rng_gamma: shape and scale must be positive");
  Engine eng = stream.engine();
  std::gamma_distribution<double> dist(shape, scale);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(eng);
  return out;
}

}  // namespace cocrt
