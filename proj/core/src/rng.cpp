#include "exolam/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace exolam {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::uint64_t RngStream::mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  counter_ = mix64(mix64(seed + kGolden) ^ mix64(stream_id + 0x8000000000000001ull));
}

std::uint64_t RngStream::next_u64() {
  counter_ += kGolden;
  std::uint64_t z = counter_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_gauss_;
  }
  // u1 in (0,1] keeps log finite; u2 in [0,1).
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  cached_gauss_ = r * std::sin(kTwoPi * u2);
  has_cached_ = true;
  return r * std::cos(kTwoPi * u2);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::next_below: n == 0");
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

void RngStream::restore(const State& s) {
  counter_ = s.counter;
  cached_gauss_ = s.cached_gauss;
  has_cached_ = s.has_cached;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                          std::uint64_t b) {
  return RngStream::mix64(RngStream::mix64(master + kGolden) ^
                          RngStream::mix64(a + 0x243F6A8885A308D3ull) ^
                          RngStream::mix64(b + 0x13198A2E03707344ull));
}

}  // namespace exolam
