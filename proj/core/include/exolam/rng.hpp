#pragma once

#include <cstdint>

namespace exolam {

// Counter-style splittable PRNG. State advances by the 64-bit golden-ratio
// increment and each output is the SplitMix64 finalizer of the state, so the
// sequence for a given (seed, stream_id) is bit-identical on every platform.
// Distinct stream_ids are decorrelated by double-mixing the key.
//
// Gaussians use the basic (trigonometric) Box-Muller transform with a fixed
// draw order and a one-value cache; there is no rejection branch.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t next_u64();
  double next_unit();      // uniform in [0, 1)
  double next_gaussian();  // standard normal
  // uniform in [0, n); n must be > 0
  std::uint64_t next_below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Raw state accessors for checkpointing.
  struct State {
    std::uint64_t counter;
    double cached_gauss;
    bool has_cached;
  };
  State state() const { return {counter_, cached_gauss_, has_cached_}; }
  void restore(const State& s);

  // Stable 64-bit mixing used for deriving seeds and hashes.
  static std::uint64_t mix64(std::uint64_t x);

 private:
  std::uint64_t seed_ = 0, stream_id_ = 0;
  std::uint64_t counter_ = 0;
  double cached_gauss_ = 0.0;
  bool has_cached_ = false;
};

// Order-independent seed derivation for sweep jobs and sub-streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                          std::uint64_t b = 0);

}  // namespace exolam
