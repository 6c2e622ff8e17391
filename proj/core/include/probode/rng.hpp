#pragma once

#include <cstdint>
#include <string_view>

namespace probode {

// Splittable deterministic random stream.
//
// A stream is identified by a 64-bit key derived from the seed and the chain
// of child() calls that produced it. child() only reads the key, never the
// draw state, so any computation addressed by (seed, index...) reproduces the
// same numbers regardless of the order in which sibling streams are consumed.
// Draws come from xoshiro256++ seeded through a splitmix64 expansion of the
// key; the Gaussian transform is the Marsaglia polar method, so output is
// identical across platforms and standard-library versions.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // Independent substream addressed by an integer key or a string tag.
  RngStream child(std::uint64_t key) const;
  RngStream child(std::string_view tag) const;

  std::uint64_t next_u64();
  double uniform();  // U[0, 1)
  double gauss();    // N(0, 1)

  std::uint64_t key() const { return key_; }

 private:
  RngStream() = default;
  void seed_from_key();

  std::uint64_t key_ = 0;
  std::uint64_t s_[4] = {0, 0, 0, 0};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace probode
