#pragma once

#include <cstdint>
#include <string_view>

namespace drx {

// Deterministic RNG with self-contained distributions. std distributions are
// not pinned by the standard, so uniform/normal are implemented here to keep
// byte-identical reruns independent of the C++ runtime.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Inclusive bounds, rejection-sampled (no modulo bias).
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Box-Muller.
  double normal(double mean, double sigma);
  // Resampled-free hard clip at mean +/- nclip*sigma.
  double normal_clipped(double mean, double sigma, double nclip);

 private:
  uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// FNV-1a over the name mixed into the root seed; used to derive independent
// streams ("consumer/3", "train/shuffle", ...) from one experiment seed.
uint64_t subseed(uint64_t root, std::string_view name);

}  // namespace drx
