#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fewshot {

/// Seeded, labelled random stream.
///
/// The engine is mt19937_64, whose output sequence is fixed by the standard.
/// The standard distributions are not, so all draws go through the helpers
/// here. A stream created from the same (seed, label) pair produces the same
/// draws on every platform.
///
/// Substreams are derived from the parent's seed and label only, never from
/// its consumed state, so component streams stay independent of call order.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  RngStream substream(std::string_view label) const;

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Standard normal (Marsaglia polar method).
  double normal();

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label);

/// Fisher-Yates shuffle driven by an RngStream.
template <class T>
void shuffle(std::vector<T>& values, RngStream& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace fewshot
