#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

namespace lsd {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds an ordered list of integers into one 64-bit stream key.
inline constexpr std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

// Counter-based generator: draw n of stream k is a pure function of (k, n).
// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n > 0. Rejection keeps it exactly uniform.
  int uniform_int(int n) noexcept {
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return static_cast<int>(r % bound);
  }

  // Inverse-CDF draw from an (already normalized) categorical row.
  int categorical(std::span<const double> probs) noexcept {
    const double u = uniform();
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      if (probs[v] <= 0.0) continue;
      acc += probs[v];
      last_positive = static_cast<int>(v);
      if (u < acc) return last_positive;
    }
    return last_positive;  // rounding left u above the final partial sum
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// What a substream is used for; keeps e.g. prior draws and transitions apart
// even when their (step, position) coordinates coincide.
enum class Purpose : std::uint64_t {
  prior = 1,
  transition = 2,
  perturb = 3,
  forward = 4,
};

// Names the random stream of one sample in one run.
struct SampleStream {
  std::uint64_t seed = 0;
  std::uint64_t sample_id = 0;

  CounterRng substream(Purpose purpose, std::uint64_t step, std::uint64_t position) const noexcept {
    return CounterRng(mix_key({seed, sample_id, static_cast<std::uint64_t>(purpose), step, position}));
  }
};

}  // namespace lsd
