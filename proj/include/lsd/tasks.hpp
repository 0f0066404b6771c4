#pragma once

#include <span>
#include <string_view>

#include "lsd/score_oracle.hpp"

namespace lsd {

// How zeros may appear in a countdown sequence.
//   transparent: zeros are padding anywhere; the non-zero tokens, read in
//                order, must decrease by exactly one.
//   suffix:      the non-zero run is a prefix and zeros only pad the tail.
enum class ZeroPlacement { transparent, suffix };

std::string_view to_string(ZeroPlacement zeros);
ZeroPlacement parse_zero_placement(std::string_view name);

struct CountdownSpec {
  int seq_len = 6;
  int vocab = 4;  // token values 0..vocab-1
  ZeroPlacement zeros = ZeroPlacement::transparent;

  void validate() const;
};

// Tokens outside [0, vocab) (e.g. a leftover mask) make a sequence invalid.
bool check_countdown(const Sequence& x, const CountdownSpec& spec);

// Uniform distribution over every valid sequence, in lexicographic order.
// Refuses specs with more than 4096 valid sequences.
DataDistribution countdown_distribution(const CountdownSpec& spec);

double error_rate(std::span<const Sequence> samples, const CountdownSpec& spec);

// Fraction of samples outside the support of `dist`.
double out_of_support_rate(std::span<const Sequence> samples, const DataDistribution& dist);

// 1/2 sum_x |p_hat(x) - p_0(x)| over support ∪ observed states.
double tv_distance(std::span<const Sequence> samples, const DataDistribution& dist);

// KL(p_0 || q) where q is the empirical distribution over the support plus one
// bucket for everything else, with a Jeffreys (+1/2) pseudo-count per bucket.
double kl_to_empirical(std::span<const Sequence> samples, const DataDistribution& dist);

}  // namespace lsd
