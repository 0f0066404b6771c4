#include "lsd/tasks.hpp"

#include <cmath>
#include <map>

#include "lsd/errors.hpp"

namespace lsd {

std::string_view to_string(ZeroPlacement zeros) {
  return zeros == ZeroPlacement::transparent ? "transparent" : "suffix";
}

ZeroPlacement parse_zero_placement(std::string_view name) {
  if (name == "transparent") return ZeroPlacement::transparent;
  if (name == "suffix") return ZeroPlacement::suffix;
  throw ConfigError("unknown zero placement '" + std::string(name) +
                    "' (expected transparent or suffix)");
}

void CountdownSpec::validate() const {
  if (seq_len < 2) throw DomainError("countdown needs seq_len >= 2");
  if (vocab < 2) throw DomainError("countdown needs vocab >= 2");
}

bool check_countdown(const Sequence& x, const CountdownSpec& spec) {
  int previous = 0;  // last non-zero token, 0 before the first one
  bool padding = false;
  for (Token v : x) {
    if (v < 0 || v >= spec.vocab) return false;
    if (v == 0) {
      padding = true;
      continue;
    }
    if (padding && spec.zeros == ZeroPlacement::suffix) return false;
    if (previous != 0 && v != previous - 1) return false;
    previous = v;
  }
  return true;
}

DataDistribution countdown_distribution(const CountdownSpec& spec) {
  spec.validate();
  DataDistribution dist;
  dist.vocab = spec.vocab;
  dist.seq_len = spec.seq_len;

  // Depth-first over tokens in increasing order, pruning prefixes that no
  // completion can repair; leaves are re-checked against the rule.
  Sequence prefix;
  prefix.reserve(spec.seq_len);
  auto extend = [&](auto&& self, int previous, bool padding) -> void {
    if (static_cast<int>(prefix.size()) == spec.seq_len) {
      if (check_countdown(prefix, spec)) {
        if (dist.support.size() == DataDistribution::kMaxSupport)
          throw DomainError("countdown support exceeds 4096 sequences; not enumerable at desk scale");
        dist.support.push_back(prefix);
      }
      return;
    }
    for (Token v = 0; v < spec.vocab; ++v) {
      if (v != 0) {
        if (padding && spec.zeros == ZeroPlacement::suffix) continue;
        if (previous != 0 && v != previous - 1) continue;
      }
      prefix.push_back(v);
      self(self, v == 0 ? previous : v, padding || v == 0);
      prefix.pop_back();
    }
  };
  extend(extend, 0, false);

  dist.probs.assign(dist.support.size(), 1.0 / static_cast<double>(dist.support.size()));
  dist.validate();
  return dist;
}

double error_rate(std::span<const Sequence> samples, const CountdownSpec& spec) {
  if (samples.empty()) throw DomainError("error_rate needs at least one sample");
  std::size_t bad = 0;
  for (const auto& x : samples) bad += !check_countdown(x, spec);
  return static_cast<double>(bad) / static_cast<double>(samples.size());
}

namespace {

std::map<Sequence, double> support_map(const DataDistribution& dist) {
  std::map<Sequence, double> p;
  for (std::size_t k = 0; k < dist.support.size(); ++k) p[dist.support[k]] += dist.probs[k];
  return p;
}

}  // namespace

double out_of_support_rate(std::span<const Sequence> samples, const DataDistribution& dist) {
  if (samples.empty()) throw DomainError("out_of_support_rate needs at least one sample");
  const auto p = support_map(dist);
  std::size_t outside = 0;
  for (const auto& x : samples) outside += !p.contains(x);
  return static_cast<double>(outside) / static_cast<double>(samples.size());
}

double tv_distance(std::span<const Sequence> samples, const DataDistribution& dist) {
  if (samples.empty()) throw DomainError("tv_distance needs at least one sample");
  std::map<Sequence, double> empirical;
  const double w = 1.0 / static_cast<double>(samples.size());
  for (const auto& x : samples) empirical[x] += w;
  auto p = support_map(dist);
  double total = 0.0;
  for (const auto& [x, q] : empirical) {
    auto it = p.find(x);
    if (it == p.end()) {
      total += q;
    } else {
      total += std::abs(q - it->second);
      it->second = -1.0;  // visited
    }
  }
  for (const auto& [x, prob] : p)
    if (prob >= 0.0) total += prob;
  return std::min(1.0, 0.5 * total);
}

double kl_to_empirical(std::span<const Sequence> samples, const DataDistribution& dist) {
  if (samples.empty()) throw DomainError("kl_to_empirical needs at least one sample");
  std::map<Sequence, double> counts;
  for (const auto& x : samples) counts[x] += 1.0;
  const double buckets = static_cast<double>(dist.support.size()) + 1.0;
  const double denom = static_cast<double>(samples.size()) + 0.5 * buckets;
  double kl = 0.0;
  for (std::size_t k = 0; k < dist.support.size(); ++k) {
    const double p = dist.probs[k];
    if (p <= 0.0) continue;
    auto it = counts.find(dist.support[k]);
    const double q = ((it == counts.end() ? 0.0 : it->second) + 0.5) / denom;
    kl += p * std::log(p / q);
  }
  return kl;
}

}  // namespace lsd
