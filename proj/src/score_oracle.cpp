#include "lsd/score_oracle.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lsd/errors.hpp"

namespace lsd {

void DataDistribution::validate() const {
  if (vocab < 1) throw DomainError("distribution vocab must be positive");
  if (seq_len < 1) throw DomainError("distribution seq_len must be positive");
  if (support.empty()) throw DomainError("distribution support is empty");
  if (support.size() != probs.size()) throw DomainError("support and probs differ in length");
  if (support.size() > kMaxSupport) throw DomainError("support exceeds the desk-scale bound of 4096");
  double total = 0.0;
  std::set<Sequence> seen;
  for (std::size_t k = 0; k < support.size(); ++k) {
    const auto& x = support[k];
    if (static_cast<int>(x.size()) != seq_len) throw DomainError("support entry has wrong length");
    for (Token v : x)
      if (v < 0 || v >= vocab) throw DomainError("support entry has a token outside the vocabulary");
    if (!seen.insert(x).second) throw DomainError("support entries must be distinct");
    if (!(probs[k] >= 0.0) || !std::isfinite(probs[k]))
      throw DomainError("probabilities must be finite and nonnegative");
    total += probs[k];
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("probabilities must sum to 1");
}

double DataDistribution::probability(const Sequence& x) const {
  for (std::size_t k = 0; k < support.size(); ++k)
    if (support[k] == x) return probs[k];
  return 0.0;
}

DataDistribution DataDistribution::from_json(const nlohmann::json& doc) {
  DataDistribution dist;
  try {
    dist.vocab = doc.at("vocab").get<int>();
    dist.seq_len = doc.at("seq_len").get<int>();
    dist.support = doc.at("support").get<std::vector<Sequence>>();
    dist.probs = doc.at("probs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed distribution document: ") + e.what());
  }
  dist.validate();
  return dist;
}

DataDistribution DataDistribution::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open distribution file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return from_json(doc);
}

nlohmann::json DataDistribution::to_json() const {
  return {{"vocab", vocab}, {"seq_len", seq_len}, {"support", support}, {"probs", probs}};
}

ScoreOracle::ScoreOracle(DataDistribution dist, NoiseSchedule schedule, DiffusionKind kind,
                         double smoothing)
    : dist_(std::move(dist)),
      schedule_(schedule),
      kind_(kind),
      space_(StateSpace::for_vocab(kind, dist_.vocab, dist_.seq_len)),
      smoothing_(smoothing) {
  dist_.validate();
  if (!(smoothing >= 0.0) || smoothing >= 1.0) throw DomainError("smoothing must lie in [0, 1)");
  const double work = static_cast<double>(dist_.support.size()) * space_.seq_len * space_.num_states;
  if (work > kMaxWork)
    throw DomainError("score oracle refuses |support| * D * N > 1e7 (got " +
                      std::to_string(static_cast<long long>(work)) + ")");
  flat_support_.reserve(dist_.support.size() * dist_.seq_len);
  for (const auto& x : dist_.support) flat_support_.insert(flat_support_.end(), x.begin(), x.end());
}

void ScoreOracle::check_state(const Sequence& x) const {
  if (!space_.contains(x)) throw DomainError("sequence does not belong to the state space");
}

double ScoreOracle::uniform_factor(const KernelEntries& kernel, Token to) const {
  double m = 0.0;
  for (Token u = 0; u < dist_.vocab; ++u) m += kernel(u, to);
  return m / dist_.vocab;
}

double ScoreOracle::exact_marginal(const Sequence& x, double t) const {
  check_state(x);
  const KernelEntries kernel(kind_, space_.num_states, schedule_.sigma_bar(t));
  const int d = space_.seq_len;
  double total = 0.0;
  for (std::size_t k = 0; k < dist_.probs.size(); ++k) {
    const Token* x0 = flat_support_.data() + k * d;
    double prod = dist_.probs[k];
    for (int i = 0; i < d && prod != 0.0; ++i) prod *= kernel(x0[i], x[i]);
    total += prod;
  }
  if (smoothing_ == 0.0) return total;
  double u = 1.0;
  for (int i = 0; i < d; ++i) u *= uniform_factor(kernel, x[i]);
  return (1.0 - smoothing_) * total + smoothing_ * u;
}

ScoreField ScoreOracle::concrete_score(const Sequence& x, double t) const {
  check_state(x);
  const int d = space_.seq_len;
  const int n = space_.num_states;
  const KernelEntries kernel(kind_, n, schedule_.sigma_bar(t));

  ScoreField field;
  field.base_state = x;
  field.time = t;
  field.values.setZero(d, n);
  auto& acc = field.values;

  // acc(i, v) accumulates p_t(x^{i->v}); each support point contributes
  // p0 * prod_{j != i} K(x0_j, x_j) * K(x0_i, v).
  std::vector<double> factor(d), prefix(d + 1), suffix(d + 1);
  auto accumulate = [&](double weight, auto&& entry, auto&& source_row) {
    int zeros = 0;
    int zero_at = -1;
    for (int i = 0; i < d; ++i) {
      factor[i] = entry(i);
      if (factor[i] == 0.0) {
        ++zeros;
        zero_at = i;
        if (zeros > 1) return 0.0;
      }
    }
    if (zeros == 1) {
      double loo = weight;
      for (int j = 0; j < d; ++j)
        if (j != zero_at) loo *= factor[j];
      if (loo != 0.0) source_row(zero_at, loo);
      return 0.0;
    }
    prefix[0] = weight;
    for (int i = 0; i < d; ++i) prefix[i + 1] = prefix[i] * factor[i];
    suffix[d] = 1.0;
    for (int i = d - 1; i >= 0; --i) suffix[i] = suffix[i + 1] * factor[i];
    for (int i = 0; i < d; ++i) {
      const double loo = prefix[i] * suffix[i + 1];
      if (loo != 0.0) source_row(i, loo);
    }
    return prefix[d];
  };

  const double data_weight = 1.0 - smoothing_;
  double marginal = 0.0;
  for (std::size_t k = 0; k < dist_.probs.size(); ++k) {
    const double p0 = dist_.probs[k];
    if (p0 == 0.0) continue;
    const Token* x0 = flat_support_.data() + k * d;
    marginal += accumulate(
        data_weight * p0, [&](int i) { return kernel(x0[i], x[i]); },
        [&](int i, double loo) {
          for (int v = 0; v < n; ++v) acc(i, v) += loo * kernel(x0[i], v);
        });
  }

  if (smoothing_ > 0.0) {
    std::vector<double> m(n);
    for (int v = 0; v < n; ++v) m[v] = uniform_factor(kernel, v);
    marginal += accumulate(
        smoothing_, [&](int i) { return m[x[i]]; },
        [&](int i, double loo) {
          for (int v = 0; v < n; ++v) acc(i, v) += loo * m[v];
        });
  }

  if (!(marginal > 0.0)) {
    std::ostringstream msg;
    msg << "p_t(x) = 0 at t = " << t << ": state unreachable under the forward process";
    throw SingularStateError(msg.str());
  }
  acc /= marginal;
  for (int i = 0; i < d; ++i) acc(i, x[i]) = 1.0;
  return field;
}

double exact_marginal(const DataDistribution& dist, const Sequence& x, double t,
                      const NoiseSchedule& schedule, DiffusionKind kind) {
  return ScoreOracle(dist, schedule, kind).exact_marginal(x, t);
}

}  // namespace lsd
