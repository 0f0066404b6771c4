#include "lsd/sampler.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "lsd/errors.hpp"

namespace lsd {

namespace {

// Q(from, to) of the base generator.
double base_rate(DiffusionKind kind, int n, int from, int to) {
  if (from == to) return 0.0;  // diagonal handled by the callers
  if (kind == DiffusionKind::uniform) return 1.0;
  return (to == n - 1 && from != n - 1) ? 1.0 : 0.0;
}

void clip_and_normalize(std::vector<double>& row, const char* what) {
  double total = 0.0;
  for (auto& p : row) {
    if (!(p > 0.0)) p = 0.0;  // also maps NaN to 0
    total += p;
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw DegenerateStepError(std::string(what) + ": transition row has no mass after clipping");
  for (auto& p : row) p /= total;
}

}  // namespace

std::string_view to_string(SamplerKind kind) {
  return kind == SamplerKind::euler ? "euler" : "tweedie";
}

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "euler") return SamplerKind::euler;
  if (name == "tweedie") return SamplerKind::tweedie;
  throw ConfigError("unknown sampler kind '" + std::string(name) + "' (expected euler or tweedie)");
}

TimeSchedule TimeSchedule::from_steps(double t_max, double eps, const std::vector<double>& kappa) {
  TimeSchedule schedule;
  schedule.times.reserve(kappa.size() + 1);
  schedule.times.push_back(t_max);
  double consumed = 0.0;
  for (std::size_t k = 0; k < kappa.size(); ++k) {
    consumed += kappa[k];
    schedule.times.push_back(k + 1 == kappa.size() ? eps : t_max - consumed);
  }
  return schedule;
}

TimeSchedule TimeSchedule::uniform(double t_max, double eps, int steps) {
  if (steps < 1) throw DomainError("schedule needs at least one step");
  if (!(eps > 0.0) || !(t_max > eps)) throw DomainError("schedule needs T > eps > 0");
  return from_steps(t_max, eps, std::vector<double>(steps, (t_max - eps) / steps));
}

void TimeSchedule::validate() const {
  if (times.size() < 2) throw DomainError("time schedule needs at least two times");
  if (!(times.back() > 0.0)) throw DomainError("time schedule must end at eps > 0");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] < times[k - 1])) {
      std::ostringstream msg;
      msg << "time schedule not strictly decreasing at index " << k;
      throw DomainError(msg.str());
    }
  }
}

void CoefficientSet::validate() const {
  if (phi.empty()) throw DomainError("coefficient set is empty");
  if (phi[0] != 1.0) throw DomainError("phi[0] must be exactly 1");
  for (double p : phi)
    if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("coefficients must be finite and positive");
}

nlohmann::json Trajectory::to_json() const {
  return {{"times", times}, {"states", states}};
}

std::vector<double> euler_transition_row(const ScoreField& score, int position,
                                         const NoiseSchedule& schedule, DiffusionKind kind,
                                         double t, double dt, double phi) {
  if (!(dt >= 0.0)) throw DomainError("euler step needs dt >= 0");
  if (!(phi > 0.0)) throw DomainError("euler step needs phi > 0");
  const int n = static_cast<int>(score.values.cols());
  const Token current = score.base_state.at(position);
  const double scale = dt * schedule.sigma(t) * phi;

  std::vector<double> row(n, 0.0);
  double moved = 0.0;
  for (int v = 0; v < n; ++v) {
    if (v == current) continue;
    row[v] = scale * base_rate(kind, n, v, current) * score.values(position, v);
    moved += row[v];
  }
  row[current] = 1.0 - moved;
  clip_and_normalize(row, "euler");
  return row;
}

std::vector<double> tweedie_transition_row(const ScoreField& score, int position,
                                           DiffusionKind kind, double sb_from, double sb_to,
                                           double phi) {
  if (!(sb_from >= sb_to) || !(sb_to >= 0.0))
    throw DomainError("tweedie step needs sb_from >= sb_to >= 0");
  if (!(phi > 0.0)) throw DomainError("tweedie step needs phi > 0");
  const int n = static_cast<int>(score.values.cols());
  const Token current = score.base_state.at(position);
  const double gap = sb_from - sb_to;
  const KernelEntries backward(kind, n, -gap);
  const KernelEntries forward(kind, n, gap);

  std::vector<double> scaled(n);
  for (int v = 0; v < n; ++v) scaled[v] = v == current ? 1.0 : phi * score.values(position, v);

  std::vector<double> row(n);
  for (int v = 0; v < n; ++v) {
    double staggered = 0.0;
    for (int z = 0; z < n; ++z) staggered += backward(z, v) * scaled[z];
    row[v] = staggered * forward(v, current);
  }
  clip_and_normalize(row, "tweedie");
  return row;
}

Sequence step(const Sequence& x, double t_k, double t_next, double phi, SamplerKind kind,
              const ScoreOracle& oracle, const SampleStream& stream, JumpClocks& clocks,
              const ScoreField* score) {
  if (!(t_k > t_next)) throw DomainError("step needs t_k > t_next");
  if (clocks.hazard.size() != x.size()) throw DomainError("jump clocks do not match the state");
  ScoreField local;
  if (score == nullptr) {
    local = oracle.concrete_score(x, t_k);
    score = &local;
  }
  const auto& schedule = oracle.schedule();
  const double sb_from = kind == SamplerKind::tweedie ? schedule.sigma_bar(t_k) : 0.0;
  const double sb_to = kind == SamplerKind::tweedie ? schedule.sigma_bar(t_next) : 0.0;

  Sequence next = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto row =
        kind == SamplerKind::euler
            ? euler_transition_row(*score, static_cast<int>(i), schedule, oracle.kind(), t_k,
                                   t_k - t_next, phi)
            : tweedie_transition_row(*score, static_cast<int>(i), oracle.kind(), sb_from, sb_to,
                                     phi);
    double leave = 0.0;
    for (std::size_t v = 0; v < row.size(); ++v)
      if (static_cast<Token>(v) != x[i]) leave += row[v];
    if (!(leave > 0.0)) continue;
    clocks.hazard[i] += leave >= 1.0 ? std::numeric_limits<double>::infinity() : -std::log1p(-leave);

    auto rng = stream.substream(Purpose::transition, clocks.jumps[i], i);
    const double threshold = -std::log1p(-rng.uniform());
    if (clocks.hazard[i] < threshold) continue;

    const double u = rng.uniform() * leave;
    double acc = 0.0;
    Token to = x[i];
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (static_cast<Token>(v) == x[i] || row[v] <= 0.0) continue;
      acc += row[v];
      to = static_cast<Token>(v);
      if (u < acc) break;
    }
    next[i] = to;
    clocks.hazard[i] = 0.0;
    ++clocks.jumps[i];
  }
  return next;
}

Trajectory run(const Sequence& prior_draw, const TimeSchedule& schedule,
               const CoefficientSet& coeffs, SamplerKind kind, const ScoreOracle& oracle,
               const SampleStream& stream, bool cache_scores) {
  schedule.validate();
  coeffs.validate();
  const int steps = schedule.steps();
  if (static_cast<int>(coeffs.phi.size()) != steps)
    throw DomainError("coefficient count must equal the number of steps");

  Trajectory traj;
  traj.times = schedule.times;
  traj.states.reserve(steps + 1);
  traj.states.push_back(prior_draw);
  if (cache_scores) traj.scores.reserve(steps + 1);
  JumpClocks clocks(prior_draw.size());
  for (int k = 0; k < steps; ++k) {
    ScoreField score = oracle.concrete_score(traj.states.back(), schedule.times[k]);
    Sequence next = step(traj.states.back(), schedule.times[k], schedule.times[k + 1],
                         coeffs.phi[k], kind, oracle, stream, clocks, &score);
    if (cache_scores) traj.scores.push_back(std::move(score));
    traj.states.push_back(std::move(next));
  }
  if (cache_scores) traj.scores.push_back(oracle.concrete_score(traj.states.back(), schedule.times.back()));
  return traj;
}

Sequence draw_prior(const ScoreOracle& oracle, const SampleStream& stream) {
  auto rng = stream.substream(Purpose::prior, 0, 0);
  return sample_prior(oracle.kind(), oracle.space(), rng);
}

}  // namespace lsd
