#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lsd/ctmc.hpp"
#include "lsd/rng.hpp"
#include "lsd/score_oracle.hpp"

namespace lsd {

enum class SamplerKind { euler, tweedie };

std::string_view to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view name);

// Decreasing sampling times T = t_0 > t_1 > ... > t_M = eps > 0.
struct TimeSchedule {
  std::vector<double> times;

  // t_k = T - sum_{l <= k} kappa_l with t_M pinned to eps. Uniform schedules
  // are built through this same path, so a uniform kappa reproduces them
  // bit for bit.
  static TimeSchedule from_steps(double t_max, double eps, const std::vector<double>& kappa);
  static TimeSchedule uniform(double t_max, double eps, int steps);

  int steps() const { return static_cast<int>(times.size()) - 1; }
  void validate() const;
};

// phi[k] scales the score on the step departing t_k; phi[0] is pinned to 1.
struct CoefficientSet {
  std::vector<double> phi;

  static CoefficientSet identity(int steps) { return {std::vector<double>(steps, 1.0)}; }
  void validate() const;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Sequence> states;
  std::vector<ScoreField> scores;  // empty unless cached; else one per state

  nlohmann::json to_json() const;
};

// Euler tau-leaping row for position i:
//   raw[v] = dt * sigma(t) * Q(v, x_i) * phi * s(i, v)   for v != x_i
// with the diagonal taking the complement, then clipped at 0 and renormalized.
std::vector<double> euler_transition_row(const ScoreField& score, int position,
                                         const NoiseSchedule& schedule, DiffusionKind kind,
                                         double t, double dt, double phi);

// Tweedie tau-leaping row for position i (d = sb_from - sb_to):
//   row[v] ∝ (exp(-d Q)^T s'_i)_v * exp(d Q)(v, x_i)
// where s'_i is the score row with off-diagonal entries scaled by phi.
std::vector<double> tweedie_transition_row(const ScoreField& score, int position,
                                           DiffusionKind kind, double sb_from, double sb_to,
                                           double phi);

// Per-position jump clocks. Position i leaves its token once the hazard
// -sum log P(stay) accumulated since its last jump exceeds an Exp(1) threshold
// drawn from stream.substream(transition, jumps[i], i); the destination comes
// from the same substream. By memorylessness each step still moves with
// exactly its transition row, while runs sharing a stream (teacher and
// student, say) stay coupled regardless of their step grids.
struct JumpClocks {
  std::vector<double> hazard;
  std::vector<std::uint64_t> jumps;

  explicit JumpClocks(std::size_t seq_len) : hazard(seq_len, 0.0), jumps(seq_len, 0) {}
};

// One factorized reverse step from t_k to t_next. `score` may be supplied to
// avoid recomputing it; it must be the score of (x, t_k).
Sequence step(const Sequence& x, double t_k, double t_next, double phi, SamplerKind kind,
              const ScoreOracle& oracle, const SampleStream& stream, JumpClocks& clocks,
              const ScoreField* score = nullptr);

Trajectory run(const Sequence& prior_draw, const TimeSchedule& schedule,
               const CoefficientSet& coeffs, SamplerKind kind, const ScoreOracle& oracle,
               const SampleStream& stream, bool cache_scores = false);

// Prior draw for one sample, from its own substream.
Sequence draw_prior(const ScoreOracle& oracle, const SampleStream& stream);

}  // namespace lsd
