#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "lsd/errors.hpp"
#include "lsd/sampler.hpp"

using namespace lsd;

namespace {

ScoreField field(Sequence base, std::vector<std::vector<double>> rows, double t = 0.5) {
  ScoreField f;
  f.base_state = std::move(base);
  f.time = t;
  f.values.resize(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t v = 0; v < rows[i].size(); ++v) f.values(i, v) = rows[i][v];
  return f;
}

DataDistribution pair_distribution() {
  DataDistribution d;
  d.vocab = 3;
  d.seq_len = 2;
  d.support = {{0, 1}, {1, 2}, {2, 2}, {0, 0}};
  d.probs = {0.4, 0.3, 0.2, 0.1};
  return d;
}

DataDistribution single_token() {
  DataDistribution d;
  d.vocab = 3;
  d.seq_len = 1;
  d.support = {{0}, {1}, {2}};
  d.probs = {0.5, 0.3, 0.2};
  return d;
}

}  // namespace

TEST(TimeSchedule, UniformEndsAtEpsilon) {
  const auto s = TimeSchedule::uniform(1.0, 1e-4, 8);
  ASSERT_EQ(s.steps(), 8);
  EXPECT_EQ(s.times.front(), 1.0);
  EXPECT_EQ(s.times.back(), 1e-4);
  EXPECT_NO_THROW(s.validate());
  EXPECT_NEAR(s.times[4], 1.0 - 4 * (1.0 - 1e-4) / 8, 1e-15);
}

TEST(TimeSchedule, FromStepsMatchesUniformBitwise) {
  const auto a = TimeSchedule::uniform(1.0, 1e-4, 16);
  const auto b = TimeSchedule::from_steps(1.0, 1e-4, std::vector<double>(16, (1.0 - 1e-4) / 16));
  EXPECT_EQ(a.times, b.times);
}

TEST(TimeSchedule, RejectsBadSchedules) {
  EXPECT_THROW(TimeSchedule::uniform(1.0, 0.0, 4), DomainError);
  EXPECT_THROW(TimeSchedule::uniform(1.0, 1e-4, 0), DomainError);
  TimeSchedule bad{{1.0, 0.5, 0.5, 0.1}};
  EXPECT_THROW(bad.validate(), DomainError);
  TimeSchedule ends_at_zero{{1.0, 0.0}};
  EXPECT_THROW(ends_at_zero.validate(), DomainError);
}

TEST(Coefficients, Validation) {
  EXPECT_NO_THROW(CoefficientSet::identity(4).validate());
  EXPECT_THROW((CoefficientSet{{0.9, 1.0}}).validate(), DomainError);
  EXPECT_THROW((CoefficientSet{{1.0, -1.0}}).validate(), DomainError);
  EXPECT_THROW((CoefficientSet{{}}).validate(), DomainError);
}

TEST(EulerRow, AbsorbingMaskExample) {
  // vocab {a, b}, mask = 2; dt * sigma = 0.1
  const auto score = field({2}, {{3.0, 1.0, 1.0}});
  const auto schedule = NoiseSchedule::linear(1.0);
  const auto row = euler_transition_row(score, 0, schedule, DiffusionKind::absorbing, 0.5, 0.1, 1.0);
  EXPECT_NEAR(row[0], 0.3, 1e-15);
  EXPECT_NEAR(row[1], 0.1, 1e-15);
  EXPECT_NEAR(row[2], 0.6, 1e-15);
}

TEST(EulerRow, DataTokensStayUnderAbsorbing) {
  const auto score = field({0}, {{1.0, 5.0, 2.0}});
  const auto row = euler_transition_row(score, 0, NoiseSchedule::linear(1.0),
                                        DiffusionKind::absorbing, 0.5, 0.1, 1.0);
  EXPECT_EQ(row, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(EulerRow, PhiScalesAndLargeStepsClip) {
  const auto score = field({0}, {{1.0, 2.0, 1.0}});
  const auto schedule = NoiseSchedule::linear(1.0);
  const auto row = euler_transition_row(score, 0, schedule, DiffusionKind::uniform, 0.5, 0.1, 2.0);
  EXPECT_NEAR(row[1], 0.4, 1e-15);
  EXPECT_NEAR(row[2], 0.2, 1e-15);
  const auto big = euler_transition_row(score, 0, schedule, DiffusionKind::uniform, 0.5, 1.0, 1.0);
  EXPECT_EQ(big[0], 0.0);
  EXPECT_NEAR(big[1], 2.0 / 3.0, 1e-15);
  EXPECT_THROW(euler_transition_row(score, 0, schedule, DiffusionKind::uniform, 0.5, 0.1, 0.0),
               DomainError);
}

TEST(TweedieRow, ExactPosteriorForSingleToken) {
  const auto dist = single_token();
  const auto schedule = NoiseSchedule::geometric();
  for (auto kind : {DiffusionKind::uniform, DiffusionKind::absorbing}) {
    const ScoreOracle oracle(dist, schedule, kind);
    const int n = oracle.space().num_states;
    const double t = 0.6, s = 0.45;
    const auto k = kernel_closed_form(kind, schedule.sigma_bar(t) - schedule.sigma_bar(s), n).matrix;
    for (int x = 0; x < n; ++x) {
      const double px = oracle.exact_marginal({x}, t);
      if (px <= 0.0) continue;
      const auto score = oracle.concrete_score({x}, t);
      const auto row = tweedie_transition_row(score, 0, kind, schedule.sigma_bar(t),
                                              schedule.sigma_bar(s), 1.0);
      for (int v = 0; v < n; ++v)
        EXPECT_NEAR(row[v], oracle.exact_marginal({v}, s) * k(v, x) / px, 1e-10)
            << to_string(kind) << " x=" << x << " v=" << v;
    }
  }
}

TEST(TweedieRow, RowsAreDistributions) {
  const auto score = field({3}, {{0.5, 1.5, 0.2, 1.0}});
  for (double phi : {0.3, 1.0, 4.0}) {
    const auto row = tweedie_transition_row(score, 0, DiffusionKind::absorbing, 2.0, 0.5, phi);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-14);
    for (double p : row) EXPECT_GE(p, 0.0);
  }
  EXPECT_THROW(tweedie_transition_row(score, 0, DiffusionKind::absorbing, 0.5, 2.0, 1.0),
               DomainError);
}

TEST(Step, SingleStepFrequenciesMatchRow) {
  const auto dist = single_token();
  const ScoreOracle oracle(dist, NoiseSchedule::geometric(), DiffusionKind::uniform);
  const Sequence x{1};
  const double t = 0.5, s = 0.3;
  for (auto kind : {SamplerKind::euler, SamplerKind::tweedie}) {
    const auto score = oracle.concrete_score(x, t);
    const auto row =
        kind == SamplerKind::euler
            ? euler_transition_row(score, 0, oracle.schedule(), oracle.kind(), t, t - s, 1.3)
            : tweedie_transition_row(score, 0, oracle.kind(), oracle.schedule().sigma_bar(t),
                                     oracle.schedule().sigma_bar(s), 1.3);
    std::vector<int> counts(3, 0);
    const int n = 40000;
    for (int k = 0; k < n; ++k) {
      JumpClocks clocks(1);
      ++counts[step(x, t, s, 1.3, kind, oracle, SampleStream{5, std::uint64_t(k)}, clocks)[0]];
    }
    for (int v = 0; v < 3; ++v) EXPECT_NEAR(counts[v] / double(n), row[v], 4 * std::sqrt(0.25 / n));
  }
}

TEST(Step, ClocksPreserveTheMarkovLawAcrossSteps) {
  // Two clocked steps must follow the product of the two transition matrices.
  const auto dist = single_token();
  const ScoreOracle oracle(dist, NoiseSchedule::geometric(), DiffusionKind::uniform);
  const std::vector<double> times{0.6, 0.45, 0.3};
  auto matrix_at = [&](double t, double s) {
    Matrix m(3, 3);
    for (int x = 0; x < 3; ++x) {
      const auto row = euler_transition_row(oracle.concrete_score({x}, t), 0, oracle.schedule(),
                                            oracle.kind(), t, t - s, 1.0);
      for (int v = 0; v < 3; ++v) m(x, v) = row[v];
    }
    return m;
  };
  const Matrix two = matrix_at(times[0], times[1]) * matrix_at(times[1], times[2]);
  std::vector<int> counts(3, 0);
  const int n = 60000;
  for (int k = 0; k < n; ++k) {
    const SampleStream stream{9, std::uint64_t(k)};
    JumpClocks clocks(1);
    Sequence x{2};
    x = step(x, times[0], times[1], 1.0, SamplerKind::euler, oracle, stream, clocks);
    x = step(x, times[1], times[2], 1.0, SamplerKind::euler, oracle, stream, clocks);
    ++counts[x[0]];
  }
  for (int v = 0; v < 3; ++v) EXPECT_NEAR(counts[v] / double(n), two(2, v), 4 * std::sqrt(0.25 / n));
}

TEST(Step, RejectsForwardTime) {
  const ScoreOracle oracle(single_token(), NoiseSchedule::geometric(), DiffusionKind::uniform);
  JumpClocks clocks(1);
  EXPECT_THROW(step({0}, 0.2, 0.3, 1.0, SamplerKind::euler, oracle, SampleStream{}, clocks),
               DomainError);
}

TEST(Run, ShapesAndCache) {
  const ScoreOracle oracle(pair_distribution(), NoiseSchedule::geometric(), DiffusionKind::absorbing,
                           1e-6);
  const auto schedule = TimeSchedule::uniform(1.0, 1e-4, 8);
  const SampleStream stream{3, 0};
  const auto traj = run(draw_prior(oracle, stream), schedule, CoefficientSet::identity(8),
                        SamplerKind::euler, oracle, stream, true);
  EXPECT_EQ(traj.states.size(), 9u);
  EXPECT_EQ(traj.scores.size(), 9u);
  EXPECT_EQ(traj.states.front(), (Sequence{3, 3}));
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const auto again = oracle.concrete_score(traj.states[k], traj.times[k]);
    EXPECT_EQ(again.values, traj.scores[k].values);
  }
  EXPECT_THROW(run({3, 3}, schedule, CoefficientSet::identity(4), SamplerKind::euler, oracle, stream),
               DomainError);
}

TEST(Run, AbsorbingTerminalStateIsUnmasked) {
  const ScoreOracle oracle(pair_distribution(), NoiseSchedule::geometric(), DiffusionKind::absorbing,
                           1e-6);
  const auto schedule = TimeSchedule::uniform(1.0, 1e-4, 4);
  for (std::uint64_t k = 0; k < 50; ++k) {
    const SampleStream stream{1, k};
    const auto traj = run(draw_prior(oracle, stream), schedule, CoefficientSet::identity(4),
                          SamplerKind::euler, oracle, stream);
    for (Token v : traj.states.back()) EXPECT_LT(v, 3);
  }
}

TEST(Run, TeacherReachesTheDataDistribution) {
  const auto dist = pair_distribution();
  for (auto kind : {DiffusionKind::uniform, DiffusionKind::absorbing}) {
    const ScoreOracle oracle(dist, NoiseSchedule::geometric(), kind, 1e-9);
    const auto schedule = TimeSchedule::uniform(1.0, 1e-4, 256);
    std::map<Sequence, int> counts;
    const int n = 3000;
    for (int k = 0; k < n; ++k) {
      const SampleStream stream{21, std::uint64_t(k)};
      ++counts[run(draw_prior(oracle, stream), schedule, CoefficientSet::identity(256),
                   SamplerKind::euler, oracle, stream)
                   .states.back()];
    }
    double tv = 0.0;
    for (const auto& [x, c] : counts) tv += std::abs(c / double(n) - dist.probability(x));
    for (std::size_t s = 0; s < dist.support.size(); ++s)
      if (!counts.count(dist.support[s])) tv += dist.probs[s];
    EXPECT_LT(tv / 2, 0.05) << to_string(kind);
  }
}

TEST(Parse, SamplerKind) {
  EXPECT_EQ(parse_sampler_kind("tweedie"), SamplerKind::tweedie);
  EXPECT_THROW(parse_sampler_kind("heun"), ConfigError);
}
