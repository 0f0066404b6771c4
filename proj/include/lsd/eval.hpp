#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsd/distill.hpp"
#include "lsd/tasks.hpp"

namespace lsd {

struct EvalRow {
  std::string sampler;
  int nfe = 0;
  double error_rate = 0.0;
  double tv = 0.0;
  double kl = 0.0;
  double loss = 0.0;
  int n = 0;
  double seconds = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  const EvalRow* find(const std::string& sampler, int nfe) const;

  // Header: sampler,nfe,error_rate,tv,kl,loss,n,seconds
  std::string to_csv() const;
  nlohmann::json to_json() const;
  // Long format for plotting: metric,sampler,nfe,value
  std::string to_plot_csv() const;
};

struct SweepSettings {
  std::vector<int> nfe_list{8, 16, 32, 64};
  int n_eval_samples = 1000;
  int n_loss_samples = 0;  // 0 skips the alignment-loss column
  int teacher_steps = 1024;
  double t_max = 1.0;
  double epsilon = 1e-4;
  SamplerKind sampler = SamplerKind::euler;
  bool include_teacher = false;
  bool record_timing = false;  // off keeps reports byte-reproducible
  std::optional<CountdownSpec> countdown;  // error rate by rule; else out-of-support rate
  std::uint64_t seed = 0;
  int threads = 1;
};

// Terminal states of n samples. Sample i always starts from the same prior
// draw and random streams for a given seed, whatever the sampler.
std::vector<Sequence> generate_samples(const TimeSchedule& schedule, const CoefficientSet& phi,
                                       SamplerKind kind, const ScoreOracle& oracle, int n,
                                       std::uint64_t seed, int threads);

std::vector<Sequence> generate_samples(const LearnedSampler& sampler, const ScoreOracle& oracle,
                                       int n, std::uint64_t seed, int threads);

std::string sampler_label(const std::string& kind, SamplerKind sampler);

// Vanilla rows for every NFE, plus one row per learned sampler whose step
// count matches the NFE. learned[nfe] must cover every requested NFE it
// names.
EvalReport nfe_sweep(const SweepSettings& settings, const ScoreOracle& oracle,
                     const std::map<int, std::vector<LearnedSampler>>& learned = {});

}  // namespace lsd
