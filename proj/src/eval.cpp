#include "lsd/eval.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "lsd/errors.hpp"
#include "lsd/parallel.hpp"

namespace lsd {

namespace {

constexpr std::uint64_t kEvalTag = 0x73616d70;  // "samp"

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

const EvalRow* EvalReport::find(const std::string& sampler, int nfe) const {
  for (const auto& r : rows)
    if (r.sampler == sampler && r.nfe == nfe) return &r;
  return nullptr;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "sampler,nfe,error_rate,tv,kl,loss,n,seconds\n";
  for (const auto& r : rows)
    out << r.sampler << ',' << r.nfe << ',' << fmt(r.error_rate) << ',' << fmt(r.tv) << ','
        << fmt(r.kl) << ',' << fmt(r.loss) << ',' << r.n << ',' << fmt(r.seconds) << '\n';
  return out.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"sampler", r.sampler},
                         {"nfe", r.nfe},
                         {"error_rate", r.error_rate},
                         {"tv", r.tv},
                         {"kl", r.kl},
                         {"loss", r.loss},
                         {"n", r.n},
                         {"seconds", r.seconds}});
  return {{"rows", rows_json}};
}

std::string EvalReport::to_plot_csv() const {
  std::ostringstream out;
  out << "metric,sampler,nfe,value\n";
  for (const auto& r : rows) {
    out << "error_rate," << r.sampler << ',' << r.nfe << ',' << fmt(r.error_rate) << '\n';
    out << "tv," << r.sampler << ',' << r.nfe << ',' << fmt(r.tv) << '\n';
    out << "kl," << r.sampler << ',' << r.nfe << ',' << fmt(r.kl) << '\n';
    out << "loss," << r.sampler << ',' << r.nfe << ',' << fmt(r.loss) << '\n';
  }
  return out.str();
}

std::vector<Sequence> generate_samples(const TimeSchedule& schedule, const CoefficientSet& phi,
                                       SamplerKind kind, const ScoreOracle& oracle, int n,
                                       std::uint64_t seed, int threads) {
  if (n < 0) throw DomainError("sample count must be nonnegative");
  std::vector<Sequence> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const SampleStream stream{mix_key({seed, kEvalTag}), i};
    out[i] = run(draw_prior(oracle, stream), schedule, phi, kind, oracle, stream).states.back();
  });
  return out;
}

std::vector<Sequence> generate_samples(const LearnedSampler& sampler, const ScoreOracle& oracle,
                                       int n, std::uint64_t seed, int threads) {
  sampler.validate();
  return generate_samples(sampler.schedule, sampler.phi, sampler.sampler, oracle, n, seed, threads);
}

std::string sampler_label(const std::string& kind, SamplerKind sampler) {
  return kind + "-" + std::string(to_string(sampler));
}

EvalReport nfe_sweep(const SweepSettings& settings, const ScoreOracle& oracle,
                     const std::map<int, std::vector<LearnedSampler>>& learned) {
  if (settings.n_eval_samples < 1) throw ConfigError("n_eval_samples must be positive");
  for (const auto& [nfe, samplers] : learned)
    for (const auto& s : samplers)
      if (s.steps() != nfe) throw ConfigError("learned sampler step count does not match its NFE");

  EvalReport report;
  const auto& dist = oracle.distribution();
  auto evaluate = [&](const std::string& kind, const LearnedSampler& sampler, int teacher_steps) {
    const auto start = std::chrono::steady_clock::now();
    const auto samples =
        generate_samples(sampler, oracle, settings.n_eval_samples, settings.seed, settings.threads);
    EvalRow row;
    row.sampler = sampler_label(kind, sampler.sampler);
    row.nfe = sampler.steps();
    row.n = settings.n_eval_samples;
    row.error_rate = settings.countdown ? error_rate(samples, *settings.countdown)
                                        : out_of_support_rate(samples, dist);
    row.tv = tv_distance(samples, dist);
    row.kl = kl_to_empirical(samples, dist);
    if (settings.n_loss_samples > 0 && teacher_steps > 0)
      row.loss = trajectory_alignment_loss(sampler, teacher_steps, oracle, settings.n_loss_samples,
                                           settings.seed, settings.threads);
    if (settings.record_timing)
      row.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.rows.push_back(row);
  };

  DistillConfig base;
  base.t_max = settings.t_max;
  base.epsilon = settings.epsilon;
  base.sampler = settings.sampler;
  base.seed = settings.seed;

  for (int nfe : settings.nfe_list) {
    if (nfe < 1) throw ConfigError("NFE values must be positive");
    const auto vanilla = LearnedSampler::from_coefficients(base, CoefficientSet::identity(nfe));
    evaluate("vanilla", vanilla, settings.teacher_steps);
    auto it = learned.find(nfe);
    if (it != learned.end())
      for (const auto& s : it->second) evaluate(s.kind, s, settings.teacher_steps);
  }
  if (settings.include_teacher) {
    const auto teacher =
        LearnedSampler::from_coefficients(base, CoefficientSet::identity(settings.teacher_steps));
    evaluate("teacher", teacher, 0);
  }
  return report;
}

}  // namespace lsd
