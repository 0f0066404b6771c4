#include "lsd/commands.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>

#include "lsd/config.hpp"
#include "lsd/errors.hpp"

namespace lsd {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << bytes;
}

RunConfig load_config(const fs::path& path, const GlobalOptions& options) {
  auto cfg = RunConfig::load(path);
  if (options.seed) cfg.seed = options.seed;
  if (!cfg.seed) throw ConfigError(path.string() + ": a seed is required (config 'seed' or --seed)");
  if (options.threads < 1) throw ConfigError("--threads must be positive");
  return cfg;
}

void print_final_losses(const LossTrace& trace, std::ostream& out) {
  // last epoch of each phase
  std::map<std::pair<std::string, int>, const LossTrace::Entry*> last;
  for (const auto& e : trace.entries) last[{e.phase, e.step}] = &e;
  out << std::setprecision(6);
  for (const auto& [key, e] : last)
    out << "  " << key.first << " step " << key.second << ": loss " << e->loss << "  param "
        << e->param << '\n';
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "error: training diverged at step " << e.step_index() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

TrainedRun train_run(const RunConfig& cfg, const DistillConfig& dc, const ScoreOracle& oracle) {
  TrainedRun t;
  auto lsd = lsd_train(dc, oracle);
  t.trace = std::move(lsd.trace);
  t.lsd = LearnedSampler::from_coefficients(dc, lsd.phi);
  if (cfg.method == "lsd+") t.lsd_plus = lsd_plus_train(dc, lsd.phi, oracle, &t.trace);
  for (LearnedSampler* s : {&t.lsd, t.lsd_plus ? &*t.lsd_plus : nullptr}) {
    if (!s) continue;
    s->config_hash = cfg.hash();
    s->problem = cfg.problem.to_json();
    s->seed = dc.seed;
  }
  return t;
}

int cmd_train(const fs::path& config, const GlobalOptions& options, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(config, options);
    auto dc = cfg.resolved_distill();
    dc.threads = options.threads;
    const auto oracle = cfg.problem.make_oracle();
    const fs::path dir = cfg.output_path();
    fs::create_directories(dir);
    write_file(dir / "resolved_config.json", cfg.to_json().dump(2) + "\n");

    out << "training " << cfg.method << " (" << to_string(dc.sampler) << ", M=" << dc.student_steps
        << ", N=" << dc.teacher_steps << ", zeta=" << dc.zeta << ", noise "
        << cfg.problem.noise.describe() << ")\n";
    const auto trained = train_run(cfg, dc, oracle);
    export_learned(trained.final(), dir / "learned.json");
    if (trained.lsd_plus) export_learned(trained.lsd, dir / "learned_lsd.json");
    write_file(dir / "loss_trace.csv", trained.trace.to_csv());
    out << "final per-step losses:\n";
    print_final_losses(trained.trace, out);
    out << "wrote " << (dir / "learned.json").string() << '\n';
    return kExitOk;
  });
}

int cmd_sample(const fs::path& artifact, long long n, const fs::path& out_path,
               const GlobalOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (n < 0) throw ConfigError("--n must be nonnegative");
    if (options.threads < 1) throw ConfigError("--threads must be positive");
    const auto sampler = import_learned(artifact);
    if (sampler.problem.is_null())
      throw SchemaError(artifact.string() + ": artifact carries no problem description");
    const auto problem = Problem::from_json(sampler.problem);
    const auto oracle = problem.make_oracle();
    const auto seed = options.seed.value_or(sampler.seed);
    const auto samples =
        generate_samples(sampler, oracle, static_cast<int>(n), seed, options.threads);
    std::string bytes;
    for (const auto& x : samples) bytes += nlohmann::json(x).dump() + "\n";
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_file(out_path, bytes);
    out << "wrote " << samples.size() << " samples to " << out_path.string() << '\n';
    return kExitOk;
  });
}

int cmd_sweep(const fs::path& config, const GlobalOptions& options, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_config(config, options);
    const auto oracle = cfg.problem.make_oracle();
    const auto settings = cfg.sweep_settings(options.threads);
    const fs::path dir = cfg.output_path();
    fs::create_directories(dir);
    write_file(dir / "resolved_config.json", cfg.to_json().dump(2) + "\n");

    std::map<int, std::vector<LearnedSampler>> learned;
    if (cfg.eval.learned == "artifacts") {
      for (int nfe : cfg.eval.nfe) {
        auto it = cfg.eval.artifacts.find(nfe);
        if (it == cfg.eval.artifacts.end())
          throw ConfigError("missing learned artifact for requested NFE " + std::to_string(nfe));
        fs::path p = it->second;
        if (p.is_relative()) p = cfg.base_dir / p;
        auto s = import_learned(p, cfg.hash());
        if (s.provenance_mismatch)
          err << "warning: " << p.string() << " was trained under a different config (hash "
              << s.config_hash << ")\n";
        learned[nfe].push_back(std::move(s));
      }
    } else if (cfg.eval.learned == "train") {
      for (int nfe : cfg.eval.nfe) {
        auto dc = cfg.resolved_distill();
        dc.student_steps = nfe;
        dc.threads = options.threads;
        out << "training " << cfg.method << " for NFE " << nfe << '\n';
        const auto trained = train_run(cfg, dc, oracle);
        const fs::path sub = dir / ("nfe_" + std::to_string(nfe));
        fs::create_directories(sub);
        export_learned(trained.final(), sub / "learned.json");
        write_file(sub / "loss_trace.csv", trained.trace.to_csv());
        learned[nfe].push_back(trained.lsd);
        if (trained.lsd_plus) learned[nfe].push_back(*trained.lsd_plus);
      }
    }

    const auto report = nfe_sweep(settings, oracle, learned);
    write_file(dir / "sweep.csv", report.to_csv());
    write_file(dir / "sweep.json", report.to_json().dump(2) + "\n");
    write_file(dir / "sweep_plot.csv", report.to_plot_csv());
    out << report.to_csv();

    // Trends are reported, not enforced.
    const std::string vanilla = sampler_label("vanilla", settings.sampler);
    for (std::size_t i = 1; i < settings.nfe_list.size(); ++i) {
      const auto* a = report.find(vanilla, settings.nfe_list[i - 1]);
      const auto* b = report.find(vanilla, settings.nfe_list[i]);
      if (a && b && settings.nfe_list[i] > settings.nfe_list[i - 1] && b->error_rate > a->error_rate)
        out << "trend: vanilla error rate rises from NFE " << a->nfe << " to " << b->nfe << '\n';
    }
    for (const auto& row : report.rows) {
      if (row.sampler == vanilla) continue;
      const auto* base = report.find(vanilla, row.nfe);
      if (base && row.error_rate > base->error_rate)
        out << "trend: " << row.sampler << " error rate above vanilla at NFE " << row.nfe << '\n';
    }
    return kExitOk;
  });
}

int cmd_verify(const fs::path& artifact, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto sampler = import_learned(artifact);  // validates schedule, phi and kappa
    out << "schedule: tau_0 = T, tau_M = epsilon, strictly decreasing: ok\n";
    out << "kappa: positive, sums to T - epsilon: ok\n";
    out << "phi: phi[0] = 1, all positive: ok\n";
    if (!sampler.problem.is_null()) {
      const auto problem = Problem::from_json(sampler.problem);
      const auto oracle = problem.make_oracle();
      if (std::abs(problem.noise.t_max() - sampler.t_max) > 1e-12)
        throw SchemaError("artifact T differs from its problem's noise horizon");
      out << "problem: " << problem.task << ", " << to_string(problem.diffusion) << ", "
          << problem.noise.describe() << ", support " << oracle.distribution().support.size()
          << ": ok\n";
    }
    out << artifact.string() << ": valid " << sampler.kind << " sampler, M = " << sampler.steps()
        << '\n';
    return kExitOk;
  });
}

}  // namespace lsd
