#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "lsd/config.hpp"

namespace lsd {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;  // overrides the config / artifact seed
  int threads = 1;
};

struct TrainedRun {
  LearnedSampler lsd;
  std::optional<LearnedSampler> lsd_plus;
  LossTrace trace;

  const LearnedSampler& final() const { return lsd_plus ? *lsd_plus : lsd; }
};

// LSD, then LSD+ when cfg.method = "lsd+"; artifacts carry hash, problem and seed.
TrainedRun train_run(const RunConfig& cfg, const DistillConfig& dc, const ScoreOracle& oracle);

// Trains LSD (and LSD+ when method = "lsd+"); writes learned.json,
// loss_trace.csv and resolved_config.json into the output directory.
int cmd_train(const std::filesystem::path& config, const GlobalOptions& options,
              std::ostream& out, std::ostream& err);

// Writes n terminal sequences as JSON lines.
int cmd_sample(const std::filesystem::path& artifact, long long n,
               const std::filesystem::path& out_path, const GlobalOptions& options,
               std::ostream& out, std::ostream& err);

// Writes sweep.csv, sweep.json, sweep_plot.csv and resolved_config.json.
int cmd_sweep(const std::filesystem::path& config, const GlobalOptions& options,
              std::ostream& out, std::ostream& err);

// Re-checks every invariant of an artifact.
int cmd_verify(const std::filesystem::path& artifact, std::ostream& out, std::ostream& err);

}  // namespace lsd
