#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsd/distill.hpp"
#include "lsd/eval.hpp"
#include "lsd/tasks.hpp"

namespace lsd {

// Everything needed to rebuild the score oracle of a run. Embedded in every
// learned-sampler artifact so `sample` and `verify` are self-contained.
struct Problem {
  std::string task = "countdown";  // "countdown" | "custom-distribution"
  CountdownSpec countdown;
  DataDistribution distribution;  // resolved support for either task
  std::string distribution_path;  // as written in the config, custom tasks only
  bool distribution_inline = false;
  DiffusionKind diffusion = DiffusionKind::absorbing;
  NoiseSchedule noise = NoiseSchedule::geometric();
  double smoothing = 1e-6;

  ScoreOracle make_oracle() const;
  std::optional<CountdownSpec> rule() const;

  // Self-contained form (distribution always inlined).
  nlohmann::json to_json() const;
  static Problem from_json(const nlohmann::json& doc);
};

struct EvalConfig {
  std::vector<int> nfe{8, 16, 32, 64};
  int n_eval_samples = 1000;
  int n_loss_samples = 0;
  bool include_teacher = false;
  bool record_timing = false;
  std::string learned = "none";           // "none" | "train" | "artifacts"
  std::map<int, std::string> artifacts;   // nfe -> path, when learned == "artifacts"
};

struct RunConfig {
  Problem problem;
  std::string method = "lsd+";  // "lsd" | "lsd+"
  DistillConfig distill;
  std::optional<int> zeta;  // unset: about 5% of seq_len
  EvalConfig eval;
  std::string output_dir = "out";  // relative to the config file
  std::optional<std::uint64_t> seed;
  std::filesystem::path base_dir;  // directory of the config file

  // Throws ConfigError with the offending JSON path (and line, when `text`
  // is given and the key can be located).
  static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                             const std::string& text = {});
  static RunConfig load(const std::filesystem::path& path);

  // Canonical normal form with every default filled in.
  nlohmann::json to_json() const;

  // FNV-1a over the canonical form, excluding eval and output settings.
  std::string hash() const;

  // Distill settings with seed and zeta resolved.
  DistillConfig resolved_distill() const;
  SweepSettings sweep_settings(int threads) const;
  std::filesystem::path output_path() const;
};

std::string fnv1a_hex(const std::string& bytes);

}  // namespace lsd
