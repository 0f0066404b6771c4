#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lsd/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learnable sampler distillation lab for discrete diffusion"};
  app.require_subcommand(1);

  lsd::GlobalOptions options;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the config/artifact seed");
  app.add_option("--threads", options.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Distill a learned sampler");
  train->add_option("--config", config_path, "Run config (JSON)")->required();

  std::string artifact_path;
  std::string out_path;
  long long n = 0;
  auto* sample = app.add_subcommand("sample", "Draw samples with a learned sampler");
  sample->add_option("--artifact", artifact_path, "Learned sampler JSON")->required();
  sample->add_option("--n", n, "Number of samples")->required();
  sample->add_option("--out", out_path, "Output file (JSON lines)")->required();

  auto* sweep = app.add_subcommand("sweep", "Evaluate samplers across NFEs");
  sweep->add_option("--config", config_path, "Run config (JSON)")->required();

  auto* verify = app.add_subcommand("verify", "Re-check a learned sampler's invariants");
  verify->add_option("--artifact", artifact_path, "Learned sampler JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lsd::kExitConfig;
  }
  if (*seed_opt) options.seed = seed;

  if (*train) return lsd::cmd_train(config_path, options, std::cout, std::cerr);
  if (*sample) return lsd::cmd_sample(artifact_path, n, out_path, options, std::cout, std::cerr);
  if (*sweep) return lsd::cmd_sweep(config_path, options, std::cout, std::cerr);
  return lsd::cmd_verify(artifact_path, std::cout, std::cerr);
}
