#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "lsd/ctmc.hpp"

namespace lsd {

// Finite data distribution p_0 given by an explicit support.
struct DataDistribution {
  int vocab = 2;    // data tokens, excluding any mask state
  int seq_len = 1;
  std::vector<Sequence> support;
  std::vector<double> probs;

  static constexpr std::size_t kMaxSupport = 4096;

  void validate() const;
  double probability(const Sequence& x) const;  // linear scan, 0 when absent

  static DataDistribution from_json(const nlohmann::json& doc);
  static DataDistribution load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Concrete scores p_t(x^{i->v}) / p_t(x) for every position i and value v.
// The self entry values(i, x_i) is exactly 1.
struct ScoreField {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
  Sequence base_state;
  double time = 0.0;
};

// Exact marginals and concrete scores of the forward process started from a
// DataDistribution. Stands in for a trained score network.
//
// An optional smoothing weight lambda mixes p_0 with the product-uniform
// distribution over data tokens: p_0' = (1 - lambda) p_0 + lambda u. With
// lambda > 0 every state has positive marginal for t > 0, so factorized
// samplers that wander outside the support still get a defined score.
class ScoreOracle {
 public:
  // Work bound on |support| * D * N per score call.
  static constexpr double kMaxWork = 1e7;

  ScoreOracle(DataDistribution dist, NoiseSchedule schedule, DiffusionKind kind,
              double smoothing = 0.0);

  double exact_marginal(const Sequence& x, double t) const;
  ScoreField concrete_score(const Sequence& x, double t) const;

  const DataDistribution& distribution() const { return dist_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const StateSpace& space() const { return space_; }
  DiffusionKind kind() const { return kind_; }
  double smoothing() const { return smoothing_; }

 private:
  void check_state(const Sequence& x) const;
  double uniform_factor(const KernelEntries& kernel, Token to) const;

  DataDistribution dist_;
  NoiseSchedule schedule_;
  DiffusionKind kind_;
  StateSpace space_;
  double smoothing_;
  std::vector<Token> flat_support_;  // |support| x D, row-major
};

// Free-function form: p_t(x) under `dist` without smoothing.
double exact_marginal(const DataDistribution& dist, const Sequence& x, double t,
                      const NoiseSchedule& schedule, DiffusionKind kind);

}  // namespace lsd
