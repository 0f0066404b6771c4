#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsd/sampler.hpp"
#include "lsd/score_oracle.hpp"

namespace lsd {

struct DistillConfig {
  int teacher_steps = 1024;
  int student_steps = 8;
  double t_max = 1.0;
  double epsilon = 1e-4;
  double eta = 1e-3;
  double grad_clip = 10.0;  // per-sample gradient magnitude cap; 0 disables
  int epochs = 20;        // coefficient (phi) epochs
  int kappa_epochs = 20;  // step-size epochs, run after all phi epochs
  int n_samples = 64;
  int zeta = 0;           // Hamming radius of the relaxed objective
  SamplerKind sampler = SamplerKind::euler;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  TimeSchedule teacher_schedule() const { return TimeSchedule::uniform(t_max, epsilon, teacher_steps); }
  TimeSchedule student_schedule() const { return TimeSchedule::uniform(t_max, epsilon, student_steps); }
};

// About 5% of the sequence length.
int default_zeta(int seq_len);

// Clamps a per-sample gradient to [-cap, cap] (cap <= 0 leaves it alone).
double clip_gradient(double g, double cap);

// Generalized KL for nonnegative (unnormalized) vectors:
//   sum_j a_j log(a_j / b_j) - a_j + b_j,   with 0 log 0 = 0.
double gen_kl(std::span<const double> a, std::span<const double> b);

// d/dc gen_kl(a, c * b) = sum_j (b_j - a_j / c).
double gen_kl_scale_gradient(std::span<const double> a, std::span<const double> b, double c);

// Student score entries that are exactly zero where the reference is not are
// floored before entering the divergence, as a network's strictly positive
// output would be.
inline constexpr double kScoreFloor = 1e-12;

// Everything gen_kl(r * s_ref, c * s_student) needs as a function of the
// scalar c, averaged over the D x N slots:
//   loss(c) = cross - ref_mean * log(c) - ref_mean + c * student_mean.
// Only slots that feed a reverse rate count; the rest are zero on that side.
// Uniform: every y != x. Absorbing: data tokens at masked positions.
struct AlignmentTerms {
  double ref_mean = 0.0;
  double student_mean = 0.0;
  double cross = 0.0;  // mean a log(a / b)

  double loss(double c) const;
  double gradient(double c) const { return student_mean - ref_mean / c; }
};

// One clipped gradient step on the scale c.
double sgd_step(double c, const AlignmentTerms& terms, double eta, double cap);

AlignmentTerms alignment_terms(const ScoreField& reference, const ScoreField& student,
                               DiffusionKind kind, double reference_scale = 1.0);

// x with at most zeta positions resampled: m ~ U{0..zeta} distinct positions,
// each moved to a different token (never the mask).
Sequence perturb_initial(const Sequence& x, int zeta, const ScoreOracle& oracle, CounterRng& rng);

struct TeacherRollout {
  std::vector<int> indices;  // positions in the teacher schedule
  std::vector<double> times;
  std::vector<Sequence> states;
  std::vector<ScoreField> scores;
};

// Indices of `coarse` inside `fine`; throws unless coarse is a subsequence.
std::vector<int> subsequence_indices(const TimeSchedule& fine, const TimeSchedule& coarse);

// Runs the phi == 1 teacher over every fine step and keeps the state and
// score at each requested index.
TeacherRollout teacher_rollout(const Sequence& x0, const TimeSchedule& teacher,
                               const std::vector<int>& coarse_indices, SamplerKind kind,
                               const ScoreOracle& oracle, const SampleStream& stream);

struct LossTrace {
  struct Entry {
    int epoch;
    std::string phase;  // "phi" or "kappa"
    int step;
    double loss;   // mean over the epoch's samples, before each update
    double param;  // parameter value at the end of the epoch
  };
  std::vector<Entry> entries;

  std::string to_csv() const;
};

struct LsdResult {
  CoefficientSet phi;
  LossTrace trace;
};

LsdResult lsd_train(const DistillConfig& config, const ScoreOracle& oracle);

struct LearnedSampler {
  std::string kind = "lsd";  // "lsd" or "lsd+"
  double t_max = 1.0;
  double epsilon = 1e-4;
  TimeSchedule schedule;
  CoefficientSet phi;
  std::vector<double> kappa;
  SamplerKind sampler = SamplerKind::euler;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json problem;  // task description needed to rebuild the score oracle
  bool provenance_mismatch = false;

  int steps() const { return schedule.steps(); }
  void validate() const;

  // Uniform schedule with the given coefficients.
  static LearnedSampler from_coefficients(const DistillConfig& config, CoefficientSet phi);

  nlohmann::json to_json() const;
  static LearnedSampler from_json(const nlohmann::json& doc);
};

// Learns step sizes kappa for fixed phi; phi comes from lsd_train.
// Appends its epochs to `trace` when given.
LearnedSampler lsd_plus_train(const DistillConfig& config, const CoefficientSet& phi,
                              const ScoreOracle& oracle, LossTrace* trace = nullptr);

// Projects step sizes onto {kappa_k >= floor, sum kappa = total}.
void project_steps(std::vector<double>& kappa, double total, double floor);

void export_learned(const LearnedSampler& sampler, const std::filesystem::path& path);
LearnedSampler import_learned(const std::filesystem::path& path,
                              const std::optional<std::string>& expected_hash = std::nullopt);

// Mean of the per-step alignment loss gen_kl(s*_k, phi_k * s_k) over the
// trained steps k = 1..M-1, teacher and student started from the same prior
// draw. The teacher state for step k is the last fine-grid state at or
// before student time tau_k, scored at tau_k.
double trajectory_alignment_loss(const LearnedSampler& sampler, int teacher_steps,
                                 const ScoreOracle& oracle, int n_samples, std::uint64_t seed,
                                 int threads);

}  // namespace lsd
