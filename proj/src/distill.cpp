#include "lsd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "lsd/errors.hpp"
#include "lsd/parallel.hpp"

namespace lsd {

namespace {

constexpr double kPhiLow = 1e-3;
constexpr double kPhiHigh = 1e3;
constexpr double kKappaFloorFraction = 1e-6;
constexpr double kScheduleTol = 1e-9;

void check_phi(double phi, int step) {
  if (!(phi > kPhiLow && phi < kPhiHigh)) {
    std::ostringstream msg;
    msg << "phi at step " << step << " diverged to " << phi << " (allowed (1e-3, 1e3))";
    throw DivergenceError(msg.str(), step);
  }
}

}  // namespace

void DistillConfig::validate() const {
  if (teacher_steps < 1 || student_steps < 1) throw ConfigError("step counts must be positive");
  if (student_steps > teacher_steps)
    throw ConfigError("student_steps must not exceed teacher_steps");
  if (teacher_steps % student_steps != 0)
    throw ConfigError("student_steps must divide teacher_steps so student times are a subsequence");
  if (!(epsilon > 0.0) || !(t_max > epsilon)) throw ConfigError("need T > epsilon > 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip))
    throw ConfigError("grad_clip must be nonnegative");
  if (epochs < 0 || kappa_epochs < 0) throw ConfigError("epoch counts must be nonnegative");
  if (n_samples < 1) throw ConfigError("n_samples must be positive");
  if (zeta < 0) throw ConfigError("zeta must be nonnegative");
  if (threads < 1) throw ConfigError("threads must be positive");
}

double clip_gradient(double g, double cap) {
  if (cap <= 0.0) return g;
  return std::clamp(g, -cap, cap);
}

double sgd_step(double c, const AlignmentTerms& terms, double eta, double cap) {
  return c - eta * clip_gradient(terms.gradient(c), cap);
}

int default_zeta(int seq_len) { return static_cast<int>(std::lround(0.05 * seq_len)); }

double gen_kl(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("gen_kl: shape mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (!(a[j] >= 0.0)) throw DomainError("gen_kl: first argument must be nonnegative");
    if (!(b[j] > 0.0)) throw DomainError("gen_kl: second argument must be positive");
    if (a[j] > 0.0) total += a[j] * std::log(a[j] / b[j]);
    total += b[j] - a[j];
  }
  return total;
}

double gen_kl_scale_gradient(std::span<const double> a, std::span<const double> b, double c) {
  if (a.size() != b.size()) throw DomainError("gen_kl: shape mismatch");
  if (!(c > 0.0)) throw DomainError("gen_kl: scale must be positive");
  double g = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) g += b[j] - a[j] / c;
  return g;
}

double AlignmentTerms::loss(double c) const {
  return cross - ref_mean * std::log(c) - ref_mean + c * student_mean;
}

namespace {

bool drives_rate(DiffusionKind kind, Token from, Eigen::Index to, Eigen::Index cols) {
  if (to == from) return false;
  if (kind == DiffusionKind::absorbing) return from == cols - 1;
  return true;
}

}  // namespace

AlignmentTerms alignment_terms(const ScoreField& reference, const ScoreField& student,
                               DiffusionKind kind, double reference_scale) {
  const auto& r = reference.values;
  const auto& s = student.values;
  if (r.rows() != s.rows() || r.cols() != s.cols())
    throw DomainError("alignment: score fields differ in shape");
  AlignmentTerms terms;
  const Eigen::Index rows = r.rows();
  const Eigen::Index cols = r.cols();
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index v = 0; v < cols; ++v) {
      const double a =
          drives_rate(kind, reference.base_state[i], v, cols) ? reference_scale * r(i, v) : 0.0;
      double b = drives_rate(kind, student.base_state[i], v, cols) ? s(i, v) : 0.0;
      if (a > 0.0) b = std::max(b, kScoreFloor);
      terms.ref_mean += a;
      terms.student_mean += b;
      if (a > 0.0) terms.cross += a * std::log(a / b);
    }
  }
  const double count = static_cast<double>(rows * cols);
  terms.ref_mean /= count;
  terms.student_mean /= count;
  terms.cross /= count;
  return terms;
}

Sequence perturb_initial(const Sequence& x, int zeta, const ScoreOracle& oracle, CounterRng& rng) {
  const auto& space = oracle.space();
  if (zeta < 0 || zeta > space.seq_len) throw DomainError("perturb_initial needs 0 <= zeta <= D");
  Sequence out = x;
  if (zeta == 0) return out;
  const int m = rng.uniform_int(zeta + 1);
  std::vector<int> positions(space.seq_len);
  std::iota(positions.begin(), positions.end(), 0);
  const int vocab = space.data_vocab();
  for (int k = 0; k < m; ++k) {
    const int pick = k + rng.uniform_int(space.seq_len - k);
    std::swap(positions[k], positions[pick]);
    const int i = positions[k];
    const Token current = out[i];
    const bool current_is_data = current < vocab;
    const int choices = current_is_data ? vocab - 1 : vocab;
    if (choices < 1) continue;
    Token v = rng.uniform_int(choices);
    if (current_is_data && v >= current) ++v;  // skip the current token
    out[i] = v;
  }
  return out;
}

std::vector<int> subsequence_indices(const TimeSchedule& fine, const TimeSchedule& coarse) {
  std::vector<int> indices;
  indices.reserve(coarse.times.size());
  const double tol = kScheduleTol * std::max(1.0, std::abs(fine.times.front()));
  std::size_t j = 0;
  for (double t : coarse.times) {
    while (j < fine.times.size() && fine.times[j] > t + tol) ++j;
    if (j == fine.times.size() || std::abs(fine.times[j] - t) > tol)
      throw DomainError("coarse times are not a subsequence of the teacher schedule");
    indices.push_back(static_cast<int>(j));
  }
  return indices;
}

TeacherRollout teacher_rollout(const Sequence& x0, const TimeSchedule& teacher,
                               const std::vector<int>& coarse_indices, SamplerKind kind,
                               const ScoreOracle& oracle, const SampleStream& stream) {
  teacher.validate();
  const int steps = teacher.steps();
  for (std::size_t c = 0; c < coarse_indices.size(); ++c) {
    if (coarse_indices[c] < 0 || coarse_indices[c] > steps ||
        (c > 0 && coarse_indices[c] <= coarse_indices[c - 1]))
      throw DomainError("coarse indices must be increasing positions in the teacher schedule");
  }
  TeacherRollout out;
  out.indices = coarse_indices;
  std::size_t next = 0;
  Sequence x = x0;
  JumpClocks clocks(x0.size());
  for (int j = 0; j <= steps && next < coarse_indices.size(); ++j) {
    const bool keep = coarse_indices[next] == j;
    if (j == steps) {
      if (keep) {
        out.times.push_back(teacher.times[j]);
        out.states.push_back(x);
        out.scores.push_back(oracle.concrete_score(x, teacher.times[j]));
        ++next;
      }
      break;
    }
    ScoreField score = oracle.concrete_score(x, teacher.times[j]);
    Sequence following = step(x, teacher.times[j], teacher.times[j + 1], 1.0, kind, oracle,
                              stream, clocks, &score);
    if (keep) {
      out.times.push_back(teacher.times[j]);
      out.states.push_back(x);
      out.scores.push_back(std::move(score));
      ++next;
    }
    x = std::move(following);
  }
  return out;
}

std::string LossTrace::to_csv() const {
  std::ostringstream out;
  out << "epoch,phase,step,loss,param\n";
  out << std::setprecision(17);
  for (const auto& e : entries)
    out << e.epoch << ',' << e.phase << ',' << e.step << ',' << e.loss << ',' << e.param << '\n';
  return out.str();
}

namespace {

// Per-sample alignment terms for one epoch. Rollouts use parameters frozen at
// the start of the epoch; teacher and student share each sample's stream.
std::vector<std::vector<AlignmentTerms>> epoch_terms(const DistillConfig& config,
                                                     const ScoreOracle& oracle,
                                                     const TimeSchedule& student,
                                                     const CoefficientSet& phi, int epoch,
                                                     std::uint64_t phase_tag, int first_step,
                                                     int last_step, double reference_scale) {
  const TimeSchedule teacher = config.teacher_schedule();
  const auto indices = subsequence_indices(teacher, config.student_schedule());
  std::vector<std::vector<AlignmentTerms>> terms(config.n_samples);
  parallel_for(config.n_samples, config.threads, [&](std::size_t n) {
    const SampleStream stream{mix_key({config.seed, phase_tag, static_cast<std::uint64_t>(epoch)}),
                              n};
    const Sequence x0 = draw_prior(oracle, stream);
    const auto reference = teacher_rollout(x0, teacher, indices, config.sampler, oracle, stream);
    auto perturb_rng = stream.substream(Purpose::perturb, 0, 0);
    const Sequence start = perturb_initial(x0, config.zeta, oracle, perturb_rng);
    const auto traj = run(start, student, phi, config.sampler, oracle, stream, true);
    auto& row = terms[n];
    row.resize(student.times.size());
    for (int k = first_step; k <= last_step; ++k)
      row[k] = alignment_terms(reference.scores[k], traj.scores[k], oracle.kind(), reference_scale);
  });
  return terms;
}

constexpr std::uint64_t kPhiPhase = 0x7068;    // "ph"
constexpr std::uint64_t kKappaPhase = 0x6b61;  // "ka"

}  // namespace

LsdResult lsd_train(const DistillConfig& config, const ScoreOracle& oracle) {
  config.validate();
  const int m = config.student_steps;
  const TimeSchedule student = config.student_schedule();
  LsdResult result;
  result.phi = CoefficientSet::identity(m);
  auto& phi = result.phi.phi;

  for (int epoch = 0; epoch < config.epochs && m > 1; ++epoch) {
    const auto terms =
        epoch_terms(config, oracle, student, result.phi, epoch, kPhiPhase, 1, m - 1, 1.0);
    std::vector<double> loss_sum(m, 0.0);
    for (int n = 0; n < config.n_samples; ++n) {
      for (int k = 1; k < m; ++k) {
        const auto& t = terms[n][k];
        loss_sum[k] += t.loss(phi[k]);
        phi[k] = sgd_step(phi[k], t, config.eta, config.grad_clip);
        check_phi(phi[k], k);
      }
    }
    for (int k = 1; k < m; ++k)
      result.trace.entries.push_back({epoch, "phi", k, loss_sum[k] / config.n_samples, phi[k]});
  }
  return result;
}

void project_steps(std::vector<double>& kappa, double total, double floor) {
  if (kappa.empty()) return;
  if (floor * static_cast<double>(kappa.size()) > total)
    throw DomainError("step floor too large for the time span");
  for (auto& k : kappa)
    if (!(k > floor) || !std::isfinite(k)) k = floor;
  // Water-filling: pin floored entries, rescale the rest to fill the span.
  std::vector<bool> pinned(kappa.size(), false);
  for (int iter = 0; iter < static_cast<int>(kappa.size()) + 1; ++iter) {
    double free_sum = 0.0;
    double pinned_sum = 0.0;
    for (std::size_t i = 0; i < kappa.size(); ++i) (pinned[i] ? pinned_sum : free_sum) += kappa[i];
    if (free_sum <= 0.0) break;
    const double scale = (total - pinned_sum) / free_sum;
    bool changed = false;
    for (std::size_t i = 0; i < kappa.size(); ++i) {
      if (pinned[i]) continue;
      kappa[i] *= scale;
      if (kappa[i] < floor) {
        kappa[i] = floor;
        pinned[i] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
}

LearnedSampler lsd_plus_train(const DistillConfig& config, const CoefficientSet& phi,
                              const ScoreOracle& oracle, LossTrace* trace) {
  config.validate();
  phi.validate();
  const int m = config.student_steps;
  if (static_cast<int>(phi.phi.size()) != m) throw DomainError("phi length must equal student_steps");

  const double span = config.t_max - config.epsilon;
  const double teacher_dt = span / config.teacher_steps;
  const double floor = kKappaFloorFraction * span;

  LearnedSampler out = LearnedSampler::from_coefficients(config, phi);
  out.kind = "lsd+";
  auto& kappa = out.kappa;

  for (int epoch = 0; epoch < config.kappa_epochs; ++epoch) {
    const TimeSchedule tau = TimeSchedule::from_steps(config.t_max, config.epsilon, kappa);
    const auto terms =
        epoch_terms(config, oracle, tau, phi, epoch, kKappaPhase, 1, m, teacher_dt);
    std::vector<double> loss_sum(m + 1, 0.0);
    for (int n = 0; n < config.n_samples; ++n) {
      for (int k = 1; k <= m; ++k) {
        double& step_size = kappa[k - 1];  // kappa_k arrives at tau_k
        const auto& t = terms[n][k];
        loss_sum[k] += t.loss(step_size);
        step_size = sgd_step(step_size, t, config.eta, config.grad_clip);
        if (!std::isfinite(step_size)) {
          std::ostringstream msg;
          msg << "kappa at step " << k << " became non-finite";
          throw DivergenceError(msg.str(), k);
        }
        step_size = std::max(step_size, floor);
      }
    }
    project_steps(kappa, span, floor);
    if (trace)
      for (int k = 1; k <= m; ++k)
        trace->entries.push_back({epoch, "kappa", k, loss_sum[k] / config.n_samples, kappa[k - 1]});
  }
  out.schedule = TimeSchedule::from_steps(config.t_max, config.epsilon, kappa);
  out.validate();
  return out;
}

LearnedSampler LearnedSampler::from_coefficients(const DistillConfig& config, CoefficientSet phi) {
  LearnedSampler s;
  s.kind = "lsd";
  s.t_max = config.t_max;
  s.epsilon = config.epsilon;
  const int m = static_cast<int>(phi.phi.size());
  s.kappa.assign(m, (config.t_max - config.epsilon) / m);
  s.schedule = TimeSchedule::from_steps(config.t_max, config.epsilon, s.kappa);
  s.phi = std::move(phi);
  s.sampler = config.sampler;
  s.seed = config.seed;
  return s;
}

void LearnedSampler::validate() const {
  if (kind != "lsd" && kind != "lsd+") throw SchemaError("kind must be 'lsd' or 'lsd+'");
  const int m = static_cast<int>(kappa.size());
  if (m < 1) throw SchemaError("learned sampler needs at least one step");
  if (static_cast<int>(schedule.times.size()) != m + 1)
    throw SchemaError("tau must have M + 1 entries");
  if (static_cast<int>(phi.phi.size()) != m) throw SchemaError("phi must have M entries");
  try {
    schedule.validate();
    phi.validate();
  } catch (const DomainError& e) {
    throw SchemaError(e.what());
  }
  const double tol = kScheduleTol * std::max(1.0, t_max);
  if (std::abs(schedule.times.front() - t_max) > tol) throw SchemaError("tau_0 must equal T");
  if (std::abs(schedule.times.back() - epsilon) > tol) throw SchemaError("tau_M must equal epsilon");
  double consumed = 0.0;
  for (int k = 0; k < m; ++k) {
    if (!(kappa[k] > 0.0) || !std::isfinite(kappa[k]))
      throw SchemaError("kappa entries must be positive");
    consumed += kappa[k];
    if (k + 1 < m && std::abs(schedule.times[k + 1] - (t_max - consumed)) > tol)
      throw SchemaError("tau is inconsistent with kappa");
  }
  if (std::abs(consumed - (t_max - epsilon)) > tol)
    throw SchemaError("kappa must sum to T - epsilon");
}

nlohmann::json LearnedSampler::to_json() const {
  nlohmann::json doc = {{"version", 1},
                        {"kind", kind},
                        {"T", t_max},
                        {"epsilon", epsilon},
                        {"M", steps()},
                        {"phi", phi.phi},
                        {"kappa", kappa},
                        {"tau", schedule.times},
                        {"sampler_kind", std::string(to_string(sampler))},
                        {"config_hash", config_hash},
                        {"seed", seed}};
  if (!problem.is_null()) doc["problem"] = problem;
  return doc;
}

LearnedSampler LearnedSampler::from_json(const nlohmann::json& doc) {
  LearnedSampler s;
  try {
    const int version = doc.at("version").get<int>();
    if (version != 1) throw SchemaError("unsupported learned-sampler version " + std::to_string(version));
    s.kind = doc.at("kind").get<std::string>();
    s.t_max = doc.at("T").get<double>();
    s.epsilon = doc.at("epsilon").get<double>();
    const int m = doc.at("M").get<int>();
    s.phi.phi = doc.at("phi").get<std::vector<double>>();
    s.kappa = doc.at("kappa").get<std::vector<double>>();
    s.schedule.times = doc.at("tau").get<std::vector<double>>();
    s.sampler = parse_sampler_kind(doc.at("sampler_kind").get<std::string>());
    s.config_hash = doc.at("config_hash").get<std::string>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("problem")) s.problem = doc.at("problem");
    if (m != static_cast<int>(s.kappa.size())) throw SchemaError("M does not match kappa length");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed learned-sampler document: ") + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(e.what());
  }
  s.validate();
  return s;
}

void export_learned(const LearnedSampler& sampler, const std::filesystem::path& path) {
  sampler.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << sampler.to_json().dump(2) << '\n';
}

LearnedSampler import_learned(const std::filesystem::path& path,
                              const std::optional<std::string>& expected_hash) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open artifact " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  auto sampler = LearnedSampler::from_json(doc);
  if (expected_hash && *expected_hash != sampler.config_hash) sampler.provenance_mismatch = true;
  return sampler;
}

double trajectory_alignment_loss(const LearnedSampler& sampler, int teacher_steps,
                                 const ScoreOracle& oracle, int n_samples, std::uint64_t seed,
                                 int threads) {
  sampler.validate();
  const int m = sampler.steps();
  if (m < 2 || n_samples < 1) return 0.0;
  const TimeSchedule teacher = TimeSchedule::uniform(sampler.t_max, sampler.epsilon, teacher_steps);
  const double tol = kScheduleTol * std::max(1.0, sampler.t_max);
  // Last fine index whose time is >= tau_k.
  std::vector<int> indices;
  for (int k = 1; k < m; ++k) {
    const double tau = sampler.schedule.times[k];
    int j = 0;
    while (j + 1 <= teacher.steps() && teacher.times[j + 1] >= tau - tol) ++j;
    indices.push_back(j);
  }
  // Distinct student times can share a fine index; roll out once per index.
  std::vector<int> unique_indices = indices;
  unique_indices.erase(std::unique(unique_indices.begin(), unique_indices.end()),
                       unique_indices.end());

  std::vector<double> per_sample(n_samples, 0.0);
  parallel_for(n_samples, threads, [&](std::size_t n) {
    const SampleStream stream{mix_key({seed, 0x65766c}), n};
    const Sequence x0 = draw_prior(oracle, stream);
    const auto reference =
        teacher_rollout(x0, teacher, unique_indices, sampler.sampler, oracle, stream);
    const auto traj = run(x0, sampler.schedule, sampler.phi, sampler.sampler, oracle, stream, true);
    double total = 0.0;
    for (int k = 1; k < m; ++k) {
      const auto pos = std::lower_bound(unique_indices.begin(), unique_indices.end(), indices[k - 1]) -
                       unique_indices.begin();
      const double tau = sampler.schedule.times[k];
      const ScoreField ref = std::abs(reference.times[pos] - tau) <= tol
                                 ? reference.scores[pos]
                                 : oracle.concrete_score(reference.states[pos], tau);
      total += alignment_terms(ref, traj.scores[k], oracle.kind()).loss(sampler.phi.phi[k]);
    }
    per_sample[n] = total / (m - 1);
  });
  double sum = 0.0;
  for (double v : per_sample) sum += v;
  return sum / n_samples;
}

}  // namespace lsd
