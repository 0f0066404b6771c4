#include "lsd/ctmc.hpp"

#include <cmath>
#include <sstream>

#include "lsd/errors.hpp"

namespace lsd {

std::string_view to_string(DiffusionKind kind) {
  return kind == DiffusionKind::uniform ? "uniform" : "absorbing";
}

DiffusionKind parse_diffusion_kind(std::string_view name) {
  if (name == "uniform") return DiffusionKind::uniform;
  if (name == "absorbing") return DiffusionKind::absorbing;
  throw ConfigError("unknown diffusion kind '" + std::string(name) +
                    "' (expected uniform or absorbing)");
}

StateSpace StateSpace::for_vocab(DiffusionKind kind, int vocab, int seq_len) {
  StateSpace space;
  space.seq_len = seq_len;
  if (kind == DiffusionKind::absorbing) {
    space.num_states = vocab + 1;
    space.mask_index = vocab;
  } else {
    space.num_states = vocab;
  }
  space.validate();
  return space;
}

void StateSpace::validate() const {
  if (num_states < 2) throw DomainError("state space needs at least 2 states");
  if (seq_len < 1) throw DomainError("sequence length must be positive");
  if (mask_index && (*mask_index < 0 || *mask_index >= num_states))
    throw DomainError("mask index outside the state space");
}

bool StateSpace::contains(const Sequence& x) const {
  if (static_cast<int>(x.size()) != seq_len) return false;
  for (Token v : x)
    if (v < 0 || v >= num_states) return false;
  return true;
}

NoiseSchedule NoiseSchedule::linear(double rate, double t_max) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw DomainError("linear schedule needs rate > 0");
  if (!(t_max > 0.0)) throw DomainError("schedule needs t_max > 0");
  return NoiseSchedule(Kind::linear, t_max, rate, 0.0, 0.0);
}

NoiseSchedule NoiseSchedule::geometric(double sigma_bar_min, double sigma_bar_max, double t_max) {
  if (!(sigma_bar_min > 0.0) || !(sigma_bar_max > sigma_bar_min))
    throw DomainError("geometric schedule needs 0 < sigma_bar_min < sigma_bar_max");
  if (!(t_max > 0.0)) throw DomainError("schedule needs t_max > 0");
  return NoiseSchedule(Kind::geometric, t_max, 0.0, sigma_bar_min, sigma_bar_max);
}

void NoiseSchedule::check_time(double t) const {
  if (!(t >= 0.0) || t > t_max_) {
    std::ostringstream msg;
    msg << "time " << t << " outside [0, " << t_max_ << "]";
    throw DomainError(msg.str());
  }
}

double NoiseSchedule::sigma(double t) const {
  check_time(t);
  if (kind_ == Kind::linear) return rate_;
  const double u = t / t_max_;
  return std::pow(lo_, 1.0 - u) * std::pow(hi_, u) * std::log(hi_ / lo_) / t_max_;
}

double NoiseSchedule::sigma_bar(double t) const {
  check_time(t);
  if (kind_ == Kind::linear) return rate_ * t;
  if (t == 0.0) return 0.0;
  const double u = t / t_max_;
  // lo * (exp(u log(hi/lo)) - 1) keeps precision for small t
  return lo_ * std::expm1(u * std::log(hi_ / lo_));
}

std::string NoiseSchedule::describe() const {
  std::ostringstream out;
  if (kind_ == Kind::linear)
    out << "linear(rate=" << rate_ << ", T=" << t_max_ << ")";
  else
    out << "geometric(sigma_bar_min=" << lo_ << ", sigma_bar_max=" << hi_ << ", T=" << t_max_ << ")";
  return out.str();
}

Matrix rate_matrix(DiffusionKind kind, int n) {
  if (n < 2) throw DomainError("rate matrix needs N >= 2");
  Matrix q = Matrix::Zero(n, n);
  if (kind == DiffusionKind::uniform) {
    q.setOnes();
    q.diagonal().setConstant(1.0 - n);
  } else {
    for (int i = 0; i + 1 < n; ++i) {
      q(i, i) = -1.0;
      q(i, n - 1) = 1.0;
    }
  }
  return q;
}

KernelEntries::KernelEntries(DiffusionKind kind, int n, double tau)
    : kind_(kind), n_(n), mask_(n - 1) {
  if (n < 2) throw DomainError("kernel needs N >= 2");
  if (kind == DiffusionKind::uniform) {
    const double decay = std::exp(-n * tau);
    off_ = -std::expm1(-n * tau) / n;
    diag_ = decay + off_;
  } else {
    diag_ = std::exp(-tau);
    off_ = -std::expm1(-tau);
  }
}

TransitionKernel kernel_closed_form(DiffusionKind kind, double delta_sigma_bar, int n) {
  if (!(delta_sigma_bar >= 0.0)) throw DomainError("kernel needs delta_sigma_bar >= 0");
  const KernelEntries entries(kind, n, delta_sigma_bar);
  TransitionKernel kernel;
  kernel.matrix.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) kernel.matrix(i, j) = entries(i, j);
  kernel.target_sigma_bar = delta_sigma_bar;
  return kernel;
}

TransitionKernel kernel_generic(const Matrix& q, double tau) {
  if (q.rows() != q.cols() || q.rows() < 1) throw DomainError("rate matrix must be square");
  if (!(tau >= 0.0)) throw DomainError("kernel needs tau >= 0");
  const Eigen::Index n = q.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double row_sum = 0.0;
    double scale = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && q(i, j) < 0.0) throw DomainError("rate matrix has a negative off-diagonal rate");
      row_sum += q(i, j);
      scale += std::abs(q(i, j));
    }
    if (std::abs(row_sum) > 1e-12 * std::max(1.0, scale))
      throw DomainError("rate matrix is not conservative (row sums must be zero)");
  }

  const Matrix a = tau * q;
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  Matrix result = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-20) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;

  TransitionKernel kernel;
  kernel.matrix = std::move(result);
  kernel.target_sigma_bar = tau;
  return kernel;
}

bool is_row_stochastic(const Matrix& p, double tol) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) < -tol || p(i, j) > 1.0 + tol) return false;
      sum += p(i, j);
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

Sequence sample_prior(DiffusionKind kind, const StateSpace& space, CounterRng& rng) {
  space.validate();
  if (kind == DiffusionKind::absorbing) {
    if (!space.mask_index) throw DomainError("absorbing prior requires a mask state");
    return Sequence(space.seq_len, *space.mask_index);
  }
  Sequence x(space.seq_len);
  for (auto& v : x) v = rng.uniform_int(space.num_states);
  return x;
}

Sequence forward_sample(const Sequence& x0, double t, const NoiseSchedule& schedule,
                        DiffusionKind kind, const StateSpace& space, CounterRng& rng) {
  if (!space.contains(x0)) throw DomainError("sequence does not belong to the state space");
  if (kind == DiffusionKind::absorbing && space.mask_index != space.num_states - 1)
    throw DomainError("absorbing diffusion requires the mask to be the last state");
  const KernelEntries kernel(kind, space.num_states, schedule.sigma_bar(t));
  Sequence xt(x0.size());
  std::vector<double> row(space.num_states);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    for (int v = 0; v < space.num_states; ++v) row[v] = kernel(x0[i], v);
    xt[i] = rng.categorical(row);
  }
  return xt;
}

int hamming_distance(const Sequence& a, const Sequence& b) {
  if (a.size() != b.size()) throw DomainError("hamming distance needs equal lengths");
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

}  // namespace lsd
