#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lsd/rng.hpp"

namespace lsd {

using Token = int;
using Sequence = std::vector<Token>;
using Matrix = Eigen::MatrixXd;

enum class DiffusionKind { uniform, absorbing };

std::string_view to_string(DiffusionKind kind);
DiffusionKind parse_diffusion_kind(std::string_view name);

// Token alphabet of a diffusion process. For absorbing diffusion the mask is
// always the last state.
struct StateSpace {
  int num_states = 2;
  std::optional<int> mask_index;
  int seq_len = 1;

  // State space for `vocab` data tokens; absorbing diffusion appends a mask.
  static StateSpace for_vocab(DiffusionKind kind, int vocab, int seq_len);

  void validate() const;
  bool contains(const Sequence& x) const;
  int data_vocab() const { return mask_index ? num_states - 1 : num_states; }
};

// Scalar rate multiplier sigma(t) and its integral sigma_bar(t), both in
// closed form.
class NoiseSchedule {
 public:
  enum class Kind { linear, geometric };

  // sigma(t) = rate, sigma_bar(t) = rate * t.
  static NoiseSchedule linear(double rate, double t_max = 1.0);

  // sigma_bar(t) = lo^(1 - t/T) * hi^(t/T) - lo, so sigma_bar(0) = 0 and
  // sigma_bar(T) = hi - lo.
  static NoiseSchedule geometric(double sigma_bar_min = 1e-4, double sigma_bar_max = 20.0,
                                 double t_max = 1.0);

  double sigma(double t) const;
  double sigma_bar(double t) const;

  Kind kind() const { return kind_; }
  double t_max() const { return t_max_; }
  double rate() const { return rate_; }
  double sigma_bar_min() const { return lo_; }
  double sigma_bar_max() const { return hi_; }

  std::string describe() const;

 private:
  NoiseSchedule(Kind kind, double t_max, double rate, double lo, double hi)
      : kind_(kind), t_max_(t_max), rate_(rate), lo_(lo), hi_(hi) {}

  void check_time(double t) const;

  Kind kind_;
  double t_max_;
  double rate_;
  double lo_;
  double hi_;
};

// Base generator Q: uniform (off-diagonal 1, diagonal 1 - N) or absorbing
// (each non-mask state jumps to the last state at rate 1).
Matrix rate_matrix(DiffusionKind kind, int n);

// exp(tau * Q) evaluated entrywise in closed form. Negative tau is allowed
// here and yields the inverse kernel (used by the Tweedie update); public
// kernel constructors reject it.
class KernelEntries {
 public:
  KernelEntries(DiffusionKind kind, int n, double tau);

  double operator()(int from, int to) const {
    if (kind_ == DiffusionKind::uniform) return from == to ? diag_ : off_;
    if (from == mask_) return to == mask_ ? 1.0 : 0.0;
    if (to == from) return diag_;
    return to == mask_ ? off_ : 0.0;
  }

  int size() const { return n_; }

 private:
  DiffusionKind kind_;
  int n_;
  int mask_;
  double diag_;
  double off_;
};

struct TransitionKernel {
  Matrix matrix;
  double source_sigma_bar = 0.0;
  double target_sigma_bar = 0.0;

  double delta_sigma_bar() const { return target_sigma_bar - source_sigma_bar; }
};

TransitionKernel kernel_closed_form(DiffusionKind kind, double delta_sigma_bar, int n);

// Matrix exponential by scaling and squaring with a truncated Taylor series.
// Used as an independent check on kernel_closed_form.
TransitionKernel kernel_generic(const Matrix& q, double tau);

bool is_row_stochastic(const Matrix& p, double tol);

Sequence sample_prior(DiffusionKind kind, const StateSpace& space, CounterRng& rng);

// Draws x_t | x_0 token by token from the closed-form kernel.
Sequence forward_sample(const Sequence& x0, double t, const NoiseSchedule& schedule,
                        DiffusionKind kind, const StateSpace& space, CounterRng& rng);

int hamming_distance(const Sequence& a, const Sequence& b);

}  // namespace lsd
