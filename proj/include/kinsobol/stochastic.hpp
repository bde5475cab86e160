#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "kinsobol/network.hpp"

namespace kinsobol {

/// Raised when a simulation or solve cannot proceed numerically (non-integral
/// initial copy numbers, non-finite propensities, step-size underflow).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Identifies one realization omega: reaction channel j in realization
/// `omega` draws from a stream keyed by (master_seed, omega, j).
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t omega = 0;
};

/// Piecewise-constant jump path. states[e] holds copy numbers on
/// [times[e], times[e+1]); the last state holds until t_final.
struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<std::int64_t>> states;
  /// Reaction index fired to reach states[e] (size times.size() - 1).
  std::vector<std::size_t> fired;
  double t_final = 0.0;
  double volume = 1.0;

  std::size_t num_events() const noexcept { return fired.size(); }
};

/// X(0) = round(V x0); throws NumericalError when V x0 is not integral within
/// 1e-9 * V.
std::vector<std::int64_t> initial_copy_numbers(const ReactionNetwork& net, double volume);

/// Global-time increments (tau_plus_j - tau_j) / a_j; +infinity where a_j = 0.
std::vector<double> next_firing_deltas(std::span<const double> tau, std::span<const double> tau_plus,
                                       std::span<const double> propensities);

/// Receives the jump path as it is generated; used to compute functionals
/// without storing states.
class PathObserver {
 public:
  virtual ~PathObserver() = default;
  virtual void start(std::span<const std::int64_t> state) = 0;
  /// Called after the state has jumped at time t via reaction `fired`.
  virtual void jump(double t, std::size_t fired, std::span<const std::int64_t> state) = 0;
  virtual void finish(double t_final) = 0;
};

/// Modified next reaction method on [0, horizon]. `rates` are per-reaction
/// concentration-scale constants (see map_parameters).
void nrm_run(const ReactionNetwork& net, double volume, std::span<const double> rates, double horizon,
             const SeedSpec& seed, PathObserver& observer);

Trajectory nrm_simulate(const ReactionNetwork& net, double volume, std::span<const double> rates,
                        double horizon, const SeedSpec& seed);

/// Exact functional of a stored trajectory (concentration Z = X / V).
double evaluate_qoi(const Trajectory& traj, const QoiSpec& q);

/// Streaming evaluation of the same functional.
class QoiAccumulator final : public PathObserver {
 public:
  QoiAccumulator(const QoiSpec& q, double volume);
  void start(std::span<const std::int64_t> state) override;
  void jump(double t, std::size_t fired, std::span<const std::int64_t> state) override;
  void finish(double t_final) override;
  double value() const noexcept { return value_; }

 private:
  QoiSpec q_;
  double volume_;
  double last_t_ = 0.0;
  std::int64_t current_ = 0;
  double integral_ = 0.0;
  double endpoint_ = 0.0;
  bool endpoint_frozen_ = false;
  double value_ = 0.0;
};

/// f_V(theta, omega): map_parameters, then NRM, then the QoI, streamed.
double stochastic_qoi(const Model& model, double volume, std::span<const double> theta, const SeedSpec& seed);

}  // namespace kinsobol
