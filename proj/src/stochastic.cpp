#include "kinsobol/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kinsobol/random.hpp"

namespace kinsobol {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Reaction compiled for the inner loop. Propensities are evaluated with the
/// same operation order as propensity_v so both paths agree bit-for-bit.
struct Channel {
  enum class Kind { Zero, First, Second, Dimer } kind = Kind::Zero;
  std::size_t m = 0;
  std::size_t n = 0;
  double k = 0.0;
  double volume_factor = 1.0;  // V^(1 - order)
  std::vector<std::pair<std::size_t, int>> delta;

  double propensity(const std::int64_t* x) const noexcept {
    switch (kind) {
      case Kind::Zero:
        return k * volume_factor;
      case Kind::First:
        return x[m] < 1 ? 0.0 : k * static_cast<double>(x[m]) * volume_factor;
      case Kind::Second:
        if (x[m] < 1 || x[n] < 1) return 0.0;
        return k * static_cast<double>(x[m]) * static_cast<double>(x[n]) * volume_factor;
      case Kind::Dimer:
        if (x[m] < 2) return 0.0;
        return k * (static_cast<double>(x[m]) * (static_cast<double>(x[m] - 1) / 2.0)) * volume_factor;
    }
    return 0.0;
  }
};

std::vector<Channel> compile(const ReactionNetwork& net, double volume, std::span<const double> rates) {
  std::vector<Channel> out;
  out.reserve(net.num_reactions());
  for (std::size_t j = 0; j < net.num_reactions(); ++j) {
    const Reaction& r = net.reactions[j];
    Channel ch;
    ch.k = rates[j];
    const int order = r.order();
    ch.volume_factor = std::pow(volume, 1 - order);
    std::vector<std::size_t> reactants;
    for (std::size_t i = 0; i < r.consumed.size(); ++i) {
      for (int c = 0; c < r.consumed[i]; ++c) reactants.push_back(i);
      if (r.net_change(i) != 0) ch.delta.emplace_back(i, r.net_change(i));
    }
    if (order == 0) {
      ch.kind = Channel::Kind::Zero;
    } else if (order == 1) {
      ch.kind = Channel::Kind::First;
      ch.m = reactants[0];
    } else if (reactants[0] == reactants[1]) {
      ch.kind = Channel::Kind::Dimer;
      ch.m = reactants[0];
    } else {
      ch.kind = Channel::Kind::Second;
      ch.m = reactants[0];
      ch.n = reactants[1];
    }
    out.push_back(std::move(ch));
  }
  return out;
}

class TrajectoryRecorder final : public PathObserver {
 public:
  explicit TrajectoryRecorder(Trajectory& traj) : traj_(traj) {}
  void start(std::span<const std::int64_t> state) override {
    traj_.times.push_back(0.0);
    traj_.states.emplace_back(state.begin(), state.end());
  }
  void jump(double t, std::size_t fired, std::span<const std::int64_t> state) override {
    traj_.times.push_back(t);
    traj_.states.emplace_back(state.begin(), state.end());
    traj_.fired.push_back(fired);
  }
  void finish(double t_final) override { traj_.t_final = t_final; }

 private:
  Trajectory& traj_;
};

}  // namespace

std::vector<std::int64_t> initial_copy_numbers(const ReactionNetwork& net, double volume) {
  if (!(volume > 0.0) || !std::isfinite(volume)) throw NumericalError("system size must be positive");
  std::vector<std::int64_t> x(net.num_species());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = volume * net.x0[i];
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9 * volume || r > 9.0e18) {
      throw NumericalError("V * x0 for species '" + net.species[i] + "' is " + std::to_string(v) +
                           ", not an integer copy number");
    }
    x[i] = static_cast<std::int64_t>(r);
  }
  return x;
}

std::vector<double> next_firing_deltas(std::span<const double> tau, std::span<const double> tau_plus,
                                       std::span<const double> propensities) {
  std::vector<double> dt(propensities.size());
  for (std::size_t j = 0; j < dt.size(); ++j) {
    dt[j] = propensities[j] > 0.0 ? (tau_plus[j] - tau[j]) / propensities[j] : kInf;
  }
  return dt;
}

void nrm_run(const ReactionNetwork& net, double volume, std::span<const double> rates, double horizon,
             const SeedSpec& seed, PathObserver& observer) {
  const std::size_t m = net.num_reactions();
  if (rates.size() != m) throw std::invalid_argument("rate vector length does not match reaction count");
  for (double k : rates) {
    if (!(k > 0.0) || !std::isfinite(k)) throw NumericalError("rate constants must be finite and positive");
  }
  std::vector<std::int64_t> x = initial_copy_numbers(net, volume);
  const auto channels = compile(net, volume, rates);

  std::vector<CounterStream> streams;
  streams.reserve(m);
  for (std::size_t j = 0; j < m; ++j) streams.emplace_back(channel_key(seed.master_seed, seed.omega, j));

  std::vector<double> tau(m, 0.0);
  std::vector<double> tau_plus(m);
  std::vector<double> a(m);
  for (std::size_t j = 0; j < m; ++j) tau_plus[j] = streams[j].exponential();

  observer.start(x);
  double t = 0.0;
  while (t < horizon) {
    std::size_t next = m;
    double best = kInf;
    for (std::size_t j = 0; j < m; ++j) {
      a[j] = channels[j].propensity(x.data());
      if (!std::isfinite(a[j])) {
        throw NumericalError("non-finite propensity for reaction '" + net.reactions[j].rate_name +
                             "' at t = " + std::to_string(t));
      }
      if (a[j] > 0.0) {
        const double dt = (tau_plus[j] - tau[j]) / a[j];
        if (dt < best) {  // strict: lowest index wins ties
          best = dt;
          next = j;
        }
      }
    }
    if (next == m || t + best > horizon) break;

    t += best;
    for (std::size_t j = 0; j < m; ++j) {
      tau[j] = std::min(tau[j] + a[j] * best, tau_plus[j]);
    }
    tau[next] = tau_plus[next];
    for (const auto& [i, d] : channels[next].delta) x[i] += d;
    tau_plus[next] += streams[next].exponential();
    observer.jump(t, next, x);
  }
  observer.finish(horizon);
}

Trajectory nrm_simulate(const ReactionNetwork& net, double volume, std::span<const double> rates, double horizon,
                        const SeedSpec& seed) {
  Trajectory traj;
  traj.volume = volume;
  TrajectoryRecorder recorder(traj);
  nrm_run(net, volume, rates, horizon, seed, recorder);
  return traj;
}

QoiAccumulator::QoiAccumulator(const QoiSpec& q, double volume) : q_(q), volume_(volume) {}

void QoiAccumulator::start(std::span<const std::int64_t> state) {
  if (q_.species >= state.size()) throw std::out_of_range("qoi species index out of range");
  current_ = state[q_.species];
  last_t_ = 0.0;
  integral_ = 0.0;
  endpoint_ = static_cast<double>(current_);
  endpoint_frozen_ = false;
}

void QoiAccumulator::jump(double t, std::size_t, std::span<const std::int64_t> state) {
  const double upper = std::min(t, q_.horizon);
  if (upper > last_t_) integral_ += static_cast<double>(current_) * (upper - last_t_);
  last_t_ = std::max(last_t_, upper);
  current_ = state[q_.species];
  if (!endpoint_frozen_) {
    if (t <= q_.t_star) {
      endpoint_ = static_cast<double>(current_);
    } else {
      endpoint_frozen_ = true;
    }
  }
}

void QoiAccumulator::finish(double) {
  if (q_.horizon > last_t_) integral_ += static_cast<double>(current_) * (q_.horizon - last_t_);
  last_t_ = q_.horizon;
  value_ = q_.kind == QoiKind::TimeAverage ? integral_ / volume_ / q_.horizon : endpoint_ / volume_;
}

double evaluate_qoi(const Trajectory& traj, const QoiSpec& q) {
  if (traj.states.empty()) throw std::invalid_argument("empty trajectory");
  if (q.species >= traj.states.front().size()) throw std::out_of_range("qoi species index out of range");
  if (q.kind == QoiKind::TimeAverage && traj.t_final < q.horizon) {
    throw std::invalid_argument("trajectory does not cover the qoi horizon");
  }
  QoiAccumulator acc(q, traj.volume);
  acc.start(traj.states.front());
  for (std::size_t e = 1; e < traj.times.size(); ++e) acc.jump(traj.times[e], traj.fired[e - 1], traj.states[e]);
  acc.finish(traj.t_final);
  return acc.value();
}

double stochastic_qoi(const Model& model, double volume, std::span<const double> theta, const SeedSpec& seed) {
  const auto rates = map_parameters(model.network, model.parameters, theta);
  const double horizon = model.qoi.kind == QoiKind::Endpoint ? model.qoi.t_star : model.qoi.horizon;
  QoiAccumulator acc(model.qoi, volume);
  nrm_run(model.network, volume, rates, horizon, seed, acc);
  return acc.value();
}

}  // namespace kinsobol
