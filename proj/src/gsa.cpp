#include "kinsobol/gsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kinsobol/parallel.hpp"
#include "kinsobol/random.hpp"
#include "kinsobol/stochastic.hpp"

namespace kinsobol {

void SaltelliDesign::point(std::size_t k, std::span<double> theta) const {
  if (theta.size() != p) throw std::invalid_argument("theta buffer has wrong length");
  const std::size_t block = k / ns;
  const std::size_t row = k % ns;
  if (block >= p + 2) throw std::out_of_range("design point index out of range");
  for (std::size_t c = 0; c < p; ++c) {
    if (block == 0) {
      theta[c] = a_at(row, c);
    } else if (block == 1) {
      theta[c] = b_at(row, c);
    } else {
      theta[c] = ab_at(block - 2, row, c);
    }
  }
}

std::vector<double> SaltelliDesign::point(std::size_t k) const {
  std::vector<double> theta(p);
  point(k, theta);
  return theta;
}

SaltelliDesign saltelli_design(std::size_t p, std::size_t ns, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("design needs at least one parameter");
  if (ns < 2) throw std::invalid_argument("design needs N_s >= 2");
  SaltelliDesign d;
  d.p = p;
  d.ns = ns;
  d.seed = seed;
  CounterStream stream(mix64(seed));
  d.a.resize(ns * p);
  d.b.resize(ns * p);
  for (auto& v : d.a) v = 2.0 * stream.uniform_open() - 1.0;
  for (auto& v : d.b) v = 2.0 * stream.uniform_open() - 1.0;
  return d;
}

std::optional<SobolEstimate> estimate_indices(std::span<const double> fA, std::span<const double> fB,
                                              std::span<const std::vector<double>> fAB) {
  const std::size_t n = fA.size();
  if (n < 2 || fB.size() != n) throw std::invalid_argument("fA and fB must have equal length >= 2");
  for (const auto& col : fAB) {
    if (col.size() != n) throw std::invalid_argument("fAB columns must match fA length");
  }
  const auto [lo_a, hi_a] = std::minmax_element(fA.begin(), fA.end());
  const auto [lo_b, hi_b] = std::minmax_element(fB.begin(), fB.end());
  if (*lo_a == *hi_a && *lo_b == *hi_b && *lo_a == *lo_b) return std::nullopt;

  double mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) mean += fA[r];
  for (std::size_t r = 0; r < n; ++r) mean += fB[r];
  mean /= static_cast<double>(2 * n);
  double var = 0.0;
  for (std::size_t r = 0; r < n; ++r) var += (fA[r] - mean) * (fA[r] - mean);
  for (std::size_t r = 0; r < n; ++r) var += (fB[r] - mean) * (fB[r] - mean);
  var /= static_cast<double>(2 * n - 1);
  if (!(var > 0.0) || !std::isfinite(var)) return std::nullopt;

  SobolEstimate est;
  est.mean = mean;
  est.variance = var;
  est.ns = n;
  for (const auto& col : fAB) {
    double first = 0.0;
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      // centred f_B leaves the estimator's expectation unchanged and removes
      // the mean^2 term from its variance
      first += (fB[r] - mean) * (col[r] - fA[r]);
      const double d = fA[r] - col[r];
      total += d * d;
    }
    const double s = first / static_cast<double>(n) / var;
    const double t = total / static_cast<double>(2 * n) / var;
    est.raw_first_order.push_back(s);
    est.raw_total.push_back(t);
    est.first_order.push_back(std::clamp(s, 0.0, kIndexClampMax));
    est.total.push_back(std::clamp(t, 0.0, kIndexClampMax));
  }
  return est;
}

std::optional<SobolEstimate> estimate_indices(const SaltelliDesign& design, std::span<const double> samples) {
  if (samples.size() != design.num_points()) throw std::invalid_argument("sample count does not match design");
  const std::size_t n = design.ns;
  std::vector<std::vector<double>> fab(design.p);
  for (std::size_t i = 0; i < design.p; ++i) {
    auto first = samples.begin() + static_cast<std::ptrdiff_t>((i + 2) * n);
    fab[i].assign(first, first + static_cast<std::ptrdiff_t>(n));
  }
  return estimate_indices(samples.subspan(0, n), samples.subspan(n, n), fab);
}

std::vector<double> evaluate_design(const SaltelliDesign& design,
                                    const std::function<double(std::span<const double>)>& f, unsigned workers) {
  std::vector<double> out(design.num_points());
  parallel_for(out.size(), workers, [&](std::size_t k) {
    std::vector<double> theta(design.p);
    design.point(k, theta);
    out[k] = f(theta);
  });
  return out;
}

DeterministicSobol deterministic_sobol(const Model& model, std::size_t ns, std::uint64_t design_seed,
                                       const SolverOptions& tol, unsigned workers) {
  DeterministicSobol result;
  result.design = saltelli_design(model.parameters.size(), ns, design_seed);
  result.samples = evaluate_design(
      result.design, [&](std::span<const double> theta) { return deterministic_qoi(model, theta, tol); }, workers);
  result.estimate = estimate_indices(result.design, result.samples);
  return result;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("percentile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void summarize(IndexEnsemble& ensemble, std::size_t p) {
  ensemble.degenerate_count = 0;
  for (const auto& e : ensemble.per_omega) {
    if (!e) ++ensemble.degenerate_count;
  }
  ensemble.summary.assign(p, {});
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<double> totals;
    double sum_first = 0.0;
    for (const auto& e : ensemble.per_omega) {
      if (!e) continue;
      totals.push_back(e->total[i]);
      sum_first += e->first_order[i];
    }
    auto& s = ensemble.summary[i];
    if (totals.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      s = {nan, nan, nan, nan, nan};
      continue;
    }
    const double count = static_cast<double>(totals.size());
    double sum = 0.0;
    for (double t : totals) sum += t;
    s.mean_total = sum / count;
    double ss = 0.0;
    for (double t : totals) ss += (t - s.mean_total) * (t - s.mean_total);
    s.sd_total = totals.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    s.mean_first = sum_first / count;
    s.p5_total = percentile(totals, 0.05);
    s.p95_total = percentile(totals, 0.95);
  }
}

IndexEnsemble stochastic_sobol(const SaltelliDesign& design, std::size_t ms, const FrozenQoi& f, unsigned workers,
                               std::vector<std::vector<double>>* samples_out) {
  if (ms < 1) throw std::invalid_argument("M_s must be at least 1");
  const std::size_t points = design.num_points();
  std::vector<std::vector<double>> samples(ms, std::vector<double>(points));
  parallel_for(ms * points, workers, [&](std::size_t item) {
    const std::size_t omega = item / points;
    const std::size_t k = item % points;
    std::vector<double> theta(design.p);
    design.point(k, theta);
    samples[omega][k] = f(theta, omega);
  });
  IndexEnsemble ens;
  ens.omega_count = ms;
  ens.per_omega.reserve(ms);
  for (const auto& s : samples) ens.per_omega.push_back(estimate_indices(design, s));
  summarize(ens, design.p);
  if (samples_out) *samples_out = std::move(samples);
  return ens;
}

IndexEnsemble stochastic_sobol(const Model& model, double multiplier, std::size_t ns, std::size_t ms,
                               std::uint64_t design_seed, std::uint64_t master_seed, unsigned workers,
                               std::vector<std::vector<double>>* samples_out) {
  if (!(multiplier > 0.0)) throw std::invalid_argument("system-size multiplier must be positive");
  const auto design = saltelli_design(model.parameters.size(), ns, design_seed);
  const double volume = multiplier * model.network.v_nominal;
  auto ens = stochastic_sobol(
      design, ms,
      [&](std::span<const double> theta, std::uint64_t omega) {
        return stochastic_qoi(model, volume, theta, SeedSpec{master_seed, omega});
      },
      workers, samples_out);
  ens.volume = volume;
  ens.multiplier = multiplier;
  return ens;
}

std::vector<IndexEnsemble> convergence_study(const Model& model, std::span<const double> m_list, std::size_t ns,
                                             std::size_t ms, std::uint64_t design_seed, std::uint64_t master_seed,
                                             unsigned workers) {
  if (m_list.empty()) throw std::invalid_argument("m list must not be empty");
  for (std::size_t i = 0; i < m_list.size(); ++i) {
    if (!(m_list[i] > 0.0)) throw std::invalid_argument("m values must be positive");
    if (i > 0 && !(m_list[i] > m_list[i - 1])) throw std::invalid_argument("m list must be strictly increasing");
  }
  std::vector<IndexEnsemble> out;
  out.reserve(m_list.size());
  for (double m : m_list) out.push_back(stochastic_sobol(model, m, ns, ms, design_seed, master_seed, workers));
  return out;
}

}  // namespace kinsobol
