#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kinsobol/deterministic.hpp"
#include "kinsobol/network.hpp"

namespace kinsobol {

/// Saltelli sampling plan on [-1, 1]^p. Evaluation points are ordered
/// A rows, B rows, then AB_1 rows ... AB_p rows (AB_i is A with column i
/// taken from B), for N_s (p + 2) points in total.
struct SaltelliDesign {
  std::size_t p = 0;
  std::size_t ns = 0;
  std::uint64_t seed = 0;
  std::vector<double> a;  // ns x p, row-major
  std::vector<double> b;

  std::size_t num_points() const noexcept { return ns * (p + 2); }
  double a_at(std::size_t row, std::size_t col) const { return a[row * p + col]; }
  double b_at(std::size_t row, std::size_t col) const { return b[row * p + col]; }
  double ab_at(std::size_t i, std::size_t row, std::size_t col) const {
    return col == i ? b_at(row, col) : a_at(row, col);
  }
  /// Writes evaluation point k into `theta` (length p).
  void point(std::size_t k, std::span<double> theta) const;
  std::vector<double> point(std::size_t k) const;
};

/// A and B are filled row-major from one CounterStream keyed by `seed`
/// (A first), theta = 2u - 1 with u uniform on (0, 1).
SaltelliDesign saltelli_design(std::size_t p, std::size_t ns, std::uint64_t seed);

/// First-order and total Sobol' indices. Clamped views lie in [0, 1.5]; raw
/// estimator output is kept alongside.
struct SobolEstimate {
  std::vector<double> first_order;
  std::vector<double> total;
  std::vector<double> raw_first_order;
  std::vector<double> raw_total;
  double mean = 0.0;
  double variance = 0.0;
  std::size_t ns = 0;
};

inline constexpr double kIndexClampMax = 1.5;

/// Saltelli (2010) first-order and Jansen total estimators. Returns nullopt
/// (degenerate QoI) when fA and fB are all identical.
std::optional<SobolEstimate> estimate_indices(std::span<const double> fA, std::span<const double> fB,
                                              std::span<const std::vector<double>> fAB);

/// Same, reading samples laid out in design order.
std::optional<SobolEstimate> estimate_indices(const SaltelliDesign& design, std::span<const double> samples);

/// Evaluates f over every design point with `workers` threads.
std::vector<double> evaluate_design(const SaltelliDesign& design,
                                    const std::function<double(std::span<const double>)>& f, unsigned workers);

struct DeterministicSobol {
  SaltelliDesign design;
  std::vector<double> samples;
  std::optional<SobolEstimate> estimate;
};

DeterministicSobol deterministic_sobol(const Model& model, std::size_t ns, std::uint64_t design_seed,
                                       const SolverOptions& tol = {}, unsigned workers = 1);

/// Type-7 percentile (linear interpolation of order statistics), q in [0, 1].
double percentile(std::vector<double> values, double q);

struct ParameterSummary {
  double mean_total = 0.0;
  double p5_total = 0.0;
  double p95_total = 0.0;
  double sd_total = 0.0;
  double mean_first = 0.0;
};

/// Stochastic indices T_i^V(omega) for omega = 0 .. M_s - 1 at one system
/// size, with ensemble summaries over the non-degenerate realizations.
struct IndexEnsemble {
  double volume = 0.0;
  double multiplier = 1.0;
  std::size_t omega_count = 0;
  std::vector<std::optional<SobolEstimate>> per_omega;
  std::size_t degenerate_count = 0;
  std::vector<ParameterSummary> summary;
};

/// Fills degenerate_count and summary from per_omega.
void summarize(IndexEnsemble& ensemble, std::size_t p);

/// Frozen-omega QoI: f(theta, omega).
using FrozenQoi = std::function<double(std::span<const double> theta, std::uint64_t omega)>;

/// Evaluates every design point once per omega (same design for all omega)
/// and estimates indices per omega. `samples_out`, when given, receives the
/// M_s x N_s(p+2) sample table.
IndexEnsemble stochastic_sobol(const SaltelliDesign& design, std::size_t ms, const FrozenQoi& f, unsigned workers,
                               std::vector<std::vector<double>>* samples_out = nullptr);

IndexEnsemble stochastic_sobol(const Model& model, double multiplier, std::size_t ns, std::size_t ms,
                               std::uint64_t design_seed, std::uint64_t master_seed, unsigned workers = 1,
                               std::vector<std::vector<double>>* samples_out = nullptr);

/// One ensemble per V_m = m V_nom; every m shares the design and seeds.
/// Throws std::invalid_argument unless m_list is nonempty, positive and
/// strictly increasing.
std::vector<IndexEnsemble> convergence_study(const Model& model, std::span<const double> m_list, std::size_t ns,
                                             std::size_t ms, std::uint64_t design_seed, std::uint64_t master_seed,
                                             unsigned workers = 1);

}  // namespace kinsobol
