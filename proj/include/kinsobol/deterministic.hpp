#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "kinsobol/network.hpp"
#include "kinsobol/stochastic.hpp"

namespace kinsobol {

enum class OdeMethod {
  /// Dormand-Prince, switching to Rosenbrock if stiffness is detected.
  Auto,
  DormandPrince,
  Rosenbrock,
};

struct SolverOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  OdeMethod method = OdeMethod::Auto;
};

/// F(z) = sum_j nu_j abar_j(z).
std::vector<double> rre_rhs(const ReactionNetwork& net, std::span<const double> z, std::span<const double> rates);

/// dF/dz, row-major N x N.
std::vector<double> rre_jacobian(const ReactionNetwork& net, std::span<const double> z,
                                 std::span<const double> rates);

/// Dense ODE solution. Between grid points it is evaluated with the
/// integrator's continuous extension (fourth order for Dormand-Prince,
/// cubic Hermite for Rosenbrock). Grid points return stored values exactly.
class OdeSolution {
 public:
  std::size_t dimension() const noexcept { return dim_; }
  const std::vector<double>& grid() const noexcept { return grid_; }
  std::span<const double> value_at_node(std::size_t i) const;
  std::span<const double> final_value() const { return value_at_node(grid_.size() - 1); }
  /// State at arbitrary t in [grid.front(), grid.back()].
  std::vector<double> operator()(double t) const;
  double component(double t, std::size_t i) const;
  const SolverOptions& options() const noexcept { return opts_; }
  /// Method that produced the solution (never Auto).
  OdeMethod method() const noexcept { return method_; }
  std::size_t steps() const noexcept { return grid_.empty() ? 0 : grid_.size() - 1; }

 private:
  friend struct OdeSolutionBuilder;
  std::size_t dim_ = 0;
  SolverOptions opts_;
  OdeMethod method_ = OdeMethod::DormandPrince;
  std::vector<double> grid_;
  std::vector<double> values_;  // (steps + 1) x dim
  std::vector<double> dense_;   // steps x 5 x dim interpolation coefficients
};

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;
using OdeJacobian = std::function<void(double t, std::span<const double> y, std::span<double> jac)>;

/// The Jacobian is optional but required by Rosenbrock, which also treats
/// the system as autonomous (df/dt = 0); carry time as a state otherwise.
struct OdeSystem {
  OdeRhs rhs;
  OdeJacobian jacobian;
};

/// Adaptive integration with per-step error control
/// |err_i| <= atol + rtol * max(|y_i|, |y_new_i|). Throws NumericalError on
/// step-size underflow or a non-finite right-hand side.
OdeSolution integrate(const OdeSystem& system, std::span<const double> y0, double t0, double t1,
                      const SolverOptions& opts, bool dense = true);

/// RRE solution Z(t) over [0, horizon], Z(0) = x0.
OdeSolution solve_rre(const ReactionNetwork& net, std::span<const double> rates, double horizon,
                      const SolverOptions& opts = {});

/// f(theta). Time averages integrate an extra quadrature state w' = z_i / T
/// alongside the RREs; endpoints use the dense interpolant. Values are
/// clipped at 0.
double deterministic_qoi(const Model& model, std::span<const double> theta, const SolverOptions& opts = {});

}  // namespace kinsobol
