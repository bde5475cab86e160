#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "kinsobol/deterministic.hpp"
#include "test_models.hpp"

using namespace kinsobol;
using testing_models::decay;
using testing_models::model_path;

namespace {

// Nominal MM time average of P over [0, 50]. Computed at rtol 1e-12 with both
// built-in methods and with the fixed-step RK4 below; all three agree to
// ~1e-13 relative.
constexpr double kMmReference = 2.82908851057232e-07;

/// Classical RK4 at fixed step on the MM RREs plus the running average.
double rk4_mm_time_average(double k1, double k2, double k3, std::array<double, 4> z, double horizon, double h) {
  auto f = [&](const std::array<double, 5>& y) {
    const double a1 = k1 * y[0] * y[1], a2 = k2 * y[2], a3 = k3 * y[2];
    return std::array<double, 5>{-a1 + a2, -a1 + a2 + a3, a1 - a2 - a3, a3, y[3] / horizon};
  };
  std::array<double, 5> y{z[0], z[1], z[2], z[3], 0.0};
  const auto steps = static_cast<long>(std::llround(horizon / h));
  for (long s = 0; s < steps; ++s) {
    std::array<double, 5> tmp{};
    const auto q1 = f(y);
    for (int i = 0; i < 5; ++i) tmp[i] = y[i] + 0.5 * h * q1[i];
    const auto q2 = f(tmp);
    for (int i = 0; i < 5; ++i) tmp[i] = y[i] + 0.5 * h * q2[i];
    const auto q3 = f(tmp);
    for (int i = 0; i < 5; ++i) tmp[i] = y[i] + h * q3[i];
    const auto q4 = f(tmp);
    for (int i = 0; i < 5; ++i) y[i] += h / 6.0 * (q1[i] + 2.0 * q2[i] + 2.0 * q3[i] + q4[i]);
  }
  return y[4];
}

const OdeMethod kBothMethods[] = {OdeMethod::DormandPrince, OdeMethod::Rosenbrock};

}  // namespace

TEST_CASE("rre right-hand side") {
  const auto d = decay(1, 0.7, 1);
  const std::vector<double> z{3.0};
  const std::vector<double> k{0.7};
  CHECK(rre_rhs(d.network, z, k)[0] == doctest::Approx(-2.1));

  const auto m = load_model(model_path("michaelis_menten.model"));
  const std::vector<double> zz{2.0, 3.0, 5.0, 7.0};
  const std::vector<double> kk{11.0, 13.0, 17.0};
  const auto f = rre_rhs(m.network, zz, kk);
  const double se = 6.0, c = 5.0;
  CHECK(f[0] == doctest::Approx(-11.0 * se + 13.0 * c));
  CHECK(f[1] == doctest::Approx(-11.0 * se + 30.0 * c));
  CHECK(f[2] == doctest::Approx(11.0 * se - 30.0 * c));
  CHECK(f[3] == doctest::Approx(17.0 * c));
  // conserved combinations annihilate F
  CHECK(f[0] + f[2] + f[3] == doctest::Approx(0.0));
  CHECK(f[1] + f[2] == doctest::Approx(0.0));
}

TEST_CASE("jacobian matches central differences") {
  const auto m = load_model(model_path("genetic_oscillator.model"));
  const auto k = m.network.nominal_rates();
  const std::vector<double> z{0.3, 0.7, 0.4, 0.6, 2.0, 1.5, 3.0, 4.0, 0.5};
  const auto jac = rre_jacobian(m.network, z, k);
  const std::size_t n = z.size();
  for (std::size_t c = 0; c < n; ++c) {
    auto zp = z, zm = z;
    const double h = 1e-6;
    zp[c] += h;
    zm[c] -= h;
    const auto fp = rre_rhs(m.network, zp, k);
    const auto fm = rre_rhs(m.network, zm, k);
    for (std::size_t r = 0; r < n; ++r) {
      CHECK(jac[r * n + c] == doctest::Approx((fp[r] - fm[r]) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("exponential decay to t = 1") {
  const auto d = decay(1, 1, 1);
  for (auto method : kBothMethods) {
    const SolverOptions opts{1e-8, 1e-10, method};
    const auto sol = solve_rre(d.network, d.network.nominal_rates(), 1.0, opts);
    CHECK(sol.method() == method);
    CHECK(std::abs(sol.final_value()[0] - std::exp(-1.0)) < 10 * opts.rtol);
    CHECK(sol.value_at_node(0)[0] == 1.0);
    // dense output between nodes
    for (double t = 0.013; t < 1.0; t += 0.0731) {
      CHECK(std::abs(sol.component(t, 0) - std::exp(-t)) < 100 * opts.rtol);
    }
    // nodes are reproduced exactly
    for (std::size_t i = 0; i < sol.grid().size(); ++i) {
      CHECK(sol(sol.grid()[i])[0] == sol.value_at_node(i)[0]);
    }
  }
}

TEST_CASE("zero-order source grows linearly") {
  const auto m = parse_model("species: A\nx0: 2\nvnom: 1\ntfinal: 3\nreaction k: 0 -> A\nrate k = 0.5\nqoi: timeavg A\n");
  for (auto method : kBothMethods) {
    const auto sol = solve_rre(m.network, m.network.nominal_rates(), 3.0, SolverOptions{1e-8, 1e-10, method});
    CHECK(sol.final_value()[0] == doctest::Approx(3.5).epsilon(1e-12));
  }
}

TEST_CASE("michaelis-menten conserved quantities stay within 100 atol") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  const auto& x0 = m.network.x0;
  for (auto method : {OdeMethod::Auto, OdeMethod::DormandPrince, OdeMethod::Rosenbrock}) {
    const SolverOptions opts{1e-8, 1e-10, method};
    const auto sol = solve_rre(m.network, m.network.nominal_rates(), 50.0, opts);
    double worst = 0.0;
    for (double t = 0.0; t <= 50.0; t += 0.01) {
      const auto z = sol(t);
      worst = std::max(worst, std::abs(z[0] + z[2] + z[3] - (x0[0] + x0[2] + x0[3])));
      worst = std::max(worst, std::abs(z[1] + z[2] - (x0[1] + x0[2])));
    }
    CHECK(worst <= 100 * opts.atol);
  }
}

TEST_CASE("time-average quadrature state") {
  const auto d = decay(1, 1, 1);
  const std::vector<double> none;
  for (auto method : kBothMethods) {
    const SolverOptions opts{1e-8, 1e-10, method};
    CHECK(std::abs(deterministic_qoi(d, none, opts) - (1.0 - std::exp(-1.0))) < 10 * opts.rtol);
  }
  const auto m = parse_model(
      "species: A B\nx0: 1 0.25\nvnom: 1\ntfinal: 4\nreaction k: A -> 0\nrate k = 2 pm 10%\nqoi: timeavg B\n");
  const std::vector<double> theta{0.5};
  CHECK(deterministic_qoi(m, theta) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("endpoint qoi uses the dense interpolant") {
  auto d = decay(1, 1, 2);
  d.qoi = QoiSpec{QoiKind::Endpoint, 0, 0.77, 2.0};
  const std::vector<double> none;
  CHECK(deterministic_qoi(d, none) == doctest::Approx(std::exp(-0.77)).epsilon(1e-7));
  d.qoi.t_star = 0.0;
  CHECK(deterministic_qoi(d, none) == 1.0);
}

TEST_CASE("michaelis-menten regression fixture and independent RK4") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  const std::vector<double> theta(3, 0.0);
  const auto& x0 = m.network.x0;
  const double rk4 = rk4_mm_time_average(1e6, 1e-4, 0.1, {x0[0], x0[1], x0[2], x0[3]}, 50.0, 1e-4);
  CHECK(rk4 == doctest::Approx(kMmReference).epsilon(1e-11));
  for (auto method : kBothMethods) {
    const double q = deterministic_qoi(m, theta, SolverOptions{1e-12, 1e-22, method});
    CHECK(q == doctest::Approx(kMmReference).epsilon(1e-11));
  }
}

TEST_CASE("error shrinks monotonically as tolerances are halved") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  const std::vector<double> theta(3, 0.0);
  for (auto method : kBothMethods) {
    double rtol = 1e-4, atol = 1e-12;
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10; ++i) {
      const double err = std::abs(deterministic_qoi(m, theta, SolverOptions{rtol, atol, method}) - kMmReference);
      CHECK(err < prev);
      prev = err;
      rtol /= 2;
      atol /= 2;
    }
  }
}

TEST_CASE("stiff problem: rosenbrock is accurate where dormand-prince crawls") {
  // y' = -1e4 (y - cos s), s' = 1: slow manifold y ~ cos t behind a fast transient
  OdeSystem sys{[](double, std::span<const double> y, std::span<double> dy) {
                  dy[0] = -1e4 * (y[0] - std::cos(y[1]));
                  dy[1] = 1.0;
                },
                [](double, std::span<const double> y, std::span<double> j) {
                  j[0] = -1e4;
                  j[1] = -1e4 * std::sin(y[1]);
                  j[2] = 0.0;
                  j[3] = 0.0;
                }};
  const std::vector<double> y0{0.0, 0.0};
  const auto ref = integrate(sys, y0, 0.0, 10.0, SolverOptions{1e-12, 1e-14, OdeMethod::DormandPrince});
  const auto explicit_sol = integrate(sys, y0, 0.0, 10.0, SolverOptions{1e-6, 1e-9, OdeMethod::DormandPrince});
  const auto auto_sol = integrate(sys, y0, 0.0, 10.0, SolverOptions{1e-6, 1e-9, OdeMethod::Auto});
  CHECK(auto_sol.method() == OdeMethod::Rosenbrock);
  CHECK(auto_sol.steps() * 5 < explicit_sol.steps());
  CHECK(auto_sol.final_value()[0] == doctest::Approx(ref.final_value()[0]).epsilon(1e-5));
  CHECK(explicit_sol.final_value()[0] == doctest::Approx(ref.final_value()[0]).epsilon(1e-5));
}

TEST_CASE("autonomous stiff system: rosenbrock matches the analytic solution") {
  // y1' = -y1 + y2,  y2' = -1e6 y2  -> y2 = e^{-1e6 t}, y1 = e^{-t} + (e^{-t} - e^{-1e6 t}) / (1e6 - 1)
  OdeSystem sys{[](double, std::span<const double> y, std::span<double> dy) {
                  dy[0] = -y[0] + y[1];
                  dy[1] = -1e6 * y[1];
                },
                [](double, std::span<const double>, std::span<double> j) {
                  j[0] = -1.0;
                  j[1] = 1.0;
                  j[2] = 0.0;
                  j[3] = -1e6;
                }};
  const std::vector<double> y0{1.0, 1.0};
  auto exact = [](double t) { return std::exp(-t) + (std::exp(-t) - std::exp(-1e6 * t)) / (1e6 - 1.0); };
  const auto sol = integrate(sys, y0, 0.0, 3.0, SolverOptions{1e-8, 1e-12, OdeMethod::Rosenbrock});
  CHECK(sol.final_value()[0] == doctest::Approx(exact(3.0)).epsilon(1e-7));
  CHECK(sol.steps() < 1000);  // explicit stability alone would need ~1e6
  for (double t = 0.05; t < 3.0; t += 0.173) CHECK(sol.component(t, 0) == doctest::Approx(exact(t)).epsilon(1e-6));
}

TEST_CASE("both methods agree on the oscillator") {
  const auto m = load_model(model_path("genetic_oscillator.model"));
  const std::vector<double> theta(16, 0.0);
  const double a = deterministic_qoi(m, theta, SolverOptions{1e-9, 1e-11, OdeMethod::DormandPrince});
  const double b = deterministic_qoi(m, theta, SolverOptions{1e-9, 1e-11, OdeMethod::Rosenbrock});
  CHECK(a == doctest::Approx(b).epsilon(1e-7));
  CHECK(a > 0.0);
}

TEST_CASE("finite-time blow-up is reported as a numerical failure") {
  const auto m = parse_model("species: A\nx0: 1\nvnom: 1\ntfinal: 2\nreaction k: 2 A -> 3 A\nrate k = 2\nqoi: timeavg A\n");
  for (auto method : kBothMethods) {
    CHECK_THROWS_AS(solve_rre(m.network, m.network.nominal_rates(), 2.0, SolverOptions{1e-8, 1e-10, method}),
                    NumericalError);
  }
  const auto d = decay(1, 1, 1);
  CHECK_THROWS_AS(solve_rre(d.network, d.network.nominal_rates(), 1.0, SolverOptions{0.0, 1e-10}),
                  std::invalid_argument);
}
