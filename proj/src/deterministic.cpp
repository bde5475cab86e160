#include "kinsobol/deterministic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>


namespace kinsobol {

namespace {

// Dormand & Prince (1980) tableau with Hairer's dense-output coefficients.
namespace dp {
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp

// Stiffly accurate L-stable Rosenbrock scheme of Hairer & Wanner (RODAS4),
// order 4 with an embedded order-3 error estimate and a continuous extension.
namespace ros {
constexpr double gam = 0.25;
constexpr double a21 = 1.544;
constexpr double a31 = 0.9466785280815826, a32 = 0.2557011698983284;
constexpr double a41 = 3.314825187068521, a42 = 2.896124015972201, a43 = 0.9986419139977817;
constexpr double a51 = 1.221224509226641, a52 = 6.019134481288629, a53 = 12.53708332932087,
                 a54 = -0.6878860361058950;
constexpr double c21 = -5.6688;
constexpr double c31 = -2.430093356833875, c32 = -0.2063599157091915;
constexpr double c41 = -0.1073529058151375, c42 = -9.594562251023355, c43 = -20.47028614809616;
constexpr double c51 = 7.496443313967647, c52 = -10.24680431464352, c53 = -33.99990352819905,
                 c54 = 11.70890893206160;
constexpr double c61 = 8.083246795921522, c62 = -7.981132988064893, c63 = -31.52159432874371,
                 c64 = 16.31930543123136, c65 = -6.058818238834054;
constexpr double d21 = 10.12623508344586, d22 = -7.487995877610167, d23 = -34.80091861555747,
                 d24 = -7.992771707568823, d25 = 1.025137723295662;
constexpr double d31 = -0.6762803392801253, d32 = 6.087714651680015, d33 = 16.43084320892478,
                 d34 = 24.76722511418386, d35 = -6.594389125716872;
}  // namespace ros

constexpr std::size_t kMaxSteps = 10'000'000;

/// Raised inside Dormand-Prince when Hairer's stiffness test fires.
struct StiffnessDetected {};

/// Mass-action RHS with reactions flattened for the inner loop.
struct CompiledRre {
  struct Term {
    double k;
    std::uint32_t m, n;
    int order;  // 0, 1, 2 (distinct), 3 (dimer)
    std::uint32_t first, last;  // range in delta_species / delta_value
  };
  std::size_t dim = 0;
  std::vector<Term> terms;
  std::vector<std::uint32_t> delta_species;
  std::vector<double> delta_value;

  CompiledRre(const ReactionNetwork& net, std::span<const double> rates) : dim(net.num_species()) {
    if (rates.size() != net.num_reactions()) throw std::invalid_argument("rate vector length does not match");
    for (std::size_t j = 0; j < net.num_reactions(); ++j) {
      const auto& r = net.reactions[j];
      Term t{rates[j], 0, 0, 0, static_cast<std::uint32_t>(delta_species.size()), 0};
      std::vector<std::uint32_t> reactants;
      for (std::size_t i = 0; i < r.consumed.size(); ++i) {
        for (int c = 0; c < r.consumed[i]; ++c) reactants.push_back(static_cast<std::uint32_t>(i));
        if (r.net_change(i) != 0) {
          delta_species.push_back(static_cast<std::uint32_t>(i));
          delta_value.push_back(static_cast<double>(r.net_change(i)));
        }
      }
      t.last = static_cast<std::uint32_t>(delta_species.size());
      if (reactants.size() == 1) {
        t.order = 1;
        t.m = reactants[0];
      } else if (reactants.size() == 2) {
        t.m = reactants[0];
        t.n = reactants[1];
        t.order = t.m == t.n ? 3 : 2;
      }
      terms.push_back(t);
    }
  }

  void rhs(const double* z, double* out) const {
    std::fill_n(out, dim, 0.0);
    for (const auto& t : terms) {
      double a = t.k;
      switch (t.order) {
        case 1: a *= z[t.m]; break;
        case 2: a *= z[t.m]; a *= z[t.n]; break;
        case 3: a *= z[t.m]; a *= z[t.m] / 2.0; break;
        default: break;
      }
      for (auto q = t.first; q < t.last; ++q) out[delta_species[q]] += delta_value[q] * a;
    }
  }

  /// Writes dF/dz into the leading dim x dim block of a row-major matrix with
  /// row stride `stride`.
  void jacobian(const double* z, double* jac, std::size_t stride) const {
    for (std::size_t r = 0; r < dim; ++r) std::fill_n(jac + r * stride, dim, 0.0);
    auto add = [&](const Term& t, std::size_t col, double da) {
      for (auto q = t.first; q < t.last; ++q) jac[delta_species[q] * stride + col] += delta_value[q] * da;
    };
    for (const auto& t : terms) {
      switch (t.order) {
        case 1: add(t, t.m, t.k); break;
        case 2:
          add(t, t.m, t.k * z[t.n]);
          add(t, t.n, t.k * z[t.m]);
          break;
        case 3: add(t, t.m, t.k * z[t.m]); break;
        default: break;
      }
    }
  }
};

/// In-place LU with partial pivoting for the small dense Rosenbrock systems.
/// Reaction networks here have a handful of species, where a generic
/// blocked factorization spends most of its time on dispatch.
class SmallLu {
 public:
  explicit SmallLu(std::size_t n) : n_(n), a_(n * n), piv_(n) {}

  double* data() noexcept { return a_.data(); }

  void factor() {
    const std::size_t n = n_;
    double* a = a_.data();
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(a[k * n + k]);
      for (std::size_t i = k + 1; i < n; ++i) {
        if (std::abs(a[i * n + k]) > best) {
          best = std::abs(a[i * n + k]);
          p = i;
        }
      }
      piv_[k] = p;
      if (best == 0.0) throw NumericalError("singular Rosenbrock iteration matrix");
      if (p != k) std::swap_ranges(a + k * n, a + (k + 1) * n, a + p * n);
      const double inv = 1.0 / a[k * n + k];
      for (std::size_t i = k + 1; i < n; ++i) {
        double* row = a + i * n;
        const double l = row[k] * inv;
        row[k] = l;
        if (l == 0.0) continue;
        const double* pivot_row = a + k * n;
        for (std::size_t j = k + 1; j < n; ++j) row[j] -= l * pivot_row[j];
      }
    }
  }

  void solve(double* b) const {
    const std::size_t n = n_;
    const double* a = a_.data();
    for (std::size_t k = 0; k < n; ++k) {
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    }
    for (std::size_t i = 1; i < n; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < i; ++j) s -= a[i * n + j] * b[j];
      b[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * b[j];
      b[i] = s / a[i * n + i];
    }
  }

 private:
  std::size_t n_;
  std::vector<double> a_;
  std::vector<std::size_t> piv_;
};

}  // namespace

struct OdeSolutionBuilder {
  OdeSolution sol;
  bool dense;

  OdeSolutionBuilder(std::span<const double> y0, double t0, const SolverOptions& opts, OdeMethod method, bool dense_)
      : dense(dense_) {
    sol.dim_ = y0.size();
    sol.opts_ = opts;
    sol.method_ = method;
    sol.grid_.push_back(t0);
    sol.values_.assign(y0.begin(), y0.end());
  }

  /// Appends an accepted step; writes its dense coefficients via `fill`
  /// (five blocks of dim values) when dense output is on.
  template <class Fill>
  void accept(double t, std::span<const double> y, Fill&& fill) {
    if (dense) {
      const std::size_t off = sol.dense_.size();
      sol.dense_.resize(off + 5 * sol.dim_);
      fill(sol.dense_.data() + off);
    }
    sol.grid_.push_back(t);
    sol.values_.insert(sol.values_.end(), y.begin(), y.end());
  }
};

namespace {

void check_finite(std::span<const double> v, double t) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericalError("non-finite right-hand side at t = " + std::to_string(t));
  }
}

void check_step(double h, double t, std::size_t steps) {
  if (steps > kMaxSteps) throw NumericalError("step limit exceeded at t = " + std::to_string(t));
  if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1e-300)) {
    throw NumericalError("step size underflow at t = " + std::to_string(t));
  }
}

double error_scale(const SolverOptions& o, double a, double b) {
  return o.atol + o.rtol * std::max(std::abs(a), std::abs(b));
}

/// Initial step size heuristic (Hairer, Norsett & Wanner, II.4).
double initial_step(const OdeRhs& f, std::span<const double> y, std::span<const double> f0, double t0, double t1,
                    const SolverOptions& o, int order) {
  const std::size_t n = y.size();
  const double dim = static_cast<double>(std::max<std::size_t>(n, 1));
  double dn0 = 0.0, dn1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sk = error_scale(o, y[i], y[i]);
    dn0 += (y[i] / sk) * (y[i] / sk);
    dn1 += (f0[i] / sk) * (f0[i] / sk);
  }
  dn0 = std::sqrt(dn0 / dim);
  dn1 = std::sqrt(dn1 / dim);
  double h0 = (dn0 <= 1e-10 || dn1 <= 1e-10) ? 1e-6 : 0.01 * dn0 / dn1;
  h0 = std::min(h0, t1 - t0);
  std::vector<double> y1(n), f1(n);
  for (std::size_t i = 0; i < n; ++i) y1[i] = y[i] + h0 * f0[i];
  f(t0 + h0, y1, f1);
  check_finite(f1, t0 + h0);
  double dn2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sk = error_scale(o, y[i], y[i]);
    dn2 += ((f1[i] - f0[i]) / sk) * ((f1[i] - f0[i]) / sk);
  }
  dn2 = std::sqrt(dn2 / dim) / h0;
  const double der = std::max(dn1, dn2);
  const double h1 = der <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / der, 1.0 / (order + 1));
  return std::min({100.0 * h0, h1, t1 - t0});
}

OdeSolution run_dopri5(const OdeSystem& sys, std::span<const double> y0, double t0, double t1,
                       const SolverOptions& opts, bool dense, bool detect_stiffness) {
  using namespace dp;
  const std::size_t n = y0.size();
  OdeSolutionBuilder out(y0, t0, opts, OdeMethod::DormandPrince, dense);

  std::vector<double> y(y0.begin(), y0.end()), y1(n), ytmp(n), ystage6(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  auto eval = [&](double t, const std::vector<double>& yy, std::vector<double>& k) {
    sys.rhs(t, yy, k);
    check_finite(k, t);
  };

  eval(t0, y, k1);
  double h = initial_step(sys.rhs, y, k1, t0, t1, opts, 4);
  double t = t0;
  bool last_rejected = false;
  std::size_t steps = 0, accepted = 0;
  int stiff_count = 0, nonstiff_count = 0;
  while (t < t1) {
    check_step(h, t, ++steps);
    bool final_step = false;
    if (t + h >= t1) {
      h = t1 - t;
      final_step = true;
    }

    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
    eval(t + c2 * h, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    eval(t + c3 * h, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    eval(t + c4 * h, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    }
    eval(t + c5 * h, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i) {
      ystage6[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    }
    const double t_new = final_step ? t1 : t + h;
    eval(t_new, ystage6, k6);
    for (std::size_t i = 0; i < n; ++i) {
      y1[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    }
    eval(t_new, y1, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      err = std::max(err, std::abs(e) / error_scale(opts, y[i], y1[i]));
    }
    if (!std::isfinite(err)) throw NumericalError("non-finite error estimate at t = " + std::to_string(t));

    if (err <= 1.0) {
      ++accepted;
      if (detect_stiffness && (accepted % 100 == 0 || stiff_count > 0)) {
        // h * |lambda| estimated from the last two stages
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          num += (k7[i] - k6[i]) * (k7[i] - k6[i]);
          den += (y1[i] - ystage6[i]) * (y1[i] - ystage6[i]);
        }
        if (den > 0.0 && h * std::sqrt(num / den) > 3.25) {
          nonstiff_count = 0;
          if (++stiff_count == 15) throw StiffnessDetected{};
        } else if (++nonstiff_count == 6) {
          stiff_count = 0;
        }
      }
      out.accept(t_new, y1, [&](double* r) {
        for (std::size_t i = 0; i < n; ++i) {
          const double ydiff = y1[i] - y[i];
          const double bspl = h * k1[i] - ydiff;
          r[i] = y[i];
          r[n + i] = ydiff;
          r[2 * n + i] = bspl;
          r[3 * n + i] = ydiff - h * k7[i] - bspl;
          r[4 * n + i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
        }
      });
      t = t_new;
      y.swap(y1);
      k1.swap(k7);  // first same as last
      double fac = err == 0.0 ? 10.0 : 0.9 * std::pow(err, -0.2);
      h *= std::clamp(fac, 0.2, last_rejected ? 1.0 : 10.0);
      last_rejected = false;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      last_rejected = true;
    }
  }
  return std::move(out.sol);
}

OdeSolution run_rosenbrock(const OdeSystem& sys, std::span<const double> y0, double t0, double t1,
                           const SolverOptions& opts, bool dense) {
  using namespace ros;
  if (!sys.jacobian) throw std::invalid_argument("Rosenbrock integration needs a Jacobian");
  const std::size_t n = y0.size();
  OdeSolutionBuilder out(y0, t0, opts, OdeMethod::Rosenbrock, dense);

  using Vec = std::vector<double>;
  Vec y(y0.begin(), y0.end()), f0(n), f(n), ynew(n), ys(n), g1(n), g2(n), g3(n), g4(n), g5(n), err(n);
  Vec jac(n * n);
  SmallLu lu(n);

  auto eval = [&](double t, const Vec& yy, Vec& k) {
    sys.rhs(t, yy, k);
    check_finite(k, t);
  };

  eval(t0, y, f0);
  double h = initial_step(sys.rhs, y, f0, t0, t1, opts, 3);
  double t = t0;
  std::size_t steps = 0;
  bool last_rejected = false;
  sys.jacobian(t, y, jac);
  while (t < t1) {
    check_step(h, t, ++steps);
    bool final_step = false;
    if (t + h >= t1) {
      h = t1 - t;
      final_step = true;
    }
    double* a = lu.data();
    const double diag = 1.0 / (gam * h);
    for (std::size_t q = 0; q < n * n; ++q) a[q] = -jac[q];
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += diag;
    lu.factor();
    const double rh = 1.0 / h;

    g1 = f0;
    lu.solve(g1.data());
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + a21 * g1[i];
    eval(t + 0.386 * h, ys, f);
    for (std::size_t i = 0; i < n; ++i) g2[i] = f[i] + c21 * rh * g1[i];
    lu.solve(g2.data());
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + a31 * g1[i] + a32 * g2[i];
    eval(t + 0.21 * h, ys, f);
    for (std::size_t i = 0; i < n; ++i) g3[i] = f[i] + (c31 * g1[i] + c32 * g2[i]) * rh;
    lu.solve(g3.data());
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + a41 * g1[i] + a42 * g2[i] + a43 * g3[i];
    eval(t + 0.63 * h, ys, f);
    for (std::size_t i = 0; i < n; ++i) g4[i] = f[i] + (c41 * g1[i] + c42 * g2[i] + c43 * g3[i]) * rh;
    lu.solve(g4.data());
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + a51 * g1[i] + a52 * g2[i] + a53 * g3[i] + a54 * g4[i];
    eval(t + h, ys, f);
    for (std::size_t i = 0; i < n; ++i) {
      g5[i] = f[i] + (c51 * g1[i] + c52 * g2[i] + c53 * g3[i] + c54 * g4[i]) * rh;
    }
    lu.solve(g5.data());
    for (std::size_t i = 0; i < n; ++i) ys[i] += g5[i];
    eval(t + h, ys, f);
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = f[i] + (c61 * g1[i] + c62 * g2[i] + c63 * g3[i] + c64 * g4[i] + c65 * g5[i]) * rh;
    }
    lu.solve(err.data());

    double err_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ynew[i] = ys[i] + err[i];
      err_norm = std::max(err_norm, std::abs(err[i]) / error_scale(opts, y[i], ynew[i]));
    }
    if (!std::isfinite(err_norm)) err_norm = std::numeric_limits<double>::infinity();

    if (err_norm <= 1.0) {
      const double t_new = final_step ? t1 : t + h;
      out.accept(t_new, ynew, [&](double* r) {
        for (std::size_t i = 0; i < n; ++i) {
          r[i] = y[i];
          r[n + i] = ynew[i] - y[i];
          r[2 * n + i] = d21 * g1[i] + d22 * g2[i] + d23 * g3[i] + d24 * g4[i] + d25 * g5[i];
          r[3 * n + i] = d31 * g1[i] + d32 * g2[i] + d33 * g3[i] + d34 * g4[i] + d35 * g5[i];
          r[4 * n + i] = 0.0;
        }
      });
      t = t_new;
      y.swap(ynew);
      eval(t, y, f0);
      sys.jacobian(t, y, jac);
      const double fac = err_norm == 0.0 ? 6.0 : 0.9 * std::pow(err_norm, -0.25);
      h *= std::clamp(fac, 0.2, last_rejected ? 1.0 : 6.0);
      last_rejected = false;
    } else {
      const double fac = std::isfinite(err_norm) ? 0.9 * std::pow(err_norm, -0.25) : 0.2;
      h *= std::max(0.2, fac);
      last_rejected = true;
    }
  }
  return std::move(out.sol);
}

}  // namespace

std::vector<double> rre_rhs(const ReactionNetwork& net, std::span<const double> z, std::span<const double> rates) {
  std::vector<double> out(net.num_species());
  CompiledRre(net, rates).rhs(z.data(), out.data());
  return out;
}

std::vector<double> rre_jacobian(const ReactionNetwork& net, std::span<const double> z,
                                 std::span<const double> rates) {
  const std::size_t n = net.num_species();
  std::vector<double> jac(n * n);
  CompiledRre(net, rates).jacobian(z.data(), jac.data(), n);
  return jac;
}

std::span<const double> OdeSolution::value_at_node(std::size_t i) const {
  return {values_.data() + i * dim_, dim_};
}

double OdeSolution::component(double t, std::size_t i) const {
  if (grid_.empty()) throw std::logic_error("empty solution");
  if (i >= dim_) throw std::out_of_range("component index out of range");
  if (t < grid_.front() || t > grid_.back()) throw std::out_of_range("t outside the solution interval");
  auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  std::size_t s = static_cast<std::size_t>(it - grid_.begin());
  if (s > 0 && grid_[s - 1] == t) return values_[(s - 1) * dim_ + i];
  if (dense_.empty()) throw std::logic_error("solution was computed without dense output");
  --s;  // step index
  const double h = grid_[s + 1] - grid_[s];
  const double th = (t - grid_[s]) / h;
  const double th1 = 1.0 - th;
  const double* r = dense_.data() + s * 5 * dim_;
  return r[i] + th * (r[dim_ + i] + th1 * (r[2 * dim_ + i] + th * (r[3 * dim_ + i] + th1 * r[4 * dim_ + i])));
}

std::vector<double> OdeSolution::operator()(double t) const {
  std::vector<double> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = component(t, i);
  return out;
}

OdeSolution integrate(const OdeSystem& system, std::span<const double> y0, double t0, double t1,
                      const SolverOptions& opts, bool dense) {
  if (!(opts.rtol > 0.0) || !(opts.atol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  if (!(t1 > t0)) throw std::invalid_argument("integration interval must have positive length");
  switch (opts.method) {
    case OdeMethod::DormandPrince:
      return run_dopri5(system, y0, t0, t1, opts, dense, false);
    case OdeMethod::Rosenbrock:
      return run_rosenbrock(system, y0, t0, t1, opts, dense);
    case OdeMethod::Auto:
      break;
  }
  if (!system.jacobian) return run_dopri5(system, y0, t0, t1, opts, dense, false);
  try {
    return run_dopri5(system, y0, t0, t1, opts, dense, true);
  } catch (const StiffnessDetected&) {
    return run_rosenbrock(system, y0, t0, t1, opts, dense);
  }
}

OdeSolution solve_rre(const ReactionNetwork& net, std::span<const double> rates, double horizon,
                      const SolverOptions& opts) {
  const CompiledRre f(net, rates);
  const std::size_t n = net.num_species();
  OdeSystem sys{[&f](double, std::span<const double> z, std::span<double> dz) { f.rhs(z.data(), dz.data()); },
                [&f, n](double, std::span<const double> z, std::span<double> jac) { f.jacobian(z.data(), jac.data(), n); }};
  return integrate(sys, net.x0, 0.0, horizon, opts, true);
}

double deterministic_qoi(const Model& model, std::span<const double> theta, const SolverOptions& opts) {
  const auto& net = model.network;
  const auto& q = model.qoi;
  const auto rates = map_parameters(net, model.parameters, theta);
  if (q.kind == QoiKind::Endpoint) {
    const auto sol = solve_rre(net, rates, q.horizon, opts);
    return std::max(0.0, sol.component(q.t_star, q.species));
  }
  const CompiledRre f(net, rates);
  const std::size_t n = net.num_species();
  const double inv_t = 1.0 / q.horizon;
  std::vector<double> y0(net.x0.begin(), net.x0.end());
  y0.push_back(0.0);
  OdeSystem sys{[&](double, std::span<const double> y, std::span<double> dy) {
                  f.rhs(y.data(), dy.data());
                  dy[n] = y[q.species] * inv_t;
                },
                [&](double, std::span<const double> y, std::span<double> jac) {
                  f.jacobian(y.data(), jac.data(), n + 1);
                  for (std::size_t r = 0; r < n; ++r) jac[r * (n + 1) + n] = 0.0;
                  std::fill_n(jac.begin() + static_cast<std::ptrdiff_t>(n * (n + 1)), n + 1, 0.0);
                  jac[n * (n + 1) + q.species] = inv_t;
                }};
  const auto sol = integrate(sys, y0, 0.0, q.horizon, opts, false);
  return std::max(0.0, sol.final_value()[n]);
}

}  // namespace kinsobol
