#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "kinsobol/parallel.hpp"
#include "kinsobol/random.hpp"
#include "kinsobol/stochastic.hpp"
#include "test_models.hpp"

using namespace kinsobol;
using testing_models::decay;
using testing_models::model_path;

namespace {

Trajectory run(const Model& m, double volume, std::uint64_t omega, std::uint64_t seed = 7) {
  return nrm_simulate(m.network, volume, m.network.nominal_rates(), m.network.t_final, SeedSpec{seed, omega});
}

}  // namespace

TEST_CASE("counter streams are reproducible and open-interval") {
  CounterStream a(42), b(42), c(43);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform_open();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform_open());
  }
  CHECK(a.counter() == 1000);
  CounterStream d(42);
  CHECK(d.next() != c.next());
  CHECK(channel_key(1, 0, 0) != channel_key(1, 0, 1));
  CHECK(channel_key(1, 0, 0) != channel_key(1, 1, 0));
  CHECK(channel_key(1, 0, 0) != channel_key(2, 0, 0));
  // matches the reference SplitMix64 sequence seeded with 0
  CounterStream ref(0);
  CHECK(ref.next() == 0xe220a8397b1dcdafULL);
  CHECK(ref.next() == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("firing deltas") {
  const std::vector<double> tau{0.0, 0.0, 2.0};
  const std::vector<double> tau_plus{1.0, 3.0, 2.0};
  const std::vector<double> a{2.0, 0.0, 5.0};
  const auto d = next_firing_deltas(tau, tau_plus, a);
  CHECK(d[0] == 0.5);
  CHECK(d[1] == std::numeric_limits<double>::infinity());
  CHECK(d[2] == 0.0);
}

TEST_CASE("absorbing initial state produces no events") {
  const auto m = parse_model(
      "species: A B C\nx0: 0 0 0\nvnom: 1\ntfinal: 5\nreaction k: A + B -> C\nrate k = 1\nqoi: timeavg C\n");
  const auto t = run(m, 1.0, 0);
  CHECK(t.num_events() == 0);
  CHECK(t.states.size() == 1);
  CHECK(t.times == std::vector<double>{0.0});
}

TEST_CASE("binding of the last pair fires exactly once") {
  const auto m = parse_model(
      "species: S1 S2 S3\nx0: 1 1 0\nvnom: 1\ntfinal: 1000\nreaction k: S1 + S2 -> S3\nrate k = 1\n"
      "qoi: timeavg S3\n");
  for (std::uint64_t w = 0; w < 20; ++w) {
    const auto t = run(m, 1.0, w);
    CHECK(t.num_events() == 1);
    CHECK(t.states.back() == std::vector<std::int64_t>{0, 0, 1});
  }
}

TEST_CASE("linear death process mean") {
  auto m = decay(1000, 1.0, 10.0);
  m.qoi = QoiSpec{QoiKind::Endpoint, 0, 5.0, 10.0};
  const std::size_t n = 10000;
  std::vector<double> x(n);
  const std::vector<double> theta;
  for (std::size_t w = 0; w < n; ++w) x[w] = stochastic_qoi(m, 1.0, theta, SeedSpec{3, w});
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n - 1;
  const double expected = 1000.0 * std::exp(-5.0);
  CHECK(std::abs(mean - expected) < 3.0 * std::sqrt(var / n));
}

TEST_CASE("small death process matches the binomial law") {
  const auto m = decay(5, 1.0, 1.0);
  const std::size_t n = 20000;
  std::array<double, 6> counts{};
  for (std::size_t w = 0; w < n; ++w) {
    const auto t = run(m, 1.0, w, 11);
    counts[static_cast<std::size_t>(t.states.back()[0])] += 1.0;
  }
  const double p = std::exp(-1.0);
  double chi2 = 0.0;
  double binom = 1.0;  // C(5, j)
  for (int j = 0; j <= 5; ++j) {
    if (j > 0) binom = binom * (5 - j + 1) / j;
    const double e = n * binom * std::pow(p, j) * std::pow(1.0 - p, 5 - j);
    chi2 += (counts[static_cast<std::size_t>(j)] - e) * (counts[static_cast<std::size_t>(j)] - e) / e;
  }
  const double pvalue = boost::math::cdf(boost::math::complement(boost::math::chi_squared(5.0), chi2));
  CHECK(pvalue > 1e-3);
}

TEST_CASE("trajectory structure and conservation on michaelis-menten") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  const auto nu = stoich_matrix(m.network);
  const double v = m.network.v_nominal;
  const auto x0 = initial_copy_numbers(m.network, v);
  for (std::uint64_t w = 0; w < 50; ++w) {
    const auto t = run(m, v, w);
    REQUIRE(t.states.front() == x0);
    REQUIRE(t.times.front() == 0.0);
    REQUIRE(t.fired.size() + 1 == t.states.size());
    const std::int64_t scp = x0[0] + x0[2] + x0[3];
    const std::int64_t ec = x0[1] + x0[2];
    bool ok = true;
    for (std::size_t e = 1; e < t.states.size(); ++e) {
      const auto& s = t.states[e];
      const auto& prev = t.states[e - 1];
      ok = ok && t.times[e] > t.times[e - 1] && t.times[e] <= t.t_final;
      ok = ok && s[0] + s[2] + s[3] == scp && s[1] + s[2] == ec;
      for (std::size_t i = 0; i < s.size(); ++i) {
        ok = ok && s[i] >= 0 && s[i] - prev[i] == nu(i, t.fired[e - 1]);
      }
    }
    CHECK(ok);
  }
}

TEST_CASE("replaying the firing sequence reproduces the final state") {
  const auto m = load_model(model_path("genetic_oscillator.model"));
  const auto nu = stoich_matrix(m.network);
  const auto t = run(m, 1.0, 4);
  std::vector<std::int64_t> x = t.states.front();
  std::vector<std::size_t> per_reaction(nu.cols, 0);
  for (auto j : t.fired) {
    ++per_reaction[j];
    for (std::size_t i = 0; i < nu.rows; ++i) x[i] += nu(i, j);
  }
  CHECK(x == t.states.back());
  std::size_t total = 0;
  for (auto c : per_reaction) total += c;
  CHECK(total == t.num_events());
  CHECK(t.num_events() > 100);
}

TEST_CASE("qoi functionals of known paths") {
  Trajectory t;
  t.times = {0.0, 5.0};
  t.states = {{0}, {1}};
  t.fired = {0};
  t.t_final = 10.0;
  t.volume = 1.0;
  CHECK(evaluate_qoi(t, QoiSpec{QoiKind::TimeAverage, 0, 0.0, 10.0}) == 0.5);

  Trajectory c;
  c.times = {0.0};
  c.states = {{8}};
  c.t_final = 4.0;
  c.volume = 4.0;
  CHECK(evaluate_qoi(c, QoiSpec{QoiKind::TimeAverage, 0, 0.0, 4.0}) == 2.0);
  CHECK(evaluate_qoi(t, QoiSpec{QoiKind::Endpoint, 0, 0.0, 10.0}) == 0.0);
  CHECK(evaluate_qoi(t, QoiSpec{QoiKind::Endpoint, 0, 7.0, 10.0}) == 1.0);
  CHECK_THROWS_AS(evaluate_qoi(t, QoiSpec{QoiKind::TimeAverage, 3, 0.0, 10.0}), std::out_of_range);
}

TEST_CASE("streamed and stored qoi agree bit for bit") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  const double v = m.network.v_nominal;
  const std::vector<double> theta{0.3, -0.7, 0.1};
  const auto rates = map_parameters(m.network, m.parameters, theta);
  for (std::uint64_t w = 0; w < 5; ++w) {
    const auto t = nrm_simulate(m.network, v, rates, m.qoi.horizon, SeedSpec{9, w});
    CHECK(evaluate_qoi(t, m.qoi) == stochastic_qoi(m, v, theta, SeedSpec{9, w}));
  }
}

TEST_CASE("stochastic qoi is a deterministic function of theta and omega") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  const double v = m.network.v_nominal;
  const std::vector<double> theta(3, 0.0);
  const double a = stochastic_qoi(m, v, theta, SeedSpec{1, 0});
  CHECK(a == stochastic_qoi(m, v, theta, SeedSpec{1, 0}));
  CHECK(a != stochastic_qoi(m, v, theta, SeedSpec{1, 1}));
  // bounded by the S + C + P certificate
  const std::vector<std::size_t> support{3};
  const auto alpha = find_conservation_vector(m.network, support);
  REQUIRE(alpha);
  double bound = 0.0;
  for (std::size_t i = 0; i < 4; ++i) bound += static_cast<double>((*alpha)[i]) * m.network.x0[i];
  bound /= static_cast<double>((*alpha)[3]);
  CHECK(a >= 0.0);
  CHECK(a <= bound * (1.0 + 1e-9));
}

TEST_CASE("results do not depend on the worker count") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  const double v = m.network.v_nominal;
  const std::vector<double> theta{0.5, 0.5, -0.5};
  std::vector<double> serial(32), threaded(32);
  parallel_for(32, 1, [&](std::size_t w) { serial[w] = stochastic_qoi(m, v, theta, SeedSpec{5, w}); });
  parallel_for(32, 4, [&](std::size_t w) { threaded[w] = stochastic_qoi(m, v, theta, SeedSpec{5, w}); });
  CHECK(serial == threaded);
}

TEST_CASE("inconsistent system size is rejected") {
  const auto m = load_model(model_path("michaelis_menten.model"));
  CHECK_THROWS_AS(initial_copy_numbers(m.network, m.network.v_nominal * 0.37), NumericalError);
  const auto d = decay(3, 1.0, 1.0);
  CHECK(initial_copy_numbers(d.network, 10.0) == std::vector<std::int64_t>{30});
}
