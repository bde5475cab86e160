#include "kinsobol/network.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <boost/multiprecision/cpp_int.hpp>

namespace kinsobol {

namespace {

std::string with_line(const std::string& what, std::size_t line) {
  if (line == 0) return what;
  return "line " + std::to_string(line) + ": " + what;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
  });
}

double parse_real(std::string_view s, std::size_t line) {
  s = trim(s);
  // strtod handles the full float grammar (exponents, inf) that from_chars
  // lacks on older libstdc++ builds.
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ModelError("expected a real number, got '" + buf + "'", line);
  }
  return v;
}

struct PendingRate {
  std::string name;
  double nominal = 0.0;
  std::optional<double> half_width;
  std::size_t line = 0;
};

struct PendingReaction {
  Reaction reaction;
  std::vector<std::string> factor_names;
  std::size_t line = 0;
};

std::vector<int> parse_side(std::string_view side, const ReactionNetwork& net, std::size_t line) {
  std::vector<int> coeffs(net.num_species(), 0);
  side = trim(side);
  if (side.empty() || side == "0" || side == "\xE2\x88\x85") return coeffs;  // U+2205 empty set
  std::size_t start = 0;
  while (start <= side.size()) {
    std::size_t plus = side.find('+', start);
    std::string_view term = trim(side.substr(start, plus == std::string_view::npos ? plus : plus - start));
    if (term.empty()) throw ModelError("empty term in reaction", line);
    auto parts = split_ws(term);
    int coeff = 1;
    std::string_view name;
    if (parts.size() == 1) {
      name = parts[0];
    } else if (parts.size() == 2) {
      auto [ptr, ec] = std::from_chars(parts[0].data(), parts[0].data() + parts[0].size(), coeff);
      if (ec != std::errc{} || ptr != parts[0].data() + parts[0].size() || coeff < 1) {
        throw ModelError("bad stoichiometric coefficient '" + std::string(parts[0]) + "'", line);
      }
      name = parts[1];
    } else {
      throw ModelError("cannot parse reaction term '" + std::string(term) + "'", line);
    }
    auto idx = net.species_index(name);
    if (!idx) throw ModelError("unknown species '" + std::string(name) + "'", line);
    coeffs[*idx] += coeff;
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  return coeffs;
}

}  // namespace

ModelError::ModelError(const std::string& what, std::size_t line)
    : std::runtime_error(with_line(what, line)), line_(line) {}

int Reaction::order() const noexcept {
  return std::accumulate(consumed.begin(), consumed.end(), 0);
}

std::optional<std::size_t> ReactionNetwork::species_index(std::string_view name) const {
  auto it = std::find(species.begin(), species.end(), name);
  if (it == species.end()) return std::nullopt;
  return static_cast<std::size_t>(it - species.begin());
}

std::optional<std::size_t> ReactionNetwork::constant_index(std::string_view name) const {
  for (std::size_t i = 0; i < constants.size(); ++i) {
    if (constants[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<double> ReactionNetwork::nominal_rates() const {
  std::vector<double> rates;
  rates.reserve(reactions.size());
  for (const auto& r : reactions) {
    double k = 1.0;
    for (auto f : r.rate_factors) k *= constants[f].nominal;
    rates.push_back(k);
  }
  return rates;
}

void ReactionNetwork::validate() const {
  if (species.empty()) throw ModelError("network has no species");
  std::unordered_set<std::string> seen;
  for (const auto& s : species) {
    if (!seen.insert(s).second) throw ModelError("duplicate species '" + s + "'");
  }
  if (x0.size() != species.size()) throw ModelError("x0 length does not match species count");
  for (double v : x0) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ModelError("initial concentrations must be finite and >= 0");
  }
  if (!(v_nominal > 0.0) || !std::isfinite(v_nominal)) throw ModelError("vnom must be positive");
  if (!(t_final > 0.0) || !std::isfinite(t_final)) throw ModelError("tfinal must be positive");
  for (const auto& c : constants) {
    if (!(c.nominal > 0.0)) throw ModelError("rate '" + c.name + "' must be positive");
  }
  for (const auto& r : reactions) {
    if (r.consumed.size() != species.size() || r.created.size() != species.size()) {
      throw ModelError("reaction '" + r.rate_name + "' has wrong stoichiometry length");
    }
    for (std::size_t i = 0; i < species.size(); ++i) {
      if (r.consumed[i] < 0 || r.created[i] < 0) throw ModelError("negative stoichiometry");
    }
    if (r.order() > 2) {
      throw ModelError("unsupported reaction order " + std::to_string(r.order()) + " in '" +
                       r.rate_name + "'");
    }
    if (r.consumed == r.created) throw ModelError("reaction '" + r.rate_name + "' has no net change");
    if (r.rate_factors.empty()) throw ModelError("reaction '" + r.rate_name + "' has no rate");
    for (auto f : r.rate_factors) {
      if (f >= constants.size()) throw ModelError("reaction '" + r.rate_name + "' has a bad rate index");
    }
  }
}

std::vector<std::string> ParameterSpec::names() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.name);
  return out;
}

Model parse_model(std::string_view text) {
  Model model;
  ReactionNetwork& net = model.network;
  bool have_species = false, have_x0 = false, have_vnom = false, have_tfinal = false;
  std::optional<std::size_t> qoi_line;
  std::string qoi_text;
  std::vector<PendingReaction> pending_reactions;
  std::vector<PendingRate> pending_rates;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    std::string_view line = trim(raw);
    if (line.empty()) continue;

    auto keyword_end = line.find_first_of(" \t:");
    std::string_view keyword = line.substr(0, keyword_end);

    if (keyword == "reaction" || keyword == "rate") {
      std::string_view rest = trim(line.substr(keyword.size()));
      if (keyword == "reaction") {
        if (!have_species) throw ModelError("reaction before species declaration", line_no);
        auto colon = rest.find(':');
        if (colon == std::string_view::npos) throw ModelError("expected 'reaction NAME: LHS -> RHS'", line_no);
        std::string_view label = trim(rest.substr(0, colon));
        std::string_view body = rest.substr(colon + 1);
        auto arrow = body.find("->");
        if (arrow == std::string_view::npos) throw ModelError("reaction is missing '->'", line_no);
        PendingReaction pr;
        pr.line = line_no;
        pr.reaction.rate_name = std::string(label);
        std::size_t s = 0;
        while (true) {
          auto star = label.find('*', s);
          std::string_view factor = trim(label.substr(s, star == std::string_view::npos ? star : star - s));
          if (!is_identifier(factor)) throw ModelError("bad rate name '" + std::string(label) + "'", line_no);
          pr.factor_names.emplace_back(factor);
          if (star == std::string_view::npos) break;
          s = star + 1;
        }
        pr.reaction.consumed = parse_side(body.substr(0, arrow), net, line_no);
        pr.reaction.created = parse_side(body.substr(arrow + 2), net, line_no);
        if (pr.reaction.order() > 2) {
          throw ModelError("unsupported reaction order " + std::to_string(pr.reaction.order()), line_no);
        }
        if (pr.reaction.consumed == pr.reaction.created) {
          throw ModelError("reaction has no net change", line_no);
        }
        pending_reactions.push_back(std::move(pr));
      } else {
        auto eq = rest.find('=');
        if (eq == std::string_view::npos) throw ModelError("expected 'rate NAME = VALUE [pm Q%]'", line_no);
        PendingRate rate;
        rate.line = line_no;
        rate.name = std::string(trim(rest.substr(0, eq)));
        if (!is_identifier(rate.name)) throw ModelError("bad rate name '" + rate.name + "'", line_no);
        auto value_parts = split_ws(rest.substr(eq + 1));
        if (value_parts.size() != 1 && value_parts.size() != 3) {
          throw ModelError("expected 'rate NAME = VALUE [pm Q%]'", line_no);
        }
        rate.nominal = parse_real(value_parts[0], line_no);
        if (!(rate.nominal > 0.0)) throw ModelError("rate constants must be positive", line_no);
        if (value_parts.size() == 3) {
          if (value_parts[1] != "pm" || value_parts[2].empty() || value_parts[2].back() != '%') {
            throw ModelError("expected 'pm Q%' after rate value", line_no);
          }
          double q = parse_real(value_parts[2].substr(0, value_parts[2].size() - 1), line_no);
          if (!(q >= 0.0) || !(q < 100.0)) throw ModelError("uncertainty must lie in [0%, 100%)", line_no);
          rate.half_width = q / 100.0;
        }
        for (const auto& other : pending_rates) {
          if (other.name == rate.name) throw ModelError("duplicate rate '" + rate.name + "'", line_no);
        }
        pending_rates.push_back(std::move(rate));
      }
      continue;
    }

    if (keyword_end == std::string_view::npos || line[keyword_end] != ':') {
      // allow "keyword :" with whitespace before the colon
      auto colon = line.find(':');
      if (colon == std::string_view::npos || trim(line.substr(0, colon)) != keyword) {
        throw ModelError("unrecognized line '" + std::string(line) + "'", line_no);
      }
      keyword_end = colon;
    }
    std::string_view value = trim(line.substr(line.find(':') + 1));

    if (keyword == "species") {
      if (have_species) throw ModelError("species declared twice", line_no);
      for (auto name : split_ws(value)) {
        if (!is_identifier(name)) throw ModelError("bad species name '" + std::string(name) + "'", line_no);
        if (net.species_index(name)) throw ModelError("duplicate species '" + std::string(name) + "'", line_no);
        net.species.emplace_back(name);
      }
      if (net.species.empty()) throw ModelError("no species listed", line_no);
      have_species = true;
    } else if (keyword == "x0") {
      if (!have_species) throw ModelError("x0 before species declaration", line_no);
      if (have_x0) throw ModelError("x0 declared twice", line_no);
      for (auto v : split_ws(value)) {
        double x = parse_real(v, line_no);
        if (x < 0.0) throw ModelError("initial concentrations must be >= 0", line_no);
        net.x0.push_back(x);
      }
      if (net.x0.size() != net.species.size()) {
        throw ModelError("x0 has " + std::to_string(net.x0.size()) + " entries, expected " +
                             std::to_string(net.species.size()),
                         line_no);
      }
      have_x0 = true;
    } else if (keyword == "vnom") {
      net.v_nominal = parse_real(value, line_no);
      if (!(net.v_nominal > 0.0)) throw ModelError("vnom must be positive", line_no);
      have_vnom = true;
    } else if (keyword == "tfinal") {
      net.t_final = parse_real(value, line_no);
      if (!(net.t_final > 0.0)) throw ModelError("tfinal must be positive", line_no);
      have_tfinal = true;
    } else if (keyword == "qoi") {
      if (qoi_line) throw ModelError("qoi declared twice", line_no);
      qoi_line = line_no;
      qoi_text = std::string(value);
    } else {
      throw ModelError("unknown keyword '" + std::string(keyword) + "'", line_no);
    }
  }

  if (!have_species) throw ModelError("missing 'species:' line");
  if (!have_x0) throw ModelError("missing 'x0:' line");
  if (!have_vnom) throw ModelError("missing 'vnom:' line");
  if (!have_tfinal) throw ModelError("missing 'tfinal:' line");
  if (!qoi_line) throw ModelError("missing 'qoi:' line");

  for (const auto& rate : pending_rates) {
    net.constants.push_back({rate.name, rate.nominal});
    if (rate.half_width) {
      model.parameters.entries.push_back(
          {rate.name, net.constants.size() - 1, rate.nominal, *rate.half_width});
    }
  }
  for (auto& pr : pending_reactions) {
    for (const auto& f : pr.factor_names) {
      auto idx = net.constant_index(f);
      if (!idx) throw ModelError("undefined rate '" + f + "'", pr.line);
      pr.reaction.rate_factors.push_back(*idx);
    }
    net.reactions.push_back(std::move(pr.reaction));
  }

  auto parts = split_ws(qoi_text);
  QoiSpec& q = model.qoi;
  q.horizon = net.t_final;
  if (parts.size() == 2 && parts[0] == "timeavg") {
    q.kind = QoiKind::TimeAverage;
    q.t_star = net.t_final;
  } else if (parts.size() == 4 && parts[0] == "endpoint" && parts[2] == "@") {
    q.kind = QoiKind::Endpoint;
    q.t_star = parse_real(parts[3], *qoi_line);
    if (q.t_star < 0.0 || q.t_star > net.t_final) throw ModelError("qoi time must lie in [0, tfinal]", *qoi_line);
  } else {
    throw ModelError("expected 'qoi: timeavg X' or 'qoi: endpoint X @ T'", *qoi_line);
  }
  auto idx = net.species_index(parts[1]);
  if (!idx) throw ModelError("unknown species '" + std::string(parts[1]) + "' in qoi", *qoi_line);
  q.species = *idx;

  net.validate();
  return model;
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

StoichMatrix stoich_matrix(const ReactionNetwork& net) {
  StoichMatrix nu;
  nu.rows = net.num_species();
  nu.cols = net.num_reactions();
  nu.data.assign(nu.rows * nu.cols, 0);
  for (std::size_t j = 0; j < nu.cols; ++j) {
    for (std::size_t i = 0; i < nu.rows; ++i) nu.data[i * nu.cols + j] = net.reactions[j].net_change(i);
  }
  return nu;
}

double propensity_v(const Reaction& r, std::span<const std::int64_t> x, double volume, double k) {
  double a = k;
  int order = 0;
  for (std::size_t i = 0; i < r.consumed.size(); ++i) {
    const int n = r.consumed[i];
    if (n == 0) continue;
    if (x[i] < n) return 0.0;
    // C(x, n) for n <= 2
    double c = 1.0;
    for (int m = 0; m < n; ++m) c *= static_cast<double>(x[i] - m) / static_cast<double>(m + 1);
    a *= c;
    order += n;
  }
  return a * std::pow(volume, 1 - order);
}

double limiting_propensity(const Reaction& r, std::span<const double> z, double k) {
  double a = k;
  for (std::size_t i = 0; i < r.consumed.size(); ++i) {
    const int n = r.consumed[i];
    for (int m = 0; m < n; ++m) a *= z[i] / static_cast<double>(m + 1);
  }
  return a;
}

std::vector<double> map_constants(const ReactionNetwork& net, const ParameterSpec& spec,
                                  std::span<const double> theta) {
  if (theta.size() != spec.size()) {
    throw std::domain_error("theta has " + std::to_string(theta.size()) + " entries, expected " +
                            std::to_string(spec.size()));
  }
  std::vector<double> values;
  values.reserve(net.constants.size());
  for (const auto& c : net.constants) values.push_back(c.nominal);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (!(std::abs(theta[i]) <= 1.0)) throw std::domain_error("theta outside [-1, 1]^p");
    const auto& e = spec.entries[i];
    values[e.constant] = e.nominal * (1.0 + e.half_width * theta[i]);
  }
  return values;
}

std::vector<double> map_parameters(const ReactionNetwork& net, const ParameterSpec& spec,
                                   std::span<const double> theta) {
  auto values = map_constants(net, spec, theta);
  std::vector<double> rates;
  rates.reserve(net.num_reactions());
  for (const auto& r : net.reactions) {
    double k = 1.0;
    for (auto f : r.rate_factors) k *= values[f];
    rates.push_back(k);
  }
  return rates;
}

// ---------------------------------------------------------------------------
// Conservation certificates

namespace {

struct EnumerationState {
  const StoichMatrix& nu;
  std::vector<bool> in_support;
  int max_entry;
  std::vector<std::int64_t> current;
  std::vector<std::int64_t> partial;  // alpha^T nu_j over assigned species
  std::vector<std::int64_t> best;
  std::int64_t best_sum = std::numeric_limits<std::int64_t>::max();
  // suffix_min[i][j]: smallest possible contribution of species i.. to reaction j
  std::vector<std::vector<std::int64_t>> suffix_min;
  std::vector<std::int64_t> suffix_support;

  void search(std::size_t i, std::int64_t sum) {
    if (sum + suffix_support[i] >= best_sum) return;
    for (std::size_t j = 0; j < nu.cols; ++j) {
      if (partial[j] + suffix_min[i][j] > 0) return;
    }
    if (i == nu.rows) {
      best = current;
      best_sum = sum;
      return;
    }
    for (int v = in_support[i] ? 1 : 0; v <= max_entry; ++v) {
      current[i] = v;
      for (std::size_t j = 0; j < nu.cols; ++j) partial[j] += static_cast<std::int64_t>(v) * nu(i, j);
      search(i + 1, sum + v);
      for (std::size_t j = 0; j < nu.cols; ++j) partial[j] -= static_cast<std::int64_t>(v) * nu(i, j);
    }
    current[i] = 0;
  }
};

}  // namespace

std::optional<std::vector<std::int64_t>> conservation_vector_enumerate(
    const StoichMatrix& nu, std::span<const std::size_t> support, int max_entry) {
  EnumerationState st{nu, std::vector<bool>(nu.rows, false), max_entry, {}, {}, {},
                      std::numeric_limits<std::int64_t>::max(), {}, {}};
  for (auto s : support) {
    if (s >= nu.rows) throw std::out_of_range("support index out of range");
    st.in_support[s] = true;
  }
  st.current.assign(nu.rows, 0);
  st.partial.assign(nu.cols, 0);
  st.suffix_min.assign(nu.rows + 1, std::vector<std::int64_t>(nu.cols, 0));
  st.suffix_support.assign(nu.rows + 1, 0);
  for (std::size_t i = nu.rows; i-- > 0;) {
    for (std::size_t j = 0; j < nu.cols; ++j) {
      const std::int64_t lo = st.in_support[i] ? 1 : 0;
      std::int64_t c = std::min(lo * nu(i, j), static_cast<std::int64_t>(max_entry) * nu(i, j));
      st.suffix_min[i][j] = st.suffix_min[i + 1][j] + c;
    }
    st.suffix_support[i] = st.suffix_support[i + 1] + (st.in_support[i] ? 1 : 0);
  }
  st.search(0, 0);
  if (st.best.empty()) return std::nullopt;
  return st.best;
}

std::optional<std::vector<std::int64_t>> conservation_vector_lp(const StoichMatrix& nu,
                                                                std::span<const std::size_t> support) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;

  // Phase-one simplex in exact arithmetic. Columns: alpha (n), slack per
  // reaction (m), surplus per support row (s), artificial per support row (s).
  const std::size_t n = nu.rows, m = nu.cols, s = support.size();
  for (auto i : support) {
    if (i >= n) throw std::out_of_range("support index out of range");
  }
  const std::size_t cols = n + m + 2 * s;
  const std::size_t rows = m + s;
  std::vector<std::vector<cpp_rational>> tab(rows, std::vector<cpp_rational>(cols + 1, 0));
  std::vector<std::size_t> basis(rows);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) tab[j][i] = nu(i, j);
    tab[j][n + j] = 1;
    basis[j] = n + j;
  }
  for (std::size_t r = 0; r < s; ++r) {
    auto& row = tab[m + r];
    row[support[r]] = 1;
    row[n + m + r] = -1;
    row[n + m + s + r] = 1;
    row[cols] = 1;
    basis[m + r] = n + m + s + r;
  }
  // reduced costs of the phase-one objective (minimize sum of artificials)
  std::vector<cpp_rational> cost(cols + 1, 0);
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c <= cols; ++c) cost[c] -= tab[m + r][c];
  }
  for (std::size_t r = 0; r < s; ++r) cost[n + m + s + r] = 0;

  while (true) {
    // Bland's rule: lowest-index improving column
    std::size_t enter = cols;
    for (std::size_t c = 0; c < cols; ++c) {
      if (cost[c] < 0) {
        enter = c;
        break;
      }
    }
    if (enter == cols) break;
    std::size_t leave = rows;
    cpp_rational best_ratio;
    for (std::size_t r = 0; r < rows; ++r) {
      if (tab[r][enter] > 0) {
        cpp_rational ratio = tab[r][cols] / tab[r][enter];
        if (leave == rows || ratio < best_ratio || (ratio == best_ratio && basis[r] < basis[leave])) {
          leave = r;
          best_ratio = ratio;
        }
      }
    }
    if (leave == rows) break;  // unbounded direction cannot occur in phase one
    cpp_rational pivot = tab[leave][enter];
    for (auto& v : tab[leave]) v /= pivot;
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == leave || tab[r][enter] == 0) continue;
      cpp_rational f = tab[r][enter];
      for (std::size_t c = 0; c <= cols; ++c) tab[r][c] -= f * tab[leave][c];
    }
    cpp_rational f = cost[enter];
    for (std::size_t c = 0; c <= cols; ++c) cost[c] -= f * tab[leave][c];
    basis[leave] = enter;
  }
  // objective value is -cost[cols]
  if (cost[cols] != 0) return std::nullopt;

  std::vector<cpp_rational> alpha(n, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (basis[r] < n) alpha[basis[r]] = tab[r][cols];
  }
  cpp_int lcm = 1;
  for (const auto& a : alpha) {
    cpp_int d = denominator(a);
    lcm = lcm / boost::multiprecision::gcd(lcm, d) * d;
  }
  std::vector<cpp_int> ints;
  cpp_int g = 0;
  for (const auto& a : alpha) {
    cpp_int v = numerator(a) * (lcm / denominator(a));
    ints.push_back(v);
    g = boost::multiprecision::gcd(g, v);
  }
  std::vector<std::int64_t> out;
  for (auto& v : ints) {
    if (g > 1) v /= g;
    out.push_back(v.convert_to<std::int64_t>());
  }
  return out;
}

std::optional<std::vector<std::int64_t>> find_conservation_vector(
    const ReactionNetwork& net, std::span<const std::size_t> support, int max_entry) {
  const auto nu = stoich_matrix(net);
  if (net.num_species() <= 12) return conservation_vector_enumerate(nu, support, max_entry);
  return conservation_vector_lp(nu, support);
}

}  // namespace kinsobol
