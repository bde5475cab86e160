#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kinsobol {

/// Raised for malformed model files and networks that fail validation.
/// `line()` is 0 when the problem is not tied to a specific line.
class ModelError : public std::runtime_error {
 public:
  ModelError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A named rate constant. Reactions reference constants by index; a reaction
/// rate may be the product of several constants (e.g. `alpha_a*alpha_A`).
struct RateConstant {
  std::string name;
  double nominal = 0.0;
};

/// Mass-action reaction with reactant (consumed) and product (created)
/// stoichiometry over the network's species.
struct Reaction {
  std::vector<int> consumed;
  std::vector<int> created;
  /// Indices into ReactionNetwork::constants; the rate is their product.
  std::vector<std::size_t> rate_factors;
  /// Label as written in the model file, e.g. "k1" or "alpha_a*alpha_A".
  std::string rate_name;

  int order() const noexcept;
  int net_change(std::size_t species) const noexcept {
    return created[species] - consumed[species];
  }
};

struct ReactionNetwork {
  std::vector<std::string> species;
  std::vector<Reaction> reactions;
  std::vector<RateConstant> constants;
  /// Initial concentrations (amount per unit system size).
  std::vector<double> x0;
  double v_nominal = 1.0;
  double t_final = 1.0;

  std::size_t num_species() const noexcept { return species.size(); }
  std::size_t num_reactions() const noexcept { return reactions.size(); }
  std::optional<std::size_t> species_index(std::string_view name) const;
  std::optional<std::size_t> constant_index(std::string_view name) const;

  /// Nominal rate of every reaction (product of its nominal factors).
  std::vector<double> nominal_rates() const;

  /// Throws ModelError unless every structural invariant holds.
  void validate() const;
};

/// One uncertain rate constant: k(theta) = nominal * (1 + half_width * theta).
struct UncertainParameter {
  std::string name;
  std::size_t constant = 0;
  double nominal = 0.0;
  double half_width = 0.0;
};

struct ParameterSpec {
  std::vector<UncertainParameter> entries;
  std::size_t size() const noexcept { return entries.size(); }
  std::vector<std::string> names() const;
};

enum class QoiKind { TimeAverage, Endpoint };

/// Scalar functional of a concentration path: the time average of one
/// species over [0, horizon] or its value at t_star.
struct QoiSpec {
  QoiKind kind = QoiKind::TimeAverage;
  std::size_t species = 0;
  double t_star = 0.0;
  double horizon = 1.0;
};

/// Everything a model file declares.
struct Model {
  ReactionNetwork network;
  ParameterSpec parameters;
  QoiSpec qoi;
};

/// Parses the line-oriented model format. Species order in the file is the
/// canonical state-vector order.
Model parse_model(std::string_view text);
Model load_model(const std::string& path);

/// N x M net stoichiometry, row-major: entry (i, j) at [i * M + j].
struct StoichMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> data;
  int operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

StoichMatrix stoich_matrix(const ReactionNetwork& net);

/// Copy-number propensity a^V(x) = k V^(1 - order) prod_i C(x_i, consumed_i).
double propensity_v(const Reaction& r, std::span<const std::int64_t> x, double volume, double k);

/// Limiting propensity lim a^V(Vz)/V = k prod_i z_i^consumed_i / consumed_i!.
double limiting_propensity(const Reaction& r, std::span<const double> z, double k);

/// Rate constants for a point theta in [-1, 1]^p; throws std::domain_error
/// if any |theta_i| > 1 or theta has the wrong length.
std::vector<double> map_constants(const ReactionNetwork& net, const ParameterSpec& spec,
                                  std::span<const double> theta);

/// Per-reaction rates (products of the mapped constants).
std::vector<double> map_parameters(const ReactionNetwork& net, const ParameterSpec& spec,
                                   std::span<const double> theta);

/// Search for alpha >= 0 (integer) with alpha^T nu_j <= 0 for every reaction
/// and alpha_i > 0 on `support`. Small networks use an exhaustive search over
/// entries in [0, max_entry] returning the minimum-sum certificate; larger
/// ones fall back to an exact rational LP feasibility test.
std::optional<std::vector<std::int64_t>> find_conservation_vector(
    const ReactionNetwork& net, std::span<const std::size_t> support, int max_entry = 4);

/// The two search routes, exposed separately so they can be cross-checked.
std::optional<std::vector<std::int64_t>> conservation_vector_enumerate(
    const StoichMatrix& nu, std::span<const std::size_t> support, int max_entry);
std::optional<std::vector<std::int64_t>> conservation_vector_lp(
    const StoichMatrix& nu, std::span<const std::size_t> support);

}  // namespace kinsobol
