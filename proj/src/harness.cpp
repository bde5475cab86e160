#include "kinsobol/harness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kinsobol/deterministic.hpp"
#include "kinsobol/gsa.hpp"
#include "kinsobol/network.hpp"
#include "kinsobol/parallel.hpp"
#include "kinsobol/random.hpp"
#include "kinsobol/stochastic.hpp"

namespace fs = std::filesystem;

namespace kinsobol {

namespace {

/// Exception carrying an exit code for argument problems found by commands.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CsvFile {
 public:
  CsvFile(const fs::path& path, const std::string& header) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    out_ << header << '\n';
  }
  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }
  void raw(const std::string& line) { out_ << line << '\n'; }
  std::string path() const { return path_.string(); }

 private:
  fs::path path_;
  std::ofstream out_;
};

struct Prepared {
  Model model;
  fs::path out;
  std::vector<std::string> files;
};

Prepared prepare(const RunOptions& opts) {
  const std::string bytes = read_file(opts.model_path);
  Prepared p{parse_model(bytes), fs::path(opts.out_dir), {}};
  if (opts.workers == 0) throw UsageError("--workers must be at least 1");
  fs::create_directories(p.out);
  const auto manifest = RunManifest::from_options(opts, content_hash(bytes));
  const fs::path mpath = p.out / "manifest.txt";
  std::ofstream(mpath, std::ios::binary) << manifest.to_text();
  p.files.push_back(mpath.string());
  return p;
}

SolverOptions tolerances(const RunOptions& opts) {
  if (!(opts.rtol > 0.0) || !(opts.atol > 0.0)) throw UsageError("tolerances must be positive");
  SolverOptions s{opts.rtol, opts.atol, OdeMethod::Auto};
  if (opts.solver == "dopri5") {
    s.method = OdeMethod::DormandPrince;
  } else if (opts.solver == "rosenbrock") {
    s.method = OdeMethod::Rosenbrock;
  } else if (opts.solver != "auto") {
    throw UsageError("unknown solver '" + opts.solver + "'");
  }
  return s;
}

std::string theta_header(const ParameterSpec& spec) {
  std::string h;
  for (const auto& n : spec.names()) h += ",theta_" + n;
  return h;
}

std::string theta_cells(std::span<const double> theta) {
  std::string s;
  for (double t : theta) s += "," + real(t);
  return s;
}

const char* kIndexHeader = "V,m,omega,param,S,T,raw_S,raw_T";
const char* kSummaryHeader = "V,m,param,mean_T,p5_T,p95_T,mean_S,degenerate_count";

void write_index_rows(CsvFile& csv, const std::string& v, const std::string& m, const std::string& omega,
                      const ParameterSpec& spec, const std::optional<SobolEstimate>& est) {
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (est) {
      csv.row(v, m, omega, spec.entries[i].name, real(est->first_order[i]), real(est->total[i]),
              real(est->raw_first_order[i]), real(est->raw_total[i]));
    } else {
      csv.row(v, m, omega, spec.entries[i].name, "nan", "nan", "nan", "nan");
    }
  }
}

void write_ensemble(CsvFile& indices, CsvFile& summary, const IndexEnsemble& ens, const ParameterSpec& spec) {
  const std::string v = real(ens.volume), m = real(ens.multiplier);
  for (std::size_t w = 0; w < ens.per_omega.size(); ++w) {
    write_index_rows(indices, v, m, std::to_string(w), spec, ens.per_omega[w]);
  }
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto& s = ens.summary[i];
    summary.row(v, m, spec.entries[i].name, real(s.mean_total), real(s.p5_total), real(s.p95_total),
                real(s.mean_first), ens.degenerate_count);
  }
}

void write_deterministic_summary(CsvFile& summary, const ParameterSpec& spec, const std::optional<SobolEstimate>& est) {
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (est) {
      const std::string t = real(est->total[i]);
      summary.row("inf", "inf", spec.entries[i].name, t, t, t, real(est->first_order[i]), 0);
    } else {
      summary.row("inf", "inf", spec.entries[i].name, "nan", "nan", "nan", "nan", 1);
    }
  }
}

void require_parameters(const Model& model) {
  if (model.parameters.size() == 0) throw UsageError("model declares no uncertain parameters ('pm' rates)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

RunManifest RunManifest::from_options(const RunOptions& o, const std::string& model_hash) {
  RunManifest m;
  auto add = [&](std::string k, std::string v) { m.entries.emplace_back(std::move(k), std::move(v)); };
  std::string mlist;
  for (std::size_t i = 0; i < o.m_list.size(); ++i) mlist += (i ? "," : "") + real(o.m_list[i]);
  add("tool", "kinsobol");
  add("version", kToolVersion);
  add("command", o.command);
  add("model", fs::absolute(o.model_path).lexically_normal().string());
  add("model_hash", model_hash);
  add("out", o.out_dir);
  add("m", real(o.m));
  add("m_list", mlist);
  add("ns", std::to_string(o.ns));
  add("ms", std::to_string(o.ms));
  add("design_seed", std::to_string(o.design_seed));
  add("master_seed", std::to_string(o.master_seed));
  add("workers", std::to_string(o.workers));
  add("rtol", real(o.rtol));
  add("atol", real(o.atol));
  add("solver", o.solver);
  add("replicates", std::to_string(o.replicates));
  add("mode", o.mode == SobolMode::Deterministic ? "deterministic" : "stochastic");
  add("threshold", real(o.threshold));
  add("dump_samples", o.dump_samples ? "1" : "0");
  return m;
}

std::string RunManifest::to_text() const {
  std::string s;
  for (const auto& [k, v] : entries) s += k + "=" + v + "\n";
  return s;
}

RunManifest RunManifest::parse(const std::string& text) {
  RunManifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("malformed manifest line '" + line + "'");
    m.entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return m;
}

std::optional<std::string> RunManifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return v;
  }
  return std::nullopt;
}

RunOptions RunManifest::to_options() const {
  auto need = [&](const std::string& key) {
    auto v = get(key);
    if (!v) throw UsageError("manifest is missing '" + key + "'");
    return *v;
  };
  RunOptions o;
  o.command = need("command");
  o.model_path = need("model");
  o.out_dir = need("out");
  o.m = std::stod(need("m"));
  std::string mlist = need("m_list");
  std::stringstream ss(mlist);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) o.m_list.push_back(std::stod(item));
  }
  o.ns = std::stoull(need("ns"));
  o.ms = std::stoull(need("ms"));
  o.design_seed = std::stoull(need("design_seed"));
  o.master_seed = std::stoull(need("master_seed"));
  o.workers = static_cast<unsigned>(std::stoul(need("workers")));
  o.rtol = std::stod(need("rtol"));
  o.atol = std::stod(need("atol"));
  o.solver = need("solver");
  o.replicates = std::stoull(need("replicates"));
  const std::string mode = need("mode");
  if (mode != "deterministic" && mode != "stochastic") throw UsageError("bad mode '" + mode + "' in manifest");
  o.mode = mode == "deterministic" ? SobolMode::Deterministic : SobolMode::Stochastic;
  o.threshold = std::stod(need("threshold"));
  o.dump_samples = need("dump_samples") == "1";
  return o;
}

// ---------------------------------------------------------------------------
// Commands

CommandResult cmd_simulate(const RunOptions& opts) {
  auto prep = prepare(opts);
  const auto& net = prep.model.network;
  if (!(opts.m > 0.0)) throw UsageError("--m must be positive");
  const double volume = opts.m * net.v_nominal;
  const auto rates = net.nominal_rates();
  std::string header = "t";
  for (const auto& s : net.species) header += "," + s;

  std::vector<Trajectory> trajs(opts.replicates);
  parallel_for(opts.replicates, opts.workers, [&](std::size_t r) {
    trajs[r] = nrm_simulate(net, volume, rates, net.t_final, SeedSpec{opts.master_seed, r});
  });
  for (std::size_t r = 0; r < opts.replicates; ++r) {
    char name[48];
    std::snprintf(name, sizeof name, "trajectory_%04zu.csv", r);
    CsvFile csv(prep.out / name, header);
    const auto& tr = trajs[r];
    auto emit = [&](double t, const std::vector<std::int64_t>& x) {
      std::string line = real(t);
      for (auto v : x) line += "," + real(static_cast<double>(v) / volume);
      csv.raw(line);
    };
    for (std::size_t e = 0; e < tr.times.size(); ++e) emit(tr.times[e], tr.states[e]);
    if (tr.times.back() < tr.t_final) emit(tr.t_final, tr.states.back());
    prep.files.push_back(csv.path());
  }
  return {0, "wrote " + std::to_string(opts.replicates) + " trajectories", prep.files};
}

CommandResult cmd_rre(const RunOptions& opts) {
  auto prep = prepare(opts);
  const auto& net = prep.model.network;
  const auto tol = tolerances(opts);
  std::string header = "t";
  for (const auto& s : net.species) header += "," + s;
  CsvFile csv(prep.out / "rre.csv", header);
  constexpr int kPoints = 1000;
  const auto sol = solve_rre(net, net.nominal_rates(), net.t_final, tol);
  for (int i = 0; i < kPoints; ++i) {
    const double t = i == kPoints - 1 ? net.t_final : net.t_final * i / (kPoints - 1);
    std::string line = real(t);
    for (double v : sol(t)) line += "," + real(v);
    csv.raw(line);
  }
  prep.files.push_back(csv.path());
  return {0, "wrote RRE solution", prep.files};
}

CommandResult cmd_sobol(const RunOptions& opts) {
  auto prep = prepare(opts);
  const auto& model = prep.model;
  require_parameters(model);
  const auto& spec = model.parameters;
  CsvFile indices(prep.out / "indices.csv", kIndexHeader);
  CsvFile summary(prep.out / "summary.csv", kSummaryHeader);
  prep.files.push_back(indices.path());
  prep.files.push_back(summary.path());

  if (opts.mode == SobolMode::Deterministic) {
    const auto det = deterministic_sobol(model, opts.ns, opts.design_seed, tolerances(opts), opts.workers);
    write_index_rows(indices, "inf", "inf", "det", spec, det.estimate);
    write_deterministic_summary(summary, spec, det.estimate);
    if (opts.dump_samples) {
      CsvFile s(prep.out / "samples.csv", "context" + theta_header(spec) + ",omega,f");
      for (std::size_t k = 0; k < det.samples.size(); ++k) {
        s.raw("deterministic" + theta_cells(det.design.point(k)) + ",-1," + real(det.samples[k]));
      }
      prep.files.push_back(s.path());
    }
    if (!det.estimate) return {3, "degenerate QoI: zero variance over the design", prep.files};
    std::string msg = "deterministic total indices:";
    for (std::size_t i = 0; i < spec.size(); ++i) msg += " " + spec.entries[i].name + "=" + real(det.estimate->total[i]);
    return {0, msg, prep.files};
  }

  if (!(opts.m > 0.0)) throw UsageError("--m must be positive");
  std::vector<std::vector<double>> samples;
  const auto ens = stochastic_sobol(model, opts.m, opts.ns, opts.ms, opts.design_seed, opts.master_seed, opts.workers,
                                    opts.dump_samples ? &samples : nullptr);
  write_ensemble(indices, summary, ens, spec);
  if (opts.dump_samples) {
    const auto design = saltelli_design(spec.size(), opts.ns, opts.design_seed);
    CsvFile s(prep.out / "samples.csv", "context" + theta_header(spec) + ",omega,f");
    for (std::size_t w = 0; w < samples.size(); ++w) {
      for (std::size_t k = 0; k < samples[w].size(); ++k) {
        s.raw("stochastic" + theta_cells(design.point(k)) + "," + std::to_string(w) + "," + real(samples[w][k]));
      }
    }
    prep.files.push_back(s.path());
  }
  return {0,
          "stochastic indices for " + std::to_string(opts.ms) + " realizations; degenerate: " +
              std::to_string(ens.degenerate_count),
          prep.files};
}

CommandResult cmd_converge(const RunOptions& opts) {
  auto prep = prepare(opts);
  const auto& model = prep.model;
  require_parameters(model);
  if (opts.m_list.empty()) throw UsageError("--m-list must not be empty");
  for (std::size_t i = 1; i < opts.m_list.size(); ++i) {
    if (!(opts.m_list[i] > opts.m_list[i - 1])) throw UsageError("--m-list must be strictly increasing");
  }
  const auto& spec = model.parameters;
  const auto det = deterministic_sobol(model, opts.ns, opts.design_seed, tolerances(opts), opts.workers);
  const auto ensembles =
      convergence_study(model, opts.m_list, opts.ns, opts.ms, opts.design_seed, opts.master_seed, opts.workers);

  CsvFile indices(prep.out / "indices.csv", kIndexHeader);
  CsvFile summary(prep.out / "summary.csv", kSummaryHeader);
  write_index_rows(indices, "inf", "inf", "det", spec, det.estimate);
  write_deterministic_summary(summary, spec, det.estimate);
  std::size_t degenerate = 0;
  for (const auto& ens : ensembles) {
    write_ensemble(indices, summary, ens, spec);
    degenerate += ens.degenerate_count;
  }
  prep.files.push_back(indices.path());
  prep.files.push_back(summary.path());
  return {0,
          "convergence study over " + std::to_string(opts.m_list.size()) + " system sizes; degenerate: " +
              std::to_string(degenerate),
          prep.files};
}

std::vector<std::size_t> select_unimportant(const std::vector<double>& totals, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    if (totals[i] < threshold) out.push_back(i);
  }
  return out;
}

double ks_statistic(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("KS statistic needs two nonempty samples");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

CommandResult cmd_fix_params(const RunOptions& opts) {
  auto prep = prepare(opts);
  const auto& model = prep.model;
  require_parameters(model);
  if (!(opts.m > 0.0)) throw UsageError("--m must be positive");
  const auto& spec = model.parameters;
  const std::size_t p = spec.size();

  const auto det = deterministic_sobol(model, opts.ns, opts.design_seed, tolerances(opts), opts.workers);
  if (!det.estimate) return {3, "degenerate QoI: zero variance over the design", prep.files};
  const auto fixed = select_unimportant(det.estimate->raw_total, opts.threshold);
  if (fixed.size() == p) throw UsageError("threshold fixes every parameter; nothing left to vary");

  {
    CsvFile idx(prep.out / "indices.csv", kIndexHeader);
    write_index_rows(idx, "inf", "inf", "det", spec, det.estimate);
    prep.files.push_back(idx.path());
  }
  {
    std::ofstream f(prep.out / "fixed_params.txt", std::ios::binary);
    for (auto i : fixed) f << spec.entries[i].name << '\n';
    prep.files.push_back((prep.out / "fixed_params.txt").string());
  }

  // Paired samples over Theta x Omega: draw theta_r, freeze omega_r = r, then
  // evaluate the full model and the reduced one (fixed entries at nominal).
  const double volume = opts.m * model.network.v_nominal;
  CounterStream theta_stream(hash_combine(mix64(opts.design_seed), 0x6669782d706172ULL));
  std::vector<double> thetas(opts.ms * p);
  for (auto& t : thetas) t = 2.0 * theta_stream.uniform_open() - 1.0;
  std::vector<double> full(opts.ms), reduced(opts.ms);
  parallel_for(2 * opts.ms, opts.workers, [&](std::size_t item) {
    const std::size_t r = item / 2;
    std::vector<double> theta(thetas.begin() + static_cast<std::ptrdiff_t>(r * p),
                              thetas.begin() + static_cast<std::ptrdiff_t>((r + 1) * p));
    if (item % 2 == 1) {
      for (auto i : fixed) theta[i] = 0.0;
    }
    const double f = stochastic_qoi(model, volume, theta, SeedSpec{opts.master_seed, r});
    (item % 2 == 0 ? full : reduced)[r] = f;
  });

  CsvFile samples(prep.out / "samples.csv", "context" + theta_header(spec) + ",omega,f");
  for (std::size_t r = 0; r < opts.ms; ++r) {
    std::vector<double> theta(thetas.begin() + static_cast<std::ptrdiff_t>(r * p),
                              thetas.begin() + static_cast<std::ptrdiff_t>((r + 1) * p));
    samples.raw("full" + theta_cells(theta) + "," + std::to_string(r) + "," + real(full[r]));
    for (auto i : fixed) theta[i] = 0.0;
    samples.raw("reduced" + theta_cells(theta) + "," + std::to_string(r) + "," + real(reduced[r]));
  }
  prep.files.push_back(samples.path());

  auto moments = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    return std::pair{mean, var};
  };
  const auto [mf, vf] = moments(full);
  const auto [mr, vr] = moments(reduced);
  const double ks = ks_statistic(full, reduced);
  std::string fixed_names;
  for (std::size_t k = 0; k < fixed.size(); ++k) fixed_names += (k ? ";" : "") + spec.entries[fixed[k]].name;
  {
    CsvFile cmp(prep.out / "comparison.csv",
                "threshold,num_fixed,fixed,ks_statistic,mean_full,mean_reduced,var_full,var_reduced");
    cmp.row(real(opts.threshold), fixed.size(), fixed_names, real(ks), real(mf), real(mr), real(vf), real(vr));
    prep.files.push_back(cmp.path());
  }
  return {0, "fixed " + std::to_string(fixed.size()) + " parameters {" + fixed_names + "}; KS = " + real(ks),
          prep.files};
}

CommandResult run_command(const RunOptions& opts) {
  try {
    if (opts.command == "simulate") return cmd_simulate(opts);
    if (opts.command == "rre") return cmd_rre(opts);
    if (opts.command == "sobol") return cmd_sobol(opts);
    if (opts.command == "converge") return cmd_converge(opts);
    if (opts.command == "fix-params") return cmd_fix_params(opts);
    return {2, "unknown command '" + opts.command + "'", {}};
  } catch (const ModelError& e) {
    return {2, std::string("model error: ") + e.what(), {}};
  } catch (const UsageError& e) {
    return {2, std::string("argument error: ") + e.what(), {}};
  } catch (const std::invalid_argument& e) {
    return {2, std::string("argument error: ") + e.what(), {}};
  } catch (const std::domain_error& e) {
    return {2, std::string("argument error: ") + e.what(), {}};
  } catch (const NumericalError& e) {
    return {3, std::string("numerical failure: ") + e.what(), {}};
  } catch (const std::exception& e) {
    return {1, std::string("error: ") + e.what(), {}};
  }
}

CommandResult replay_manifest(const std::string& manifest_path, std::optional<std::string> out_dir,
                              std::optional<unsigned> workers) {
  RunOptions opts;
  try {
    const auto manifest = RunManifest::parse(read_file(manifest_path));
    opts = manifest.to_options();
    const auto recorded = manifest.get("model_hash");
    const std::string actual = content_hash(read_file(opts.model_path));
    if (recorded && *recorded != actual) {
      return {2, "model file '" + opts.model_path + "' changed since the manifest was written", {}};
    }
  } catch (const ModelError& e) {
    return {2, std::string("manifest error: ") + e.what(), {}};
  } catch (const std::exception& e) {
    return {2, std::string("manifest error: ") + e.what(), {}};
  }
  if (out_dir) opts.out_dir = *out_dir;
  if (workers) opts.workers = *workers;
  return run_command(opts);
}

}  // namespace kinsobol
