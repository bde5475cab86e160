#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "kinsobol/deterministic.hpp"
#include "kinsobol/gsa.hpp"
#include "kinsobol/harness.hpp"
#include "kinsobol/network.hpp"
#include "kinsobol/stochastic.hpp"

namespace py = pybind11;
using namespace kinsobol;

namespace {

SolverOptions solver_options(double rtol, double atol, const std::string& method) {
  SolverOptions s{rtol, atol, OdeMethod::Auto};
  if (method == "dopri5") {
    s.method = OdeMethod::DormandPrince;
  } else if (method == "rosenbrock") {
    s.method = OdeMethod::Rosenbrock;
  } else if (method != "auto") {
    throw py::value_error("method must be auto, dopri5 or rosenbrock");
  }
  return s;
}

py::dict estimate_dict(const SobolEstimate& e) {
  py::dict d;
  d["first_order"] = e.first_order;
  d["total"] = e.total;
  d["raw_first_order"] = e.raw_first_order;
  d["raw_total"] = e.raw_total;
  d["mean"] = e.mean;
  d["variance"] = e.variance;
  return d;
}

py::object optional_estimate(const std::optional<SobolEstimate>& e) {
  return e ? py::object(estimate_dict(*e)) : py::object(py::none());
}

}  // namespace

PYBIND11_MODULE(_kinsobol, m) {
  m.doc() = "Stochastic and deterministic Sobol' analysis of reaction networks";

  py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Model>(m, "Model")
      .def_property_readonly("species", [](const Model& mdl) { return mdl.network.species; })
      .def_property_readonly("x0", [](const Model& mdl) { return mdl.network.x0; })
      .def_property_readonly("v_nominal", [](const Model& mdl) { return mdl.network.v_nominal; })
      .def_property_readonly("t_final", [](const Model& mdl) { return mdl.network.t_final; })
      .def_property_readonly("num_reactions", [](const Model& mdl) { return mdl.network.reactions.size(); })
      .def_property_readonly("parameters", [](const Model& mdl) { return mdl.parameters.names(); })
      .def_property_readonly("nominal_rates", [](const Model& mdl) { return mdl.network.nominal_rates(); })
      .def("stoichiometry",
           [](const Model& mdl) {
             const auto nu = stoich_matrix(mdl.network);
             py::array_t<int> out({nu.rows, nu.cols});
             std::copy(nu.data.begin(), nu.data.end(), out.mutable_data());
             return out;
           })
      .def("rates", [](const Model& mdl, const std::vector<double>& theta) {
        return map_parameters(mdl.network, mdl.parameters, theta);
      });

  m.def("parse_model", [](const std::string& text) { return parse_model(text); }, py::arg("text"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def(
      "simulate",
      [](const Model& mdl, double multiplier, std::uint64_t master_seed, std::uint64_t omega) {
        const double volume = multiplier * mdl.network.v_nominal;
        Trajectory t;
        {
          py::gil_scoped_release release;
          t = nrm_simulate(mdl.network, volume, mdl.network.nominal_rates(), mdl.network.t_final,
                           SeedSpec{master_seed, omega});
        }
        const std::size_t n = mdl.network.species.size();
        py::array_t<std::int64_t> states({t.states.size(), n});
        auto* dst = states.mutable_data();
        for (const auto& s : t.states) dst = std::copy(s.begin(), s.end(), dst);
        py::array_t<double> times(std::vector<py::ssize_t>{static_cast<py::ssize_t>(t.times.size())});
        std::copy(t.times.begin(), t.times.end(), times.mutable_data());
        return py::make_tuple(times, states);
      },
      py::arg("model"), py::arg("multiplier") = 1.0, py::arg("master_seed") = 1, py::arg("omega") = 0,
      "NRM path at nominal rates: (event times, copy-number states).");

  m.def(
      "solve_rre",
      [](const Model& mdl, const std::vector<double>& times, double rtol, double atol, const std::string& method) {
        const auto sol = solve_rre(mdl.network, mdl.network.nominal_rates(), mdl.network.t_final,
                                   solver_options(rtol, atol, method));
        const std::size_t n = mdl.network.species.size();
        py::array_t<double> out({times.size(), n});
        auto* dst = out.mutable_data();
        for (double t : times) {
          const auto z = sol(t);
          dst = std::copy(z.begin(), z.end(), dst);
        }
        return out;
      },
      py::arg("model"), py::arg("times"), py::arg("rtol") = 1e-8, py::arg("atol") = 1e-10,
      py::arg("method") = "auto");

  m.def(
      "deterministic_qoi",
      [](const Model& mdl, const std::vector<double>& theta, double rtol, double atol, const std::string& method) {
        return deterministic_qoi(mdl, theta, solver_options(rtol, atol, method));
      },
      py::arg("model"), py::arg("theta"), py::arg("rtol") = 1e-8, py::arg("atol") = 1e-10,
      py::arg("method") = "auto");

  m.def(
      "stochastic_qoi",
      [](const Model& mdl, const std::vector<double>& theta, double multiplier, std::uint64_t master_seed,
         std::uint64_t omega) {
        return stochastic_qoi(mdl, multiplier * mdl.network.v_nominal, theta, SeedSpec{master_seed, omega});
      },
      py::arg("model"), py::arg("theta"), py::arg("multiplier") = 1.0, py::arg("master_seed") = 1,
      py::arg("omega") = 0);

  m.def(
      "estimate_indices",
      [](const std::vector<double>& fa, const std::vector<double>& fb, const std::vector<std::vector<double>>& fab) {
        return optional_estimate(estimate_indices(fa, fb, fab));
      },
      py::arg("f_a"), py::arg("f_b"), py::arg("f_ab"), "None when the QoI has zero variance.");

  m.def(
      "saltelli_design",
      [](std::size_t p, std::size_t ns, std::uint64_t seed) {
        const auto d = saltelli_design(p, ns, seed);
        py::array_t<double> a({ns, p}), b({ns, p});
        std::copy(d.a.begin(), d.a.end(), a.mutable_data());
        std::copy(d.b.begin(), d.b.end(), b.mutable_data());
        return py::make_tuple(a, b);
      },
      py::arg("p"), py::arg("ns"), py::arg("seed"));

  m.def(
      "deterministic_sobol",
      [](const Model& mdl, std::size_t ns, std::uint64_t design_seed, double rtol, double atol, unsigned workers) {
        DeterministicSobol r;
        {
          py::gil_scoped_release release;
          r = deterministic_sobol(mdl, ns, design_seed, SolverOptions{rtol, atol}, workers);
        }
        return optional_estimate(r.estimate);
      },
      py::arg("model"), py::arg("ns"), py::arg("design_seed") = 1, py::arg("rtol") = 1e-8, py::arg("atol") = 1e-10,
      py::arg("workers") = 1);

  m.def(
      "stochastic_sobol",
      [](const Model& mdl, double multiplier, std::size_t ns, std::size_t ms, std::uint64_t design_seed,
         std::uint64_t master_seed, unsigned workers) {
        IndexEnsemble e;
        {
          py::gil_scoped_release release;
          e = stochastic_sobol(mdl, multiplier, ns, ms, design_seed, master_seed, workers);
        }
        py::list per_omega;
        for (const auto& est : e.per_omega) per_omega.append(optional_estimate(est));
        py::list summary;
        for (const auto& s : e.summary) {
          py::dict d;
          d["mean_total"] = s.mean_total;
          d["p5_total"] = s.p5_total;
          d["p95_total"] = s.p95_total;
          d["sd_total"] = s.sd_total;
          d["mean_first"] = s.mean_first;
          summary.append(d);
        }
        py::dict out;
        out["per_omega"] = per_omega;
        out["summary"] = summary;
        out["degenerate_count"] = e.degenerate_count;
        return out;
      },
      py::arg("model"), py::arg("multiplier"), py::arg("ns"), py::arg("ms"), py::arg("design_seed") = 1,
      py::arg("master_seed") = 1, py::arg("workers") = 1);

  m.def(
      "run_command",
      [](const std::string& command, const std::string& model_path, const std::string& out_dir, py::kwargs kw) {
        RunOptions o;
        o.command = command;
        o.model_path = model_path;
        o.out_dir = out_dir;
        for (auto [key, value] : kw) {
          const auto k = key.cast<std::string>();
          if (k == "m") o.m = value.cast<double>();
          else if (k == "m_list") o.m_list = value.cast<std::vector<double>>();
          else if (k == "ns") o.ns = value.cast<std::size_t>();
          else if (k == "ms") o.ms = value.cast<std::size_t>();
          else if (k == "design_seed") o.design_seed = value.cast<std::uint64_t>();
          else if (k == "master_seed") o.master_seed = value.cast<std::uint64_t>();
          else if (k == "workers") o.workers = value.cast<unsigned>();
          else if (k == "rtol") o.rtol = value.cast<double>();
          else if (k == "atol") o.atol = value.cast<double>();
          else if (k == "solver") o.solver = value.cast<std::string>();
          else if (k == "replicates") o.replicates = value.cast<std::size_t>();
          else if (k == "mode") o.mode = value.cast<std::string>() == "stochastic" ? SobolMode::Stochastic
                                                                                  : SobolMode::Deterministic;
          else if (k == "threshold") o.threshold = value.cast<double>();
          else if (k == "dump_samples") o.dump_samples = value.cast<bool>();
          else throw py::type_error("unknown option '" + k + "'");
        }
        CommandResult r;
        {
          py::gil_scoped_release release;
          r = run_command(o);
        }
        return py::make_tuple(r.exit_code, r.message, r.files);
      },
      py::arg("command"), py::arg("model_path"), py::arg("out_dir"),
      "Runs a CLI command in-process; returns (exit_code, message, files).");
}
