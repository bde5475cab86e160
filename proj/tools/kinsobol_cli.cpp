#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kinsobol/harness.hpp"

namespace {

void add_common(CLI::App* cmd, kinsobol::RunOptions& o) {
  cmd->add_option("--model", o.model_path, "Model file")->required();
  cmd->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--workers", o.workers, "Worker threads")->capture_default_str();
}

void add_tolerances(CLI::App* cmd, kinsobol::RunOptions& o) {
  cmd->add_option("--rtol", o.rtol, "RRE relative tolerance")->capture_default_str();
  cmd->add_option("--atol", o.atol, "RRE absolute tolerance")->capture_default_str();
  cmd->add_option("--solver", o.solver, "auto, dopri5 or rosenbrock")
      ->check(CLI::IsMember({"auto", "dopri5", "rosenbrock"}))
      ->capture_default_str();
}

void add_sampling(CLI::App* cmd, kinsobol::RunOptions& o) {
  cmd->add_option("--ns", o.ns, "Base sample count N_s")->capture_default_str();
  cmd->add_option("--ms", o.ms, "Number of realizations M_s")->capture_default_str();
  cmd->add_option("--design-seed", o.design_seed, "Seed of the parameter design")->capture_default_str();
  cmd->add_option("--master-seed", o.master_seed, "Seed of the intrinsic noise")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic and deterministic Sobol' analysis of reaction networks"};
  app.set_version_flag("--version", std::string(kinsobol::kToolVersion));
  app.require_subcommand(1);

  kinsobol::RunOptions o;

  auto* simulate = app.add_subcommand("simulate", "Write NRM trajectories at nominal rates");
  add_common(simulate, o);
  simulate->add_option("--m", o.m, "System size multiplier (V = m * vnom)")->capture_default_str();
  simulate->add_option("--replicates", o.replicates, "Number of realizations")->capture_default_str();
  simulate->add_option("--master-seed", o.master_seed, "Seed of the intrinsic noise")->capture_default_str();

  auto* rre = app.add_subcommand("rre", "Solve the reaction rate equations at nominal rates");
  add_common(rre, o);
  add_tolerances(rre, o);

  std::string mode = "deterministic";
  auto* sobol = app.add_subcommand("sobol", "Estimate first-order and total Sobol' indices");
  add_common(sobol, o);
  add_tolerances(sobol, o);
  add_sampling(sobol, o);
  sobol->add_option("--mode", mode, "deterministic or stochastic")
      ->check(CLI::IsMember({"deterministic", "stochastic"}))
      ->capture_default_str();
  sobol->add_option("--m", o.m, "System size multiplier for stochastic mode")->capture_default_str();
  sobol->add_flag("--dump-samples", o.dump_samples, "Also write every QoI sample");

  auto* converge = app.add_subcommand("converge", "Stochastic indices across system sizes");
  add_common(converge, o);
  add_tolerances(converge, o);
  add_sampling(converge, o);
  converge->add_option("--m-list", o.m_list, "Increasing multipliers, e.g. 1,10,100")
      ->delimiter(',')
      ->required();

  auto* fix = app.add_subcommand("fix-params", "Fix low-index parameters and compare QoI distributions");
  add_common(fix, o);
  add_tolerances(fix, o);
  add_sampling(fix, o);
  fix->add_option("--threshold", o.threshold, "Total-index threshold")->capture_default_str();
  fix->add_option("--m", o.m, "System size multiplier for the stochastic samples")->capture_default_str();

  std::string manifest;
  std::optional<std::string> replay_out;
  std::optional<unsigned> replay_workers;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest, "manifest.txt written by a previous run")->required();
  replay->add_option("--out", replay_out, "Override the output directory");
  replay->add_option("--workers", replay_workers, "Override the worker count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  kinsobol::CommandResult result;
  if (replay->parsed()) {
    result = kinsobol::replay_manifest(manifest, replay_out, replay_workers);
  } else {
    o.command = app.get_subcommands().front()->get_name();
    o.mode = mode == "stochastic" ? kinsobol::SobolMode::Stochastic : kinsobol::SobolMode::Deterministic;
    result = kinsobol::run_command(o);
  }
  std::fprintf(result.exit_code == 0 ? stdout : stderr, "%s\n", result.message.c_str());
  return result.exit_code;
}
