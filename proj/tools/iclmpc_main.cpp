// Command-line front end: run scenarios, validate frozen estimates by
// Monte Carlo, and export table/plot data from run directories.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iclmpc/harness.hpp"

namespace {

using iclmpc::json;

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", message}, {"kind", kind}}.dump() << std::endl;
  return code;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw iclmpc::Error("cannot write '" + out_path + "'");
  out << text;
}

struct RunArgs {
  std::string scenario_path;
  std::string out_dir;
  std::string mode;
  double epsilon = -1.0;
  double beta = -1.0;
  int trials = -1;
  std::int64_t seed = -1;
  bool dump_qp = false;
};

int cmd_run(const RunArgs& args) {
  iclmpc::Scenario scenario = iclmpc::load_scenario(args.scenario_path);
  if (args.seed >= 0)
    scenario.icl.master_seed = static_cast<uint64_t>(args.seed);
  if (!args.mode.empty()) {
    if (args.mode == "prob")
      scenario.icl.mode = iclmpc::CertificateMode::probabilistic;
    else if (args.mode == "robust")
      scenario.icl.mode = iclmpc::CertificateMode::robust;
    else
      throw iclmpc::ConfigError("--mode must be 'prob' or 'robust'");
  }
  if (args.epsilon >= 0.0) scenario.icl.epsilon = args.epsilon;
  if (args.beta >= 0.0) scenario.icl.beta = args.beta;
  if (args.trials >= 1) scenario.monte_carlo_trials = args.trials;
  if (args.dump_qp) scenario.dump_qp = true;

  std::string dir = !args.out_dir.empty() ? args.out_dir : scenario.output_dir;
  if (dir.empty()) dir = "runs/" + scenario.name;
  scenario.output_dir = dir;
  if (scenario.dump_qp) scenario.icl.qp_dump_dir = dir;

  const iclmpc::RunResult result = iclmpc::run(scenario.task, scenario.icl);
  iclmpc::write_run_directory(scenario, result, dir);

  json summary;
  summary["run_dir"] = dir;
  summary["certificate"] =
      iclmpc::certificate_to_json(result.state.certificate);
  summary["final_iteration"] = result.state.j;
  summary["estimate_method"] = iclmpc::to_string(result.state.estimate.method);
  std::cout << summary.dump(2) << std::endl;

  if (result.state.aborted)
    return fail("run", "run aborted: " + result.state.abort_reason, 1);
  if (!result.state.certificate.closed())
    return fail("run", "certificate still open: " + result.state.abort_reason,
                1);
  return 0;
}

struct ValidateArgs {
  std::string run_dir;
  int trials = -1;
  std::int64_t seed = -1;
  int threads = 0;
};

int cmd_validate(const ValidateArgs& args) {
  namespace fs = std::filesystem;
  const fs::path dir(args.run_dir);
  std::ifstream scn_in(dir / "scenario.json");
  std::ifstream run_in(dir / "run.json");
  if (!scn_in || !run_in)
    throw iclmpc::ConfigError("'" + args.run_dir + "' is not a run directory");
  json scn_j, run_j;
  scn_in >> scn_j;
  run_in >> run_j;
  const iclmpc::Scenario scenario = iclmpc::scenario_from_json(scn_j);
  const iclmpc::Certificate cert =
      iclmpc::certificate_from_json(run_j.at("certificate"));
  if (!cert.j_bar.has_value())
    throw iclmpc::ConfigError(
        "run has no closed certificate; nothing to validate");
  const iclmpc::ConstraintEstimate estimate =
      iclmpc::estimate_from_json(run_j.at("estimate"));
  const iclmpc::Polytope terminal = iclmpc::polytope_from_json(
      run_j.at("terminal_set"), "run.terminal_set");
  const Eigen::MatrixXd P_terminal =
      iclmpc::matrix_from_json(run_j.at("P_terminal"), "run.P_terminal");

  const int trials =
      args.trials >= 1 ? args.trials : scenario.monte_carlo_trials;
  const uint64_t seed = args.seed >= 0 ? static_cast<uint64_t>(args.seed)
                                       : scenario.icl.master_seed;
  const iclmpc::ValidationReport rep = iclmpc::monte_carlo_validate(
      scenario.task, estimate, terminal, P_terminal, trials, seed,
      args.threads);
  const json rep_j = iclmpc::validation_to_json(rep);
  {
    std::ofstream out(dir / "validation.json");
    out << rep_j.dump(2) << "\n";
  }
  std::cout << rep_j.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Iterative constraint-learning robust MPC: runs, validation, exports"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd =
      app.add_subcommand("run", "Execute the learning loop on a scenario file");
  run_cmd->add_option("scenario", run_args.scenario_path, "scenario JSON file")
      ->required();
  run_cmd->add_option("--seed", run_args.seed, "master seed override");
  run_cmd->add_option("--out", run_args.out_dir, "run directory");
  run_cmd->add_option("--mode", run_args.mode, "prob|robust override");
  run_cmd->add_option("--epsilon", run_args.epsilon, "failure bound override");
  run_cmd->add_option("--beta", run_args.beta, "confidence override");
  run_cmd->add_option("--trials", run_args.trials,
                      "Monte Carlo trial count stored for later validation");
  run_cmd->add_flag("--dump-qp", run_args.dump_qp,
                    "write per-step QP dumps into the run directory");

  ValidateArgs val_args;
  auto* val_cmd = app.add_subcommand(
      "validate", "Monte Carlo validation of a finished run's frozen estimate");
  val_cmd->add_option("run_dir", val_args.run_dir, "run directory")->required();
  val_cmd->add_option("--trials", val_args.trials, "trial count override");
  val_cmd->add_option("--seed", val_args.seed,
                      "validation seed (share it across runs for paired draws)");
  val_cmd->add_option("--threads", val_args.threads,
                      "worker threads (0 = hardware default)");

  std::vector<std::string> table_dirs;
  std::string table_out;
  auto* table_cmd = app.add_subcommand(
      "table", "Emit a CSV of epsilon, j_bar, eps_hat, cost_ratio per run");
  table_cmd->add_option("run_dirs", table_dirs, "validated run directories")
      ->required()
      ->expected(-1);
  table_cmd->add_option("--out", table_out, "output file (default stdout)");

  std::string plot_dir, plot_out;
  auto* plot_cmd = app.add_subcommand(
      "plotdata", "Emit per-iteration estimate vertices plus the true set");
  plot_cmd->add_option("run_dir", plot_dir, "run directory")->required();
  plot_cmd->add_option("--out", plot_out, "output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(run_args);
    if (val_cmd->parsed()) return cmd_validate(val_args);
    if (table_cmd->parsed()) {
      emit(iclmpc::table_csv(table_dirs), table_out);
      return 0;
    }
    if (plot_cmd->parsed()) {
      emit(iclmpc::plotdata_csv(plot_dir), plot_out);
      return 0;
    }
  } catch (const iclmpc::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const iclmpc::Error& e) {
    return fail("runtime", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 3);
  }
  return 0;
}
