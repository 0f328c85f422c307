#include "marginlab/cli.hpp"

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "marginlab/config.hpp"
#include "marginlab/harness.hpp"
#include "marginlab/version.hpp"

namespace marginlab {

namespace {

int do_gen_data(const std::string& generator, std::uint64_t seed, int n_extra, double scale,
                const std::string& out) {
  Dataset ds = generator == "soudry" ? make_soudry_dataset(seed, n_extra)
                                     : make_illposed_dataset(seed, scale);
  save_dataset(ds, out);
  std::cout << "wrote " << out << " (" << ds.n() << " points, d=" << ds.d() << ")\n";
  return 0;
}

int do_solve_margin(const std::string& dataset_path, const std::string& out) {
  Dataset ds = load_dataset(dataset_path);
  const MaxMarginSolution sol = solve_max_margin(ds);
  nlohmann::json j;
  j["w_hat"] = std::vector<double>(sol.w_hat.data(), sol.w_hat.data() + sol.w_hat.size());
  j["gamma"] = sol.gamma;
  j["support"] = sol.support;
  j["v"] = sol.dual_v;
  j["kkt_residual"] = sol.kkt_residual;
  j["converged"] = sol.converged;
  j["sweeps"] = sol.sweeps;
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int do_run(const std::string& config_path, const std::string& out,
           std::optional<std::uint64_t> seed_override, bool assert_checks) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed_override) cfg.optimizer.seed = *seed_override;
  const RunResult res = run_experiment(cfg, out);
  std::printf("steps=%ld eta=%.6g final_loss=%.6g final_angle=%.6g wall=%.0fms\n",
              res.steps_taken, res.resolved_eta, res.final_loss, res.final_angle,
              res.wall_clock_ms);
  long failed = 0;
  for (const auto& [name, count] : res.violations) {
    if (count > 0) {
      std::printf("check failed: %s (%ld)\n", name.c_str(), count);
      failed += count;
    }
  }
  if (res.lr_bound_heuristic) {
    std::printf("note: learning-rate bound reused outside its exact sampling model\n");
  }
  if (!res.report.note.empty()) std::printf("note: %s\n", res.report.note.c_str());
  if (assert_checks && failed > 0) return 3;
  return 0;
}

int do_diagnose(const std::string& run_dir) {
  const DiagnosticsReport rep = diagnose_run(run_dir);
  std::printf("diagnosed %s\n", run_dir.c_str());
  std::printf("  final_loss=%.6g final_angle=%.6g\n", rep.loss.empty() ? 0.0 : rep.loss.back(),
              rep.angle.empty() ? 0.0 : rep.angle.back());
  if (rep.descent_applicable) {
    std::printf("  descent: %ld checked, %ld violations\n", rep.descent.checked,
                rep.descent.violations);
  }
  if (!rep.note.empty()) std::printf("  note: %s\n", rep.note.c_str());
  return 0;
}

int do_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  const Comparison cmp = compare_runs(paths);
  const std::string text = render_comparison(cmp);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"margin-dynamics laboratory: optimizer runs and implicit-bias diagnostics"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a folded dataset (CSV + JSON sidecar)");
  std::string gen_kind;
  std::uint64_t gen_seed = 0;
  int gen_extra = 0;
  double gen_scale = 10.0;
  std::string gen_out = "dataset.csv";
  gen->add_option("generator", gen_kind, "soudry | illposed")
      ->required()
      ->check(CLI::IsMember({"soudry", "illposed"}));
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--n-extra", gen_extra, "extra sampled points (soudry)")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--scale", gen_scale, "off-support coordinate scale (illposed, >= 10)");
  gen->add_option("--out", gen_out, "output CSV path");

  // solve-margin
  auto* margin = app.add_subcommand("solve-margin", "solve the L2 max-margin problem for a CSV");
  std::string margin_data;
  std::string margin_out;
  margin->add_option("dataset", margin_data, "dataset CSV path")->required();
  margin->add_option("--out", margin_out, "write the JSON solution here (default: stdout)");

  // run
  auto* run = app.add_subcommand("run", "run an experiment config into an output directory");
  std::string run_config;
  std::string run_out = "run_out";
  std::uint64_t run_seed = 0;
  bool run_seed_set = false;
  bool run_assert = false;
  run->add_option("--config", run_config, "experiment config file")->required();
  run->add_option("--out", run_out, "output directory");
  run->add_option("--seed", run_seed, "override the optimizer/sampler seed")
      ->each([&](const std::string&) { run_seed_set = true; });
  run->add_flag("--assert", run_assert, "exit 3 when any recorded check fails");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "recompute diagnostics for an existing run dir");
  std::string diag_dir;
  diag->add_option("run_dir", diag_dir, "run directory")->required();

  // compare
  auto* comp = app.add_subcommand("compare", "compare rate estimates across run directories");
  std::vector<std::string> comp_dirs;
  std::string comp_out;
  comp->add_option("run_dirs", comp_dirs, "two or more run directories")->expected(-1);
  comp->add_option("--out", comp_out, "write the table here (default: stdout)");

  try {
    std::vector<const char*> argv;
    argv.push_back("marginlab");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    // CLI11 returns 0 for --help/--version; anything else is a usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return do_gen_data(gen_kind, gen_seed, gen_extra, gen_scale, gen_out);
    if (margin->parsed()) return do_solve_margin(margin_data, margin_out);
    if (run->parsed()) {
      return do_run(run_config, run_out,
                    run_seed_set ? std::optional<std::uint64_t>(run_seed) : std::nullopt,
                    run_assert);
    }
    if (diag->parsed()) return do_diagnose(diag_dir);
    if (comp->parsed()) return do_compare(comp_dirs, comp_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}

}  // namespace marginlab
