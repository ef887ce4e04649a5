// qndsq: conditional spin squeezing by continuous QND measurement.
//
//   qndsq theory  --atoms 160 [--eta 1] [--tau-max 2] [--points 200]
//   qndsq check   --config run.cfg
//   qndsq run     --config run.cfg [--trajectories M] [--seed S] [--threads K] ...
//   qndsq sweep   --config run.cfg --axis N --values 1000,2000,5000
//   qndsq fit     --table out/sweep.csv --kind xi2|topt
//   qndsq compare --outdir out [--eta 1] [--bias 0.015]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical abort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "qnd/harness.hpp"
#include "qnd/theory.hpp"

namespace {

using namespace qnd;
namespace fs = std::filesystem;

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> trajectories;
  int threads = 0;
  std::optional<std::string> outdir;
  std::optional<std::string> scheme;
  std::optional<std::string> model;
  bool write_trajectories = false;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Config file (key = value)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_option("--trajectories,-M", o.trajectories, "Number of trajectories");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--outdir", o.outdir, "Output directory");
  cmd->add_option("--scheme", o.scheme, "euler_maruyama, milstein, implicit_milstein or exact_qnd");
  cmd->add_option("--model", o.model, "full or cavity-removed");
  cmd->add_flag("--write-trajectories", o.write_trajectories, "Also write traj_#####.csv");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.base_seed = *o.seed;
  if (o.trajectories) c.trajectories = *o.trajectories;
  if (o.outdir) c.outdir = *o.outdir;
  if (o.scheme) c.sim.scheme = parse_scheme(*o.scheme);
  if (o.model) c.sim.model = parse_model(*o.model);
  c.sim.seed = c.base_seed;
  c.sim.validate();
  return c;
}

void print_check(const ModelParams& p) {
  const auto r = theory::regime_report(p);
  auto line = [](const char* name, const theory::RegimeCheck& c) {
    std::cout << std::left << std::setw(22) << name << std::setw(14) << c.ratio << (c.pass ? "ok" : "WARN") << '\n';
  };
  std::cout << "n0            " << r.mean_photons << '\n'
            << "kappa_tilde   " << r.kappa_tilde << '\n'
            << "delta_omega   " << r.frequency_shift << '\n';
  line("bad_cavity", r.bad_cavity);
  line("excited_elimination", r.excited_elimination);
  line("cavity_removal", r.cavity_removal);
}

int cmd_theory(int atoms, double eta, double tau_max, int points) {
  if (atoms < 1 || points < 2 || !(tau_max > 0) || !(eta > 0 && eta <= 1)) throw ConfigError("bad theory arguments");
  std::cout << "tau,xi2_nofeedback,xi2_feedback,Jx,var_x,var_y,var_z\n" << std::setprecision(12);
  for (int i = 0; i < points; ++i) {
    const double tau = tau_max * i / (points - 1);
    const auto m = theory::moments_nofeedback(tau, atoms, eta);
    std::cout << tau << ',' << theory::xi2_average_nofeedback(tau, atoms, eta) << ','
              << theory::xi2_feedback(tau, atoms, eta) << ',' << m.jx << ',' << m.var_x << ',' << m.var_y << ','
              << m.var_z << '\n';
  }
  const auto opt = theory::minimize_xi2_average(atoms, eta);
  std::cerr << "minimum: tau_m = " << opt.tau << ", xi2_m = " << opt.xi2 << '\n';
  return 0;
}

int cmd_run(const Overrides& o) {
  const RunConfig config = resolve(o);
  EnsembleOptions options;
  options.threads = o.threads;
  options.persist = true;
  options.write_trajectories = o.write_trajectories;
  options.keep_records = o.write_trajectories;
  const EnsembleRun run = run_ensemble(config, options);
  std::cout << "trajectories " << run.manifest.effective_trajectories << '/' << run.manifest.trajectories << '\n'
            << "xi2_m        " << run.optimum.xi2_m << " +- " << run.xi2_m_sigma << '\n'
            << "t_m          " << run.optimum.t_m << " +- " << run.t_m_sigma << '\n';
  if (config.sim.model == Model::full) std::cout << "delta_t      " << run.delta_t << " (c = " << run.c << ")\n";
  if (run.optimum.monotone) std::cout << "warning: no interior minimum; extend T\n";
  for (const auto& f : run.manifest.failures)
    std::cerr << "trajectory " << f.index << " (seed " << f.seed << ") failed at step " << f.step << ": "
              << f.message << '\n';
  std::cout << "outputs in   " << config.outdir << '\n';
  return 0;
}

int cmd_sweep(const Overrides& o, const std::string& axis, const std::vector<double>& values) {
  SweepSpec spec;
  spec.base = resolve(o);
  spec.axis = parse_axis(axis);
  spec.values = values;
  spec.trajectories = spec.base.trajectories;
  EnsembleOptions options;
  options.threads = o.threads;
  options.persist = true;
  options.keep_records = false;
  const auto rows = sweep(spec, options);
  fs::create_directories(spec.base.outdir);
  const auto path = fs::path(spec.base.outdir) / "sweep.csv";
  std::ofstream out(path);
  write_sweep_csv(rows, out);
  write_sweep_csv(rows, std::cout);
  int failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  if (failed) std::cerr << failed << " sweep point(s) failed; see " << path << '\n';
  return 0;
}

int cmd_fit(const std::string& table, const std::string& kind, const ScalingFitOptions& options) {
  std::ifstream in(table);
  if (!in) throw ConfigError("cannot open " + table);
  const auto rows = read_sweep_csv(in);
  const FitResult fit = fit_scaling(rows, parse_fit_kind(kind), options);
  nlohmann::json j = {{"kind", kind},
                      {"exponent", fit.exponent},
                      {"exponent_sigma", fit.exponent_sigma},
                      {"prefactor", fit.prefactor},
                      {"prefactor_sigma", fit.prefactor_sigma},
                      {"x_min", fit.x_min},
                      {"x_max", fit.x_max},
                      {"points", fit.points},
                      {"weighted", fit.weighted},
                      {"residual_norm", fit.residual_norm}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_compare(const std::string& outdir, double eta, double bias) {
  const fs::path dir(outdir);
  std::ifstream summary_in(dir / "summary.csv");
  std::ifstream manifest_in(dir / "manifest.json");
  std::ifstream result_in(dir / "summary.json");
  if (!summary_in || !manifest_in || !result_in) throw ConfigError("missing run outputs in " + outdir);
  EnsembleSummary summary = read_summary_csv(summary_in);
  const auto manifest = nlohmann::json::parse(manifest_in);
  const auto result = nlohmann::json::parse(result_in);
  summary.atoms = std::stoi(manifest["config"]["N"].get<std::string>());
  summary.kappa_tilde = manifest["plan"]["kappa_tilde"].get<double>();
  const double delta_t = result["delta_t"].is_number() ? result["delta_t"].get<double>() : 0.0;
  const auto c = compare_to_theory(summary, delta_t, eta, bias);
  std::cout << "time,tau,mean_xi2,theory,z\n" << std::setprecision(12);
  for (std::size_t i = 0; i < summary.times.size(); ++i)
    std::cout << summary.times[i] << ',' << c.tau[i] << ',' << summary.mean_xi2[i] << ',' << c.theory[i] << ','
              << c.z[i] << '\n';
  std::cerr << "delta_t " << c.delta_t << ", max |z| near minimum " << c.max_abs_z_near_min << " over "
            << c.points_near_min << " points: " << (c.consistent ? "consistent" : "DEPARTS") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional spin squeezing by continuous QND measurement"};
  app.set_version_flag("--version", QND_VERSION);
  app.require_subcommand(1);

  int atoms = 160;
  double eta = 1.0;
  double tau_max = 2.0;
  int points = 201;
  auto* theory_cmd = app.add_subcommand("theory", "Emit closed-form curves as CSV");
  theory_cmd->add_option("--atoms,-N", atoms, "Atom number");
  theory_cmd->add_option("--eta", eta, "Detection efficiency");
  theory_cmd->add_option("--tau-max", tau_max, "Largest scaled time");
  theory_cmd->add_option("--points", points, "Number of grid points");

  std::string check_config;
  auto* check_cmd = app.add_subcommand("check", "Regime diagnostics for a configuration");
  check_cmd->add_option("--config", check_config, "Config file")->required()->check(CLI::ExistingFile);

  Overrides run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run one ensemble");
  add_run_flags(run_cmd, run_flags);

  Overrides sweep_flags;
  std::string axis = "N";
  std::vector<double> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run one ensemble per parameter value");
  add_run_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--axis", axis, "N, g, kappa or epsilon");
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');

  std::string table;
  std::string kind = "xi2";
  ScalingFitOptions fit_options;
  bool unweighted = false;
  std::optional<double> transient_c;
  auto* fit_cmd = app.add_subcommand("fit", "Power-law fit of a sweep table");
  fit_cmd->add_option("--table", table, "sweep.csv")->required();
  fit_cmd->add_option("--kind", kind, "xi2 or topt");
  fit_cmd->add_option("--min-atoms", fit_options.min_atoms, "Smallest N included");
  fit_cmd->add_flag("--unweighted", unweighted, "Ignore Monte Carlo errors");
  fit_cmd->add_option("--transient-c", transient_c, "Subtract 2c/kappa from t_m before fitting");

  std::string compare_dir = "out";
  double compare_eta = 1.0;
  double bias = 0.0;
  auto* compare_cmd = app.add_subcommand("compare", "Compare a run with the shifted no-feedback average");
  compare_cmd->add_option("--outdir", compare_dir, "Directory of a finished run");
  compare_cmd->add_option("--eta", compare_eta, "Detection efficiency");
  compare_cmd->add_option("--bias", bias, "Systematic sigma added in quadrature");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*theory_cmd) return cmd_theory(atoms, eta, tau_max, points);
    if (*check_cmd) {
      print_check(load_config(check_config).sim.params);
      return 0;
    }
    if (*run_cmd) return cmd_run(run_flags);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, axis, values);
    if (*fit_cmd) {
      fit_options.weighted = !unweighted;
      if (transient_c) {
        fit_options.transient_correction = true;
        fit_options.transient_c = *transient_c;
      }
      return cmd_fit(table, kind, fit_options);
    }
    if (*compare_cmd) return cmd_compare(compare_dir, compare_eta, bias);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << " (seed " << e.seed() << ", step " << e.step() << ")\n";
    return kNumericalExit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
