#pragma once

// Run configuration, ensemble orchestration, sweeps, scaling fits, theory
// comparison and on-disk persistence.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "qnd/dynamics.hpp"
#include "qnd/squeezing.hpp"

namespace qnd {

/// Time-step bias of xi2_m for finite-step integrators at R = 1000.
inline constexpr double kTimeStepBias = 1.5e-2;

struct RunConfig {
  SimConfig sim;
  int trajectories = 400;
  std::uint64_t base_seed = 0;
  std::string outdir = "out";
};

/// Parses flat "key = value" text. Blank lines and lines starting with '#'
/// are skipped. Keys: model, N, g, delta, kappa, epsilon, eta, scheme, R, T,
/// stride, M, seed, outdir, repr. Without repr, eta < 1 selects the mixed
/// SME and eta = 1 the pure SSE.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
/// Key/value snapshot that parse_config reads back to the same RunConfig.
std::map<std::string, std::string> config_snapshot(const RunConfig& config);

std::uint64_t splitmix64(std::uint64_t x);
/// Seed of trajectory i: splitmix64(base + (i + 1) * 0x9E3779B97F4A7C15).
std::uint64_t trajectory_seed(std::uint64_t base_seed, std::size_t index);

struct FailedTrajectory {
  std::size_t index;
  std::uint64_t seed;
  long long step;
  std::string message;
};

struct RunManifest {
  std::map<std::string, std::string> config;
  std::uint64_t base_seed = 0;
  int trajectories = 0;
  int effective_trajectories = 0;
  std::string version;
  std::string started_utc;
  double wall_seconds = 0;
  int threads = 0;
  StepPlan plan{};
  std::vector<FailedTrajectory> failures;
  std::vector<std::string> outputs;
};

struct EnsembleOptions {
  int threads = 0;  // 0 uses the hardware concurrency
  bool keep_records = true;
  bool persist = false;            // write summary.csv, summary.json, manifest.json to outdir
  bool write_trajectories = false;  // also traj_#####.csv
};

struct EnsembleRun {
  EnsembleSummary summary;
  std::vector<TrajectoryRecord> records;  // successful trajectories, in index order
  RunManifest manifest;
  OptimalPoint optimum{};
  double xi2_m_sigma = 0;  // standard error of the mean at t_m
  double t_m_sigma = 0;    // bootstrap over trajectories
  double delta_t = 0;      // photon fill transient (full model)
  double c = 0;            // kappa * delta_t / 2
};

/// Runs M trajectories with seeds trajectory_seed(base_seed, i) on a bounded
/// worker pool. Results are aggregated in index order, so the output does not
/// depend on the number of workers. Failed trajectories are excluded and
/// listed in the manifest; throws NumericalError when all of them fail.
EnsembleRun run_ensemble(const RunConfig& config, const EnsembleOptions& options = {});

/// Standard deviation of the argmin time of the mean xi2 series under
/// resampling of trajectories with replacement.
double bootstrap_optimal_time_sigma(const std::vector<TrajectoryRecord>& records, int resamples,
                                    std::uint64_t seed);

enum class SweepAxis { atoms, g, kappa, epsilon };
SweepAxis parse_axis(const std::string& text);
std::string to_string(SweepAxis axis);

struct SweepSpec {
  SweepAxis axis = SweepAxis::atoms;
  std::vector<double> values;
  RunConfig base;
  int trajectories = 400;

  void validate() const;
};

struct SweepRow {
  double value = 0;
  int atoms = 0;
  double kappa = 0;
  double kappa_tilde = 0;
  double xi2_m = 0;
  double xi2_sigma = 0;
  double t_m = 0;
  double t_sigma = 0;
  int effective_trajectories = 0;
  bool monotone = false;
  bool ok = false;
  std::string error;
};

/// One ensemble per value; a failing point is recorded and the sweep continues.
std::vector<SweepRow> sweep(const SweepSpec& spec, const EnsembleOptions& options = {});

enum class FitKind { xi2, topt };
FitKind parse_fit_kind(const std::string& text);

struct ScalingFitOptions {
  double min_atoms = 1000;
  bool weighted = true;
  bool transient_correction = false;  // subtract 2 c / kappa from t_m
  double transient_c = 3.0;
};

/// For topt, each t_m is scaled by its kappa_tilde before fitting.
FitResult fit_scaling(const std::vector<SweepRow>& rows, FitKind kind, const ScalingFitOptions& options = {});

struct TheoryComparison {
  std::vector<double> tau;     // kappa_tilde (t - delta_t)
  std::vector<double> theory;  // NaN before the shifted origin
  std::vector<double> z;
  double delta_t = 0;
  double max_abs_z_near_min = 0;
  double max_rel_dev_near_min = 0;
  int points_near_min = 0;
  bool consistent = false;  // max |z| <= 2 near the minimum
};

/// Compares E[xi2](t) with the no-feedback average shifted by delta_t. The
/// per-point sigma combines the standard error with `bias`. The minimum
/// neighbourhood is where the shifted theory is within `window` times its
/// minimum.
TheoryComparison compare_to_theory(const EnsembleSummary& summary, double delta_t, double eta, double bias = 0.0,
                                   double window = 1.2);

// Persistence.
void write_summary_csv(const EnsembleSummary& summary, std::ostream& out);
/// Reads the columns written by write_summary_csv; other summary fields stay empty.
EnsembleSummary read_summary_csv(std::istream& in);
void write_summary_json(const EnsembleRun& run, std::ostream& out);
void write_manifest_json(const RunManifest& manifest, std::ostream& out);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);
std::vector<SweepRow> read_sweep_csv(std::istream& in);
/// Writes summary.csv, summary.json and manifest.json (and trajectories if
/// requested) into outdir and records the paths in the manifest.
void persist_run(EnsembleRun& run, const std::filesystem::path& outdir, bool write_trajectories);

}  // namespace qnd
