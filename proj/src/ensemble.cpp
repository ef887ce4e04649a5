#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "qnd/harness.hpp"
#include "qnd/theory.hpp"

namespace qnd {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t trajectory_seed(std::uint64_t base_seed, std::size_t index) {
  return splitmix64(base_seed + (static_cast<std::uint64_t>(index) + 1) * 0x9E3779B97F4A7C15ULL);
}

namespace {

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int worker_count(int requested, int jobs) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(n, 1, std::max(jobs, 1));
}

std::size_t argmin_finite(const std::vector<double>& v) {
  std::size_t best = v.size();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::isfinite(v[i]) && (best == v.size() || v[i] < v[best])) best = i;
  return best;
}

}  // namespace

EnsembleRun run_ensemble(const RunConfig& config, const EnsembleOptions& options) {
  if (config.trajectories < 1) throw ConfigError("M must be at least 1");
  config.sim.validate();
  const auto started = std::chrono::steady_clock::now();

  EnsembleRun run;
  auto& manifest = run.manifest;
  manifest.config = config_snapshot(config);
  manifest.base_seed = config.base_seed;
  manifest.trajectories = config.trajectories;
  manifest.version = QND_VERSION;
  manifest.started_utc = utc_now();
  manifest.plan = plan_steps(config.sim);
  manifest.threads = worker_count(options.threads, config.trajectories);

  const auto m = static_cast<std::size_t>(config.trajectories);
  std::vector<std::optional<TrajectoryRecord>> results(m);
  std::vector<std::optional<FailedTrajectory>> failures(m);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < m; i = next++) {
      const std::uint64_t seed = trajectory_seed(config.base_seed, i);
      try {
        TrajectoryRecord record = run_trajectory(config.sim, seed);
        fill_squeezing(record);
        results[i] = std::move(record);
      } catch (const NumericalError& e) {
        failures[i] = FailedTrajectory{i, seed, e.step(), e.what()};
      }
    }
  };
  if (manifest.threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(manifest.threads);
    for (int t = 0; t < manifest.threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < m; ++i) {
    if (results[i]) {
      run.records.push_back(std::move(*results[i]));
    } else if (failures[i]) {
      manifest.failures.push_back(*failures[i]);
    }
  }
  manifest.effective_trajectories = static_cast<int>(run.records.size());
  if (run.records.empty()) {
    const auto& f = manifest.failures.front();
    throw NumericalError("every trajectory failed; first: " + f.message, f.seed, f.step);
  }

  run.summary = ensemble_average(run.records);
  run.optimum = optimal_point(run.summary);
  run.xi2_m_sigma = run.summary.stderr_xi2[run.optimum.index];
  run.t_m_sigma = run.records.size() > 1 ? bootstrap_optimal_time_sigma(run.records, 200, config.base_seed) : 0.0;
  if (config.sim.model == Model::full) {
    try {
      const auto tr = transient_time(run.summary.times, run.summary.mean_n, manifest.plan.mean_photons,
                                     config.sim.params.kappa);
      run.delta_t = tr.delta_t;
      run.c = tr.c;
    } catch (const std::domain_error&) {
      run.delta_t = std::numeric_limits<double>::quiet_NaN();
      run.c = std::numeric_limits<double>::quiet_NaN();
    }
  }
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (options.persist) persist_run(run, config.outdir, options.write_trajectories);
  if (!options.keep_records) run.records.clear();
  return run;
}

double bootstrap_optimal_time_sigma(const std::vector<TrajectoryRecord>& records, int resamples,
                                    std::uint64_t seed) {
  if (records.size() < 2 || resamples < 2) return 0.0;
  const std::size_t m = records.size();
  const std::size_t samples = records.front().times.size();
  std::mt19937_64 rng(splitmix64(seed ^ 0xB0075712A9ULL));
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::vector<double> mean(samples);
  double sum = 0.0, sum_sq = 0.0;
  for (int b = 0; b < resamples; ++b) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const auto& xi2 = records[pick(rng)].xi2;
      for (std::size_t t = 0; t < samples; ++t) mean[t] += xi2[t];
    }
    const std::size_t best = argmin_finite(mean);
    const double t_m = best < samples ? records.front().times[best] : 0.0;
    sum += t_m;
    sum_sq += t_m * t_m;
  }
  const double mu = sum / resamples;
  return std::sqrt(std::max(0.0, (sum_sq - resamples * mu * mu) / (resamples - 1)));
}

SweepAxis parse_axis(const std::string& text) {
  if (text == "N") return SweepAxis::atoms;
  if (text == "g") return SweepAxis::g;
  if (text == "kappa") return SweepAxis::kappa;
  if (text == "epsilon") return SweepAxis::epsilon;
  throw ConfigError("unknown sweep axis '" + text + "' (expected N, g, kappa or epsilon)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::atoms: return "N";
    case SweepAxis::g: return "g";
    case SweepAxis::kappa: return "kappa";
    case SweepAxis::epsilon: return "epsilon";
  }
  return "?";
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) throw ConfigError("sweep values must be positive");
    if (i > 0 && !(values[i] > values[i - 1])) throw ConfigError("sweep values must be strictly increasing");
    if (axis == SweepAxis::atoms && values[i] != std::floor(values[i])) throw ConfigError("N values must be integers");
  }
  if (trajectories < 1) throw ConfigError("M must be at least 1");
}

std::vector<SweepRow> sweep(const SweepSpec& spec, const EnsembleOptions& options) {
  spec.validate();
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    RunConfig point = spec.base;
    point.trajectories = spec.trajectories;
    point.base_seed = splitmix64(spec.base.base_seed + i);
    auto& p = point.sim.params;
    const double v = spec.values[i];
    switch (spec.axis) {
      case SweepAxis::atoms: p.atoms = static_cast<int>(v); break;
      case SweepAxis::g: p.g = v; break;
      case SweepAxis::kappa: p.kappa = v; break;
      case SweepAxis::epsilon: p.epsilon = v; break;
    }
    point.outdir = (std::filesystem::path(spec.base.outdir) / ("point_" + std::to_string(i))).string();

    SweepRow row;
    row.value = v;
    row.atoms = p.atoms;
    row.kappa = p.kappa;
    try {
      const EnsembleRun run = run_ensemble(point, options);
      row.kappa_tilde = run.summary.kappa_tilde;
      row.xi2_m = run.optimum.xi2_m;
      row.xi2_sigma = run.xi2_m_sigma;
      row.t_m = run.optimum.t_m;
      row.t_sigma = run.t_m_sigma;
      row.effective_trajectories = run.manifest.effective_trajectories;
      row.monotone = run.optimum.monotone;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

FitKind parse_fit_kind(const std::string& text) {
  if (text == "xi2") return FitKind::xi2;
  if (text == "topt") return FitKind::topt;
  throw ConfigError("unknown fit kind '" + text + "' (expected xi2 or topt)");
}

FitResult fit_scaling(const std::vector<SweepRow>& rows, FitKind kind, const ScalingFitOptions& options) {
  std::vector<PowerLawPoint> points;
  for (const auto& r : rows) {
    if (!r.ok || r.atoms < options.min_atoms) continue;
    if (kind == FitKind::xi2) {
      points.push_back({static_cast<double>(r.atoms), r.xi2_m, r.xi2_sigma});
    } else {
      double t = r.t_m;
      if (options.transient_correction) t -= 2.0 * options.transient_c / r.kappa;
      points.push_back({static_cast<double>(r.atoms), t * r.kappa_tilde, r.t_sigma * r.kappa_tilde});
    }
  }
  return fit_power_law(points, options.weighted);
}

TheoryComparison compare_to_theory(const EnsembleSummary& summary, double delta_t, double eta, double bias,
                                   double window) {
  TheoryComparison c;
  c.delta_t = delta_t;
  const std::size_t n = summary.times.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  c.tau.resize(n);
  c.theory.resize(n);
  c.z.resize(n);
  double theory_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    c.tau[i] = summary.kappa_tilde * (summary.times[i] - delta_t);
    c.theory[i] = c.tau[i] >= 0.0 ? theory::xi2_average_nofeedback(c.tau[i], summary.atoms, eta) : nan;
    if (std::isfinite(c.theory[i])) theory_min = std::min(theory_min, c.theory[i]);
    const double sigma = std::hypot(summary.stderr_xi2[i], bias);
    const double dev = summary.mean_xi2[i] - c.theory[i];
    c.z[i] = sigma > 0.0 ? dev / sigma : (dev == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), dev));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(c.theory[i]) || c.theory[i] > window * theory_min) continue;
    ++c.points_near_min;
    c.max_abs_z_near_min = std::max(c.max_abs_z_near_min, std::abs(c.z[i]));
    c.max_rel_dev_near_min =
        std::max(c.max_rel_dev_near_min, std::abs(summary.mean_xi2[i] - c.theory[i]) / c.theory[i]);
  }
  c.consistent = c.points_near_min > 0 && c.max_abs_z_near_min <= 2.0;
  return c;
}

}  // namespace qnd
