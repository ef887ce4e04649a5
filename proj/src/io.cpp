#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "qnd/harness.hpp"

namespace qnd {

namespace {

using nlohmann::json;

// JSON has no NaN; missing values become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_summary_csv(const EnsembleSummary& summary, std::ostream& out) {
  out << "time,mean_Jx,mean_Jy,mean_Jz,mean_n,mean_xi2,stderr_xi2\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < summary.times.size(); ++i) {
    out << summary.times[i] << ',' << summary.mean_jx[i] << ',' << summary.mean_jy[i] << ',' << summary.mean_jz[i]
        << ',' << summary.mean_n[i] << ',' << summary.mean_xi2[i] << ',' << summary.stderr_xi2[i] << '\n';
  }
}

EnsembleSummary read_summary_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("time,mean_Jx,", 0) != 0) throw ConfigError("not a summary table");
  EnsembleSummary s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 7) throw ConfigError("summary table row is malformed");
    s.times.push_back(v[0]);
    s.mean_jx.push_back(v[1]);
    s.mean_jy.push_back(v[2]);
    s.mean_jz.push_back(v[3]);
    s.mean_n.push_back(v[4]);
    s.mean_xi2.push_back(v[5]);
    s.stderr_xi2.push_back(v[6]);
  }
  return s;
}

void write_summary_json(const EnsembleRun& run, std::ostream& out) {
  json j;
  j["xi2_m"] = number(run.optimum.xi2_m);
  j["t_m"] = number(run.optimum.t_m);
  j["delta_t"] = number(run.delta_t);
  j["c"] = number(run.c);
  j["fit"] = nullptr;
  j["xi2_m_sigma"] = number(run.xi2_m_sigma);
  j["t_m_sigma"] = number(run.t_m_sigma);
  j["monotone"] = run.optimum.monotone;
  j["trajectories"] = run.summary.trajectories;
  j["stderr_defined"] = run.summary.stderr_defined;
  out << j.dump(2) << '\n';
}

void write_manifest_json(const RunManifest& m, std::ostream& out) {
  json j;
  j["config"] = m.config;
  j["base_seed"] = m.base_seed;
  j["M"] = m.trajectories;
  j["effective_M"] = m.effective_trajectories;
  j["version"] = m.version;
  j["started_utc"] = m.started_utc;
  j["wall_seconds"] = m.wall_seconds;
  j["threads"] = m.threads;
  j["plan"] = {{"mean_photons", m.plan.mean_photons}, {"kappa_tilde", m.plan.kappa_tilde},
               {"cutoff", m.plan.cutoff},             {"omega_max", m.plan.omega_max},
               {"dt", m.plan.dt},                     {"steps", m.plan.steps},
               {"stride", m.plan.stride}};
  json failures = json::array();
  for (const auto& f : m.failures)
    failures.push_back({{"index", f.index}, {"seed", f.seed}, {"step", f.step}, {"message", f.message}});
  j["failures"] = failures;
  j["outputs"] = m.outputs;
  out << j.dump(2) << '\n';
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "value,N,kappa,kappa_tilde,xi2_m,xi2_sigma,t_m,t_sigma,M_eff,monotone,ok,error\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    std::string error = r.error;
    for (auto& ch : error)
      if (ch == ',' || ch == '\n') ch = ';';
    out << r.value << ',' << r.atoms << ',' << r.kappa << ',' << r.kappa_tilde << ',' << r.xi2_m << ','
        << r.xi2_sigma << ',' << r.t_m << ',' << r.t_sigma << ',' << r.effective_trajectories << ','
        << (r.monotone ? 1 : 0) << ',' << (r.ok ? 1 : 0) << ',' << error << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("value,N,", 0) != 0) throw ConfigError("not a sweep table");
  std::vector<SweepRow> rows;
  int number_line = 1;
  while (std::getline(in, line)) {
    ++number_line;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() == 11) cells.emplace_back();
    if (cells.size() != 12) throw ConfigError("sweep table line " + std::to_string(number_line) + " is malformed");
    try {
      SweepRow r;
      r.value = std::stod(cells[0]);
      r.atoms = std::stoi(cells[1]);
      r.kappa = std::stod(cells[2]);
      r.kappa_tilde = std::stod(cells[3]);
      r.xi2_m = std::stod(cells[4]);
      r.xi2_sigma = std::stod(cells[5]);
      r.t_m = std::stod(cells[6]);
      r.t_sigma = std::stod(cells[7]);
      r.effective_trajectories = std::stoi(cells[8]);
      r.monotone = cells[9] == "1";
      r.ok = cells[10] == "1";
      r.error = cells[11];
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ConfigError("sweep table line " + std::to_string(number_line) + " has a bad number");
    }
  }
  return rows;
}

void persist_run(EnsembleRun& run, const std::filesystem::path& outdir, bool write_trajectories) {
  std::filesystem::create_directories(outdir);
  auto& outputs = run.manifest.outputs;
  outputs.clear();
  const auto summary_csv = outdir / "summary.csv";
  const auto summary_json = outdir / "summary.json";
  const auto manifest_json = outdir / "manifest.json";
  {
    auto out = open_output(summary_csv);
    write_summary_csv(run.summary, out);
  }
  {
    auto out = open_output(summary_json);
    write_summary_json(run, out);
  }
  outputs.push_back(summary_csv.string());
  outputs.push_back(summary_json.string());
  if (write_trajectories) {
    for (std::size_t i = 0; i < run.records.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "traj_%05zu.csv", i);
      const auto path = outdir / name;
      auto out = open_output(path);
      write_trajectory_csv(run.records[i], out);
      outputs.push_back(path.string());
    }
  }
  outputs.push_back(manifest_json.string());
  auto out = open_output(manifest_json);
  write_manifest_json(run.manifest, out);
}

}  // namespace qnd
