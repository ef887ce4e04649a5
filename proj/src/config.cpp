#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qnd/harness.hpp"

namespace qnd {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string located(int line, const std::string& message) {
  return "config line " + std::to_string(line) + ": " + message;
}

double parse_double(const std::string& key, const std::string& text, int line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !std::isfinite(v)) throw ConfigError(located(line, key + " is not a number: '" + text + "'"));
  return v;
}

long long parse_integer(const std::string& key, const std::string& text, int line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(located(line, key + " must be an integer: '" + text + "'"));
  return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text, int line) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(located(line, key + " must be an unsigned integer: '" + text + "'"));
  return v;
}

std::string format(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  RunConfig config;
  auto& sim = config.sim;
  auto& p = sim.params;
  bool has_repr = false;
  bool has_time = false;
  std::set<std::string> seen;

  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(located(line, "expected key = value"));
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (value.empty()) throw ConfigError(located(line, "missing value for " + key));
    if (!seen.insert(key).second) throw ConfigError(located(line, "duplicate key " + key));

    if (key == "model") {
      sim.model = parse_model(value);
    } else if (key == "N") {
      const long long n = parse_integer(key, value, line);
      if (n < 1 || n > 10'000'000) throw ConfigError(located(line, "N out of range"));
      p.atoms = static_cast<int>(n);
    } else if (key == "g") {
      p.g = parse_double(key, value, line);
    } else if (key == "delta") {
      p.delta = parse_double(key, value, line);
    } else if (key == "kappa") {
      p.kappa = parse_double(key, value, line);
    } else if (key == "epsilon") {
      p.epsilon = parse_double(key, value, line);
    } else if (key == "eta") {
      p.eta = parse_double(key, value, line);
    } else if (key == "scheme") {
      sim.scheme = parse_scheme(value);
    } else if (key == "repr") {
      sim.repr = parse_repr(value);
      has_repr = true;
    } else if (key == "R") {
      const long long r = parse_integer(key, value, line);
      if (r < 1 || r > 1'000'000'000) throw ConfigError(located(line, "R out of range"));
      sim.resolution = static_cast<int>(r);
    } else if (key == "T") {
      sim.total_time = parse_double(key, value, line);
      has_time = true;
    } else if (key == "stride") {
      sim.sample_stride = parse_integer(key, value, line);
    } else if (key == "M") {
      const long long m = parse_integer(key, value, line);
      if (m < 1 || m > 100'000'000) throw ConfigError(located(line, "M out of range"));
      config.trajectories = static_cast<int>(m);
    } else if (key == "seed") {
      config.base_seed = parse_unsigned(key, value, line);
    } else if (key == "outdir") {
      config.outdir = value;
    } else {
      throw ConfigError(located(line, "unknown key '" + key + "'"));
    }
  }
  if (!has_repr) sim.repr = p.eta < 1.0 ? StateRepr::mixed_sme : StateRepr::pure_sse;
  if (!has_time) sim.total_time = sim.model == Model::full ? 1.0 / 1e-3 : 1.0;
  sim.seed = config.base_seed;
  sim.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

std::map<std::string, std::string> config_snapshot(const RunConfig& config) {
  const auto& sim = config.sim;
  const auto& p = sim.params;
  return {
      {"model", to_string(sim.model)},
      {"N", std::to_string(p.atoms)},
      {"g", format(p.g)},
      {"delta", format(p.delta)},
      {"kappa", format(p.kappa)},
      {"epsilon", format(p.epsilon)},
      {"eta", format(p.eta)},
      {"scheme", to_string(sim.scheme)},
      {"repr", to_string(sim.repr)},
      {"R", std::to_string(sim.resolution)},
      {"T", format(sim.total_time)},
      {"stride", std::to_string(sim.sample_stride)},
      {"M", std::to_string(config.trajectories)},
      {"seed", std::to_string(config.base_seed)},
      {"outdir", config.outdir},
  };
}

}  // namespace qnd
