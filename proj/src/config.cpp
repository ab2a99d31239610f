#include "statfem/config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace statfem {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::prior: return "prior";
    case ExperimentKind::posterior_linear: return "posterior_linear";
    case ExperimentKind::posterior_nonlinear: return "posterior_nonlinear";
    case ExperimentKind::conditioning: return "conditioning";
    case ExperimentKind::bounds: return "bounds";
  }
  throw std::logic_error("unknown experiment kind");
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::ula: return "ula";
    case SamplerKind::pula: return "pula";
    case SamplerKind::mala: return "mala";
    case SamplerKind::pmala: return "pmala";
    case SamplerKind::pcn: return "pcn";
    case SamplerKind::exact: return "exact";
  }
  throw std::logic_error("unknown sampler kind");
}

std::string to_string(PreconditionerKind kind) {
  switch (kind) {
    case PreconditionerKind::identity: return "identity";
    case PreconditionerKind::prior_mean_theta: return "prior_mean_theta";
    case PreconditionerKind::posterior_mean_theta: return "posterior_mean_theta";
    case PreconditionerKind::gauss_newton_map: return "gauss_newton_map";
  }
  throw std::logic_error("unknown preconditioner kind");
}

ExperimentKind experiment_from_string(const std::string& s) {
  if (s == "prior") return ExperimentKind::prior;
  if (s == "posterior_linear") return ExperimentKind::posterior_linear;
  if (s == "posterior_nonlinear") return ExperimentKind::posterior_nonlinear;
  if (s == "conditioning") return ExperimentKind::conditioning;
  if (s == "bounds") return ExperimentKind::bounds;
  throw std::invalid_argument("experiment: unknown value '" + s + "'");
}

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "ula") return SamplerKind::ula;
  if (s == "pula") return SamplerKind::pula;
  if (s == "mala") return SamplerKind::mala;
  if (s == "pmala") return SamplerKind::pmala;
  if (s == "pcn") return SamplerKind::pcn;
  if (s == "exact") return SamplerKind::exact;
  throw std::invalid_argument("sampler: unknown value '" + s + "'");
}

PreconditionerKind ExperimentConfig::preconditioner() const {
  if (sampler != SamplerKind::pula && sampler != SamplerKind::pmala) {
    return PreconditionerKind::identity;
  }
  switch (experiment) {
    case ExperimentKind::posterior_linear: return PreconditionerKind::posterior_mean_theta;
    case ExperimentKind::posterior_nonlinear: return PreconditionerKind::gauss_newton_map;
    default: return PreconditionerKind::prior_mean_theta;
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v, bool allow_zero = false) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument(key + ": expected a count, got '" + v + "'");
  }
  if (!allow_zero && out == 0) throw std::invalid_argument(key + ": must be positive");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return out;
  } catch (...) {
    throw std::invalid_argument(key + ": expected a real, got '" + v + "'");
  }
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.sampler == SamplerKind::pcn && !cfg.is_posterior()) {
    throw std::invalid_argument("sampler: pcn requires a posterior experiment");
  }
  if (cfg.sampler == SamplerKind::exact &&
      cfg.experiment == ExperimentKind::posterior_nonlinear) {
    throw std::invalid_argument("sampler: exact is unavailable for the nonlinear posterior");
  }
  if (!(cfg.gp_sigma > 0.0) || !(cfg.gp_length_scale > 0.0)) {
    throw std::invalid_argument("gp_sigma/gp_length_scale: must be positive");
  }
  if (!(cfg.beta_xi > 0.0)) throw std::invalid_argument("beta_xi: must be positive");
  if (!(cfg.sigma_e > 0.0)) throw std::invalid_argument("sigma_e: must be positive");
  if (cfg.output_dir.empty()) throw std::invalid_argument("output_dir: must be nonempty");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "experiment") cfg.experiment = experiment_from_string(val);
    else if (key == "mesh_n") cfg.mesh_n = parse_count(key, val);
    else if (key == "sampler") cfg.sampler = sampler_from_string(val);
    else if (key == "eta") {
      cfg.eta = val == "auto" ? 0.0 : parse_real(key, val);
      if (cfg.eta < 0.0) cfg.eta = 0.0;  // any non-positive value means auto
    }
    else if (key == "n_inner") cfg.n_inner = parse_count(key, val);
    else if (key == "n_samples") cfg.n_samples = parse_count(key, val);
    else if (key == "n_warmup") cfg.n_warmup = parse_count(key, val, /*allow_zero=*/true);
    else if (key == "n_chains") cfg.n_chains = parse_count(key, val);
    else if (key == "seed") cfg.seed = parse_count(key, val, /*allow_zero=*/true);
    else if (key == "gp_sigma") cfg.gp_sigma = parse_real(key, val);
    else if (key == "gp_length_scale") cfg.gp_length_scale = parse_real(key, val);
    else if (key == "beta_xi") cfg.beta_xi = parse_real(key, val);
    else if (key == "sigma_e") cfg.sigma_e = parse_real(key, val);
    else if (key == "scale_factor") cfg.scale_factor = parse_real(key, val);
    else if (key == "n_obs") cfg.n_obs = parse_count(key, val);
    else if (key == "d_y") cfg.d_y = parse_count(key, val);
    else if (key == "output_dir") cfg.output_dir = val;
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  validate_config(cfg);
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "experiment = " << to_string(cfg.experiment) << "\n";
  out << "mesh_n = " << cfg.mesh_n << "\n";
  out << "sampler = " << to_string(cfg.sampler) << "\n";
  if (cfg.eta <= 0.0) out << "eta = auto\n";
  else out << "eta = " << cfg.eta << "\n";
  out << "n_inner = " << cfg.n_inner << "\n";
  out << "n_samples = " << cfg.n_samples << "\n";
  out << "n_warmup = " << cfg.n_warmup << "\n";
  out << "n_chains = " << cfg.n_chains << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "gp_sigma = " << cfg.gp_sigma << "\n";
  out << "gp_length_scale = " << cfg.gp_length_scale << "\n";
  out << "beta_xi = " << cfg.beta_xi << "\n";
  out << "sigma_e = " << cfg.sigma_e << "\n";
  out << "scale_factor = " << cfg.scale_factor << "\n";
  out << "n_obs = " << cfg.n_obs << "\n";
  out << "d_y = " << cfg.d_y << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  return out.str();
}

}  // namespace statfem
