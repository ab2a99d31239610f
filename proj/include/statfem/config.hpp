#pragma once

#include <cstdint>
#include <string>

#include "statfem/potentials.hpp"
#include "statfem/samplers.hpp"

namespace statfem {

enum class ExperimentKind { prior, posterior_linear, posterior_nonlinear, conditioning, bounds };

std::string to_string(ExperimentKind kind);
std::string to_string(SamplerKind kind);
std::string to_string(PreconditionerKind kind);
ExperimentKind experiment_from_string(const std::string& s);
SamplerKind sampler_from_string(const std::string& s);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::prior;
  std::size_t mesh_n = 32;
  SamplerKind sampler = SamplerKind::pula;
  double eta = 0.0;  // <= 0 means auto
  std::size_t n_inner = 10;
  std::size_t n_samples = 10000;
  std::size_t n_warmup = 1000;
  std::size_t n_chains = 1;
  std::uint64_t seed = 0;
  double gp_sigma = 0.1;
  double gp_length_scale = 0.2;
  double beta_xi = 0.05;
  double sigma_e = 0.01;
  double scale_factor = 1.2;
  std::size_t n_obs = 100;
  std::size_t d_y = 128;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  bool is_posterior() const {
    return experiment == ExperimentKind::posterior_linear ||
           experiment == ExperimentKind::posterior_nonlinear;
  }
  /// Preconditioner implied by the sampler/experiment pair.
  PreconditionerKind preconditioner() const;
};

/// Parse a flat key = value document ('#' comments, blank lines allowed).
/// Unknown keys, malformed values, and invalid combinations throw with the
/// offending key named.
ExperimentConfig parse_config(const std::string& text);

/// Inverse of parse_config: parse(render(cfg)) == cfg.
std::string render_config(const ExperimentConfig& cfg);

/// Throws on invalid field combinations (also called by parse_config).
void validate_config(const ExperimentConfig& cfg);

}  // namespace statfem
