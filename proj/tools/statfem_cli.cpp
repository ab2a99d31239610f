#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "statfem/chain_io.hpp"
#include "statfem/config.hpp"
#include "statfem/diagnostics.hpp"
#include "statfem/experiment.hpp"

namespace {

statfem::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return statfem::ExperimentConfig{};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return statfem::parse_config(buf.str());
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t threads = 1;
  std::string sampler;
  double eta = 0.0;
  bool eta_set = false;
  std::size_t mesh_n = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "experiment config file");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seed, "base RNG seed")->each([&](const std::string&) { f.seed_set = true; });
  cmd->add_option("--threads", f.threads, "worker threads for parallel chains");
  cmd->add_option("--sampler", f.sampler, "sampler kind (ula|pula|mala|pmala|pcn|exact)");
  cmd->add_option("--eta", f.eta, "stepsize override")->each([&](const std::string&) { f.eta_set = true; });
  cmd->add_option("--mesh-n", f.mesh_n, "cells per mesh side");
}

int run(const CommonFlags& f, statfem::ExperimentKind experiment, bool keep_posterior_kind) {
  statfem::ExperimentConfig cfg = load_config(f.config_path);
  if (!(keep_posterior_kind && cfg.is_posterior())) cfg.experiment = experiment;
  if (f.seed_set) cfg.seed = f.seed;
  if (!f.sampler.empty()) cfg.sampler = statfem::sampler_from_string(f.sampler);
  if (f.eta_set) cfg.eta = f.eta;
  if (f.mesh_n > 0) cfg.mesh_n = f.mesh_n;
  statfem::validate_config(cfg);

  std::string out_dir = cfg.output_dir;
  if (!f.out_dir.empty()) out_dir = f.out_dir;
  if (const char* env = std::getenv("SFEM_OUT"); env && *env) out_dir = env;

  const auto res = statfem::run_experiment(cfg, out_dir, f.threads);
  if (res.exit_status != 0) {
    std::cerr << "experiment failed: " << res.error << "\n";
  } else {
    for (const auto& file : res.files) std::cout << file.string() << "\n";
  }
  return res.exit_status;
}

int diagnose(const std::vector<std::string>& paths) {
  std::cout << "file,K,d,accept_rate,eta_final,ess_coord100\n";
  for (const auto& p : paths) {
    const auto data = statfem::read_chain(p);
    const auto& rec = data.record;
    double chain_ess = std::nan("");
    if (rec.n_samples() >= 100 && rec.dim > 0) {
      const std::size_t coord = std::min<std::size_t>(100, rec.dim - 1);
      std::vector<double> series(rec.n_samples());
      for (std::size_t k = 0; k < series.size(); ++k) series[k] = rec.sample(k)[coord];
      try {
        chain_ess = statfem::ess(series);
      } catch (const std::invalid_argument&) {
      }
    }
    std::cout << p << ',' << rec.n_samples() << ',' << rec.dim << ',' << rec.accept_rate << ','
              << rec.eta_final << ',' << chain_ess << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statFEM Langevin samplers for the 2D stochastic Poisson equation"};
  app.require_subcommand(1);

  CommonFlags prior_f, post_f, cond_f, bounds_f;
  auto* prior = app.add_subcommand("sample-prior", "sample the marginal prior p(u)");
  add_common(prior, prior_f);
  auto* post = app.add_subcommand("sample-posterior", "sample the marginal posterior p(u|y)");
  add_common(post, post_f);
  auto* cond = app.add_subcommand("condition-study", "condition numbers across mesh levels");
  add_common(cond, cond_f);
  auto* bounds = app.add_subcommand("verify-bounds", "KL/W2 convergence bound sweeps");
  add_common(bounds, bounds_f);

  std::vector<std::string> chain_paths;
  auto* diag = app.add_subcommand("diagnostics", "summarise chain files");
  diag->add_option("chains", chain_paths, "chain files to inspect")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prior->parsed()) return run(prior_f, statfem::ExperimentKind::prior, false);
    if (post->parsed()) return run(post_f, statfem::ExperimentKind::posterior_linear, true);
    if (cond->parsed()) return run(cond_f, statfem::ExperimentKind::conditioning, false);
    if (bounds->parsed()) return run(bounds_f, statfem::ExperimentKind::bounds, false);
    if (diag->parsed()) return diagnose(chain_paths);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
