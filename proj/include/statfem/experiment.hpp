#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "statfem/config.hpp"
#include "statfem/diagnostics.hpp"
#include "statfem/samplers.hpp"

namespace statfem {

/// Fully assembled experiment state; heap-allocated so the Model's raw
/// pointers into it stay valid.
struct ExperimentSetup {
  ExperimentConfig cfg;
  Mesh mesh;
  std::vector<double> coords;
  GpSpec gp;
  KroneckerFactor factor;
  std::vector<double> theta_bar;
  FemSystem sys_bar;
  ObservationOperator obs;        // posterior experiments only
  Eigen::MatrixXd data;           // d_y x n_obs
  std::unique_ptr<Likelihood> likelihood;
  std::vector<double> u_map;      // nonlinear posterior only
  Preconditioner precond = Preconditioner::make_identity(0);
  Model model;
  std::vector<double> u0;
};

/// Build mesh, GP factor, data, likelihood, preconditioner, and the initial
/// state prescribed for the experiment (exact draw for prior/linear, MAP for
/// nonlinear).
std::unique_ptr<ExperimentSetup> build_setup(const ExperimentConfig& cfg);

/// One chain of the configured sampler; chain_index selects the RNG stream.
ChainRecord run_chain(const ExperimentSetup& setup, std::size_t chain_index);

/// Reference draws from the exact conditional-marginalised sampler (prior and
/// linear-posterior experiments).
ChainRecord run_exact_reference(const ExperimentSetup& setup, std::size_t n_samples);

struct ExperimentResult {
  int exit_status = 0;
  std::vector<std::filesystem::path> files;
  std::string error;
};

/// Execute the configured experiment end to end: chains on a worker pool,
/// one ChainFile per chain plus summary.csv (or the study CSV for the
/// conditioning/bounds experiments).
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path& out_dir, std::size_t threads = 1);

}  // namespace statfem
