#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "statfem/chain_io.hpp"
#include "statfem/config.hpp"
#include "statfem/diagnostics.hpp"
#include "statfem/experiment.hpp"
#include "statfem/fem.hpp"
#include "statfem/gp.hpp"
#include "statfem/rng.hpp"

namespace py = pybind11;
using namespace statfem;

namespace {

std::vector<double> grid_coords(std::size_t n) {
  std::vector<double> coords(n + 1);
  for (std::size_t i = 0; i <= n; ++i) coords[i] = static_cast<double>(i) / static_cast<double>(n);
  return coords;
}

}  // namespace

PYBIND11_MODULE(_statfem, m) {
  m.doc() = "statFEM Langevin samplers for the 2D stochastic Poisson equation";

  m.def("mesh_info", [](std::size_t n) {
    const Mesh mesh = build_mesh(n);
    py::dict info;
    info["n_nodes"] = mesh.n_nodes();
    info["n_cells"] = mesh.cells.size();
    info["n_boundary"] =
        static_cast<std::size_t>(std::count(mesh.boundary_mask.begin(), mesh.boundary_mask.end(), true));
    return info;
  }, py::arg("n_cells_per_side"));

  m.def("assemble_dense",
        [](std::size_t n, std::optional<std::vector<double>> theta, double f_const,
           double beta_xi) {
          const Mesh mesh = build_mesh(n);
          const std::vector<double> th =
              theta ? *theta : std::vector<double>(mesh.n_nodes(), 1.0);
          const FemSystem sys = assemble(mesh, th, f_const, beta_xi);
          return py::make_tuple(to_dense(sys.a), sys.b, sys.g);
        },
        py::arg("n_cells_per_side"), py::arg("theta") = std::nullopt, py::arg("f_const") = 1.0,
        py::arg("beta_xi") = 0.05);

  m.def("sample_theta_field",
        [](std::size_t n, double sigma, double length_scale, std::uint64_t seed) {
          const GpSpec gp{sigma, length_scale, default_log_mean};
          const KroneckerFactor factor = build_kron_factor(grid_coords(n), gp);
          RngStream rng = RngStream::derive(seed, stream_id::kTheta);
          return sample_theta(factor, gp, rng).values;
        },
        py::arg("n_cells_per_side"), py::arg("sigma") = 0.1, py::arg("length_scale") = 0.2,
        py::arg("seed") = 0);

  m.def("sample_conditional_prior",
        [](std::size_t n, std::uint64_t seed, std::size_t n_draws) {
          const Mesh mesh = build_mesh(n);
          const GpSpec gp{0.1, 0.2, default_log_mean};
          const std::vector<double> theta_bar = mean_theta_field(grid_coords(n), gp);
          const FemSystem sys = assemble(mesh, theta_bar, 1.0, 0.05);
          const ConditionalGaussian cond(sys);
          RngStream rng = RngStream::derive(seed, stream_id::kNoise);
          py::array_t<double> out({n_draws, sys.dim()});
          auto view = out.mutable_unchecked<2>();
          for (std::size_t k = 0; k < n_draws; ++k) {
            const std::vector<double> u = cond.sample(rng);
            for (std::size_t j = 0; j < u.size(); ++j) {
              view(static_cast<py::ssize_t>(k), static_cast<py::ssize_t>(j)) = u[j];
            }
          }
          return out;
        },
        py::arg("n_cells_per_side"), py::arg("seed") = 0, py::arg("n_draws") = 1);

  m.def("acf", [](const std::vector<double>& series, std::size_t max_lag) {
    return acf(series, max_lag);
  }, py::arg("series"), py::arg("max_lag"));
  m.def("ess", [](const std::vector<double>& series) { return ess(series); }, py::arg("series"));

  m.def("parse_config", [](const std::string& text) { return render_config(parse_config(text)); },
        py::arg("text"), "parse a config document and return its normalised rendering");

  m.def("run_experiment",
        [](const std::string& config_text, const std::string& out_dir, std::size_t threads) {
          const ExperimentConfig cfg = parse_config(config_text);
          const ExperimentResult res = run_experiment(cfg, out_dir, threads);
          py::dict out;
          out["exit_status"] = res.exit_status;
          std::vector<std::string> files;
          for (const auto& f : res.files) files.push_back(f.string());
          out["files"] = files;
          out["error"] = res.error;
          return out;
        },
        py::arg("config_text"), py::arg("out_dir"), py::arg("threads") = 1);

  m.def("read_chain", [](const std::string& path) {
    const ChainFileData data = read_chain(path);
    const std::size_t k = data.record.n_samples();
    const std::size_t d = data.record.dim;
    py::array_t<double> samples({k, d});
    std::copy(data.record.samples.begin(), data.record.samples.end(),
              samples.mutable_data());
    py::dict out;
    out["samples"] = samples;
    out["metadata"] = data.metadata.dump();
    return out;
  }, py::arg("path"));
}
