#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "json.hpp"
#include "polymix/couplab.hpp"
#include "polymix/experiment.hpp"
#include "polymix/farm.hpp"
#include "polymix/tails.hpp"

namespace py = pybind11;
using namespace polymix;

namespace {

std::string validate(const std::string& text) {
  const auto r = cli::validate_config(text);
  if (!r.ok()) {
    std::string msg;
    for (const auto& e : r.errors) msg += (msg.empty() ? "" : "; ") + e;
    throw py::value_error(msg);
  }
  return r.config->normalized.dump();
}

std::string run(const std::string& text, const std::string& out_dir, unsigned workers) {
  auto r = cli::validate_config(text);
  if (!r.ok()) {
    std::string msg;
    for (const auto& e : r.errors) msg += (msg.empty() ? "" : "; ") + e;
    throw py::value_error(msg);
  }
  r.config->output_dir = out_dir;
  cli::RunResult res;
  try {
    py::gil_scoped_release release;
    res = cli::run_experiment(*r.config, workers == 0 ? farm::default_workers() : workers);
  } catch (const cli::ValidationError& e) {
    throw py::value_error(e.what());
  }
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : res.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return nlohmann::json{{"output_dir", res.output_dir},
                        {"files", files},
                        {"total_trajectories", res.total_trajectories},
                        {"summary", res.summary}}
      .dump();
}

int main_with_args(std::vector<std::string> args) {
  args.insert(args.begin(), "polymix");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "polymix native core";
  m.def("validate_config", &validate, py::arg("text"), "Validate a JSON config; returns the normalized JSON text.");
  m.def("run_experiment", &run, py::arg("text"), py::arg("out_dir"), py::arg("workers") = 0,
        "Run a JSON config into out_dir; returns the result as JSON text. workers = 0 uses the default.");
  m.def("cli_main", &main_with_args, py::arg("args"), "Run the command-line front end; returns the exit code.");
  m.def("default_workers", &farm::default_workers);
  m.def("sha256_hex", [](const std::string& s) { return cli::sha256_hex(s); });
  m.def(
      "agresti_coull",
      [](std::uint64_t m_, std::uint64_t n, double z) {
        const auto i = tails::agresti_coull(m_, n, z);
        return py::make_tuple(i.p_tilde, i.halfwidth);
      },
      py::arg("m"), py::arg("n"), py::arg("z") = 1.96, "Agresti-Coull (p_tilde, halfwidth).");
  m.def("log_grid", &tails::log_grid, py::arg("lo"), py::arg("hi"), py::arg("per_decade") = 40);
  m.def(
      "exact_tv_curve",
      [](const std::string& chain_json, const std::string& mu, const std::string& nu, std::uint64_t n_max) {
        const auto c = couplab::chain_from_json(chain_json);
        auto index = [&](const std::string& name) {
          for (std::size_t i = 0; i < c.states.size(); ++i) {
            if (c.states[i] == name) return i;
          }
          throw py::value_error("unknown state '" + name + "'");
        };
        return couplab::exact_tv_curve(c, couplab::point_mass(c.size(), index(mu)),
                                       couplab::point_mass(c.size(), index(nu)), n_max);
      },
      py::arg("chain_json"), py::arg("mu"), py::arg("nu"), py::arg("n_max"),
      "Exact ||delta_mu P^n - delta_nu P^n||_TV for n = 0..n_max.");
}
