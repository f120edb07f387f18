#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "polymix/experiment.hpp"
#include "polymix/farm.hpp"

namespace polymix::cli {

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

const char* describe(Kind k) {
  switch (k) {
    case Kind::Tail: return "Estimate the first-passage survival curve, its slope and gamma";
    case Kind::Sweep: return "Gamma along one coordinate of the initial state";
    case Kind::Scan: return "Gamma over a lattice of initial states";
    case Kind::Confirm: return "Large-budget rerun at a candidate maximizer";
    case Kind::Burnin: return "Generate a burn-in ensemble";
    case Kind::Stabilize: return "Observable means against time from the initial law";
    case Kind::Correlate: return "Correlation decay from an ensemble";
    case Kind::Couplab: return "Finite-chain splitting and coupling check";
  }
  return "";
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"polymix: tails, scans and coupling experiments for Markov jump processes"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out_dir;
  std::optional<Kind> chosen;

  const Kind kinds[] = {Kind::Tail,   Kind::Sweep,     Kind::Scan,      Kind::Confirm,
                        Kind::Burnin, Kind::Stabilize, Kind::Correlate, Kind::Couplab};
  for (Kind k : kinds) {
    auto* sub = app.add_subcommand(kind_name(k), describe(k));
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "Master seed, overrides the config");
    sub->add_option("--workers", workers, "Worker threads (default: POLYMIX_WORKERS or all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "Output directory, overrides the config");
    sub->callback([&chosen, k] { chosen = k; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  std::ifstream is(config_path, std::ios::binary);
  if (!is) {
    std::cerr << "error: cannot read config '" << config_path << "'\n";
    return kExitValidation;
  }
  std::ostringstream text;
  text << is.rdbuf();

  auto vr = validate_config(text.str(), chosen);
  if (!vr.ok()) {
    for (const auto& e : vr.errors) std::cerr << "error: " << e << '\n';
    return kExitValidation;
  }
  ExperimentConfig cfg = std::move(*vr.config);
  if (seed) {
    cfg.seed = *seed;
    cfg.normalized["seed"] = *seed;
  }
  if (out_dir) cfg.output_dir = *out_dir;
  const unsigned n_workers = workers ? *workers : cfg.workers ? *cfg.workers : farm::default_workers();

  try {
    const auto r = run_experiment(cfg, n_workers);
    std::cout << kind_name(cfg.kind) << ": wrote " << r.files.size() + 1 << " files to " << r.output_dir
              << " (" << r.total_trajectories << " trajectories)\n";
    std::cout << r.summary.dump(2) << '\n';
  } catch (const ValidationError& e) {
    for (const auto& msg : e.errors()) std::cerr << "error: " << msg << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

}  // namespace polymix::cli
