#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "polymix/experiment.hpp"
#include "polymix/farm.hpp"

using namespace polymix::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path tmp_root() {
  const char* env = std::getenv("POLYMIX_TEST_TMP");
  fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "polymix-test";
  p /= "cli";
  fs::create_directories(p);
  return p;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = tmp_root() / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = tmp_root() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

int run_cli(std::vector<std::string> args) {
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

const char* kSmallOracle = R"({
  "kind": "tail", "seed": 4,
  "model": {"name": "countdown", "C": 4, "beta": 2, "holding": 1},
  "refset": {"max_level": 0},
  "tail": {"h": 0.1, "t_max": 100, "samples": 5000},
  "initial": {"sampler": "initial"}
})";

}  // namespace

TEST_CASE("parse_kind accepts subcommands and long aliases") {
  CHECK(parse_kind("scan") == Kind::Scan);
  CHECK(parse_kind("grid-scan") == Kind::Scan);
  CHECK(parse_kind("burn-in") == Kind::Burnin);
  CHECK(parse_kind("stabilization") == Kind::Stabilize);
  CHECK(parse_kind("correlation") == Kind::Correlate);
  CHECK_FALSE(parse_kind("nope").has_value());
  CHECK(std::string(kind_name(Kind::Couplab)) == "couplab");
}

TEST_CASE("validate_config fills defaults") {
  const auto r = validate_config(R"({"kind": "tail", "model": {"name": "see"}})");
  REQUIRE(r.ok());
  const auto& n = r.config->normalized;
  CHECK(n["model"]["n_sites"] == 3);
  CHECK(n["model"]["T_L"] == 1.0);
  CHECK(n["model"]["T_R"] == 2.0);
  CHECK(n["tail"]["h"] == 0.1);
  CHECK(n["tail"]["t_max"] == 1000.0);
  CHECK(n["tail"]["m_min"] == 100);
  CHECK_FALSE(n.contains("workers"));
  CHECK_FALSE(n.contains("output_dir"));
  CHECK(r.config->seed == n["seed"].get<std::uint64_t>());
}

TEST_CASE("validate_config reports every violation by name") {
  const auto r = validate_config(
      R"({"kind": "tail", "model": {"name": "see", "T_L": -1}, "tail": {"t_max": 0.01}, "colour": 1})");
  CHECK_FALSE(r.ok());
  CHECK(mentions(r.errors, "T_L"));
  CHECK(mentions(r.errors, "t_max"));
  CHECK(mentions(r.errors, "colour"));

  const auto axes = validate_config(
      R"({"kind": "scan", "model": {"name": "see"}, "scan": {"base": "1,1,1", "axes": [{"coordinate": "e1", "lo": 5, "hi": 1, "n": 2}]}})");
  CHECK_FALSE(axes.ok());
  CHECK(mentions(axes.errors, "lo"));

  CHECK_FALSE(validate_config("{not json").ok());
  CHECK_FALSE(validate_config(R"({"kind": "tail", "model": {"name": "ising"}})").ok());
  CHECK_FALSE(validate_config(R"({"kind": "tail", "model": {"name": "see"}})", Kind::Scan).ok());
  CHECK(validate_config(R"({"model": {"name": "see"}})", Kind::Tail).ok());
}

TEST_CASE("every shipped config validates") {
  for (const auto& entry : fs::directory_iterator(fs::path(POLYMIX_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".json") continue;
    const auto r = validate_config(slurp(entry.path()));
    INFO(entry.path().string());
    CHECK(r.ok());
  }
}

TEST_CASE("cli_main exit codes") {
  const auto good = write_config("good.json", kSmallOracle);
  const auto out = fresh_dir("exit-ok");
  CHECK(run_cli({"polymix", "tail", "--config", good.string(), "--out", out.string(), "--workers", "2"}) == 0);
  CHECK(fs::exists(out / "manifest.json"));

  const auto bad = write_config("bad.json", R"({"model": {"name": "see", "T_L": 0}})");
  CHECK(run_cli({"polymix", "tail", "--config", bad.string(), "--out", fresh_dir("exit-bad").string()}) == 2);
  CHECK(run_cli({"polymix", "tail", "--config", (tmp_root() / "missing.json").string()}) == 2);
  CHECK(run_cli({"polymix", "tail"}) == 2);
  CHECK(run_cli({"polymix", "frobnicate", "--config", good.string()}) == 2);
  CHECK(run_cli({"polymix", "scan", "--config", good.string()}) == 2);
  CHECK(run_cli({"polymix", "tail", "--config", good.string(), "--workers", "0"}) == 2);

  // Output directory below a regular file cannot be created.
  const auto blocker = write_config("blocker", "x");
  CHECK(run_cli({"polymix", "tail", "--config", good.string(), "--out", (blocker / "sub").string()}) == 3);
}

TEST_CASE("reruns reproduce byte-identical artifacts regardless of workers") {
  const auto cfg = validate_config(kSmallOracle);
  REQUIRE(cfg.ok());
  auto a = *cfg.config;
  auto b = *cfg.config;
  a.output_dir = fresh_dir("rerun-a").string();
  b.output_dir = fresh_dir("rerun-b").string();
  run_experiment(a, 1);
  run_experiment(b, 8);
  CHECK(slurp(fs::path(a.output_dir) / "manifest.json") == slurp(fs::path(b.output_dir) / "manifest.json"));
  CHECK(slurp(fs::path(a.output_dir) / "survival.csv") == slurp(fs::path(b.output_dir) / "survival.csv"));

  const auto manifest = json::parse(slurp(fs::path(a.output_dir) / "manifest.json"));
  for (const auto& f : manifest["files"]) {
    CHECK(sha256_hex(slurp(fs::path(a.output_dir) / f["path"].get<std::string>())) == f["sha256"]);
  }

  auto c = *cfg.config;
  c.seed = 5;
  c.normalized["seed"] = 5;
  c.output_dir = fresh_dir("rerun-c").string();
  run_experiment(c, 1);
  CHECK(slurp(fs::path(a.output_dir) / "survival.csv") != slurp(fs::path(c.output_dir) / "survival.csv"));
}

TEST_CASE("sha256_hex known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("oracle tail through the experiment layer") {
  auto cfg = validate_config(R"({
    "kind": "tail", "seed": 6,
    "model": {"name": "countdown"},
    "refset": {"max_level": 0},
    "tail": {"samples": 100000},
    "initial": {"sampler": "initial"}
  })");
  REQUIRE(cfg.ok());
  cfg.config->output_dir = fresh_dir("oracle").string();
  const auto r = run_experiment(*cfg.config, polymix::farm::default_workers());
  CHECK(r.total_trajectories == 100000);
  const auto& fit = r.summary["fit"];
  REQUIRE(fit.is_object());
  CHECK(std::abs(fit["beta"].get<double>() - 2.0) <= 3.0 * fit["combined_std_err"].get<double>());
  CHECK(slurp(fs::path(r.output_dir) / "survival.csv").rfind("t,m,n,p_tilde,halfwidth\n", 0) == 0);
}

TEST_CASE("a failed run leaves no files behind") {
  auto cfg = validate_config(R"({
    "kind": "sweep", "seed": 1,
    "model": {"name": "see"},
    "tail": {"samples": 100},
    "sweep": {"base": "1,1,1", "coordinate": "e1", "values": [1, 500]}
  })");
  REQUIRE(cfg.ok());
  const auto dir = fresh_dir("rollback");
  cfg.config->output_dir = dir.string();
  CHECK_THROWS_AS(run_experiment(*cfg.config, 1), ValidationError);
  CHECK_FALSE(fs::exists(dir));

  // An existing directory survives but its new files are removed.
  fs::create_directories(dir);
  std::ofstream(dir / "keep.txt") << "mine";
  CHECK_THROWS(run_experiment(*cfg.config, 1));
  CHECK(fs::exists(dir / "keep.txt"));
  CHECK_FALSE(fs::exists(dir / "config.json"));
}

TEST_CASE("POLYMIX_WORKERS sets the default worker count") {
  ::setenv("POLYMIX_WORKERS", "3", 1);
  CHECK(polymix::farm::default_workers() == 3);
  ::unsetenv("POLYMIX_WORKERS");
  CHECK(polymix::farm::default_workers() >= 1);
}
