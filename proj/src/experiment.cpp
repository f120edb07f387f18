#include "polymix/experiment.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "polymix/couplab.hpp"
#include "polymix/farm.hpp"
#include "polymix/format.hpp"
#include "polymix/models/traits.hpp"
#include "polymix/rng.hpp"
#include "polymix/scan.hpp"
#include "polymix/stationary.hpp"
#include "polymix/tail_run.hpp"

namespace polymix::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

// --- models -----------------------------------------------------------------

template <class M, class R>
struct Bundle {
  using Model = M;
  using State = typename M::State;
  M model;
  R refset;
  std::string params_json;  // compact, sorted keys
  std::function<State(std::uint64_t, RngStream&)> initial;
};

using AnyBundle = std::variant<Bundle<models::SeeModel, models::SeeBox>,
                               Bundle<models::RhmModel, models::RhmBox>,
                               Bundle<models::CountdownModel, models::CountdownRefSet>,
                               Bundle<models::TelegraphModel, models::InsideSet>>;

AnyBundle make_bundle(const json& cfg) {
  const json& m = cfg.at("model");
  const json refset = cfg.contains("refset") ? cfg.at("refset") : json::object();
  const std::string name = m.at("name");
  const std::string params = m.dump();
  auto num = [&](const json& j, const char* k, double def) { return j.contains(k) ? j.at(k).get<double>() : def; };
  if (name == "see") {
    models::SeeParams p{m.at("n_sites").get<int>(), m.at("T_L"), m.at("T_R")};
    models::SeeBox box{num(refset, "lo", 0.1), num(refset, "hi", 100.0)};
    return Bundle<models::SeeModel, models::SeeBox>{
        models::SeeModel(p), box, params,
        [p](std::uint64_t, RngStream& r) { return models::see_initial_draw(p, r); }};
  }
  if (name == "rhm") {
    models::RhmParams p{m.at("n_sites").get<int>(), m.at("T_L"), m.at("T_R"), m.at("rho_L"),
                        m.at("rho_R"), m.at("m"), m.at("S")};
    models::RhmBox box;
    if (refset.contains("k_max")) box.k_max = refset.at("k_max");
    box.s_lo = num(refset, "s_lo", box.s_lo);
    box.s_hi = num(refset, "s_hi", box.s_hi);
    box.x_lo = num(refset, "x_lo", box.x_lo);
    box.x_hi = num(refset, "x_hi", box.x_hi);
    return Bundle<models::RhmModel, models::RhmBox>{
        models::RhmModel(p), box, params,
        [p](std::uint64_t, RngStream& r) { return models::rhm_initial_draw(p, r); }};
  }
  if (name == "countdown") {
    const models::CountdownModel model({m.at("C"), m.at("beta"), m.at("holding")});
    models::CountdownRefSet rs{refset.contains("max_level") ? refset.at("max_level").get<std::int64_t>() : 0};
    return Bundle<models::CountdownModel, models::CountdownRefSet>{
        model, rs, params, [model](std::uint64_t, RngStream& r) { return model.atom_exit(r); }};
  }
  if (name == "telegraph") {
    return Bundle<models::TelegraphModel, models::InsideSet>{
        models::TelegraphModel(m.at("leave"), m.at("enter")), {}, params,
        [](std::uint64_t, RngStream&) { return models::TelegraphState{true, 0.0}; }};
  }
  throw ValidationError({"model.name is not a known model"});
}

tails::TailConfig tail_config(const json& t) {
  tails::TailConfig c;
  c.h = t.at("h");
  c.t_max = t.at("t_max");
  c.per_decade = t.at("per_decade").get<int>();
  c.samples = t.at("samples");
  c.m_min = t.at("m_min");
  c.z = t.at("z");
  c.batches = t.at("batches").get<std::size_t>();
  c.beta = t.at("beta");
  c.fit_t_min = t.at("fit_t_min");
  c.fit_decades = t.at("fit_decades");
  return c;
}

// --- artifacts ----------------------------------------------------------------

class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  void open() {
    std::error_code ec;
    created_dir_ = !fs::exists(dir_);
    fs::create_directories(dir_, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& content, bool in_manifest = true) {
    const fs::path p = dir_ / name;
    written_.push_back(p);
    std::ofstream os(p, std::ios::binary);
    os << content;
    os.close();
    if (!os) throw std::runtime_error("cannot write " + p.string());
    if (in_manifest) files_.push_back({name, sha256_hex(content), content.size()});
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  /// Remove everything this run wrote.
  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  const std::vector<ArtifactFile>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  bool created_dir_ = false;
  std::vector<fs::path> written_;
  std::vector<ArtifactFile> files_;
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError({"cannot read file '" + path + "'"});
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json gamma_json(const tails::GammaEstimate& g) {
  return {{"value", g.value},
          {"argmax_time", g.argmax_time},
          {"stabilized", g.stabilized},
          {"std_dev", g.std_dev},
          {"batches_used", g.batches_used},
          {"prefix_values", g.prefix_values}};
}

json fit_json(const std::optional<tails::BatchedFit>& fit, const tails::SurvivalCurve& curve) {
  if (!fit) return nullptr;
  return {{"beta", fit->fit.beta},
          {"std_err", fit->fit.std_err},
          {"batch_std_err", fit->batch_std_err},
          {"combined_std_err", fit->combined_std_err()},
          {"intercept", fit->fit.intercept},
          {"points", fit->fit.points()},
          {"t_lo", curve.grid[fit->fit.fit_range.begin]},
          {"t_hi", curve.grid[fit->fit.fit_range.end - 1]}};
}

json analysis_json(const tails::TailAnalysis& a, const tails::PassageTally& tally) {
  json j;
  j["samples"] = tally.n_samples();
  j["censored"] = tally.censored();
  j["reliable_points"] = a.reliable.size();
  j["reliable_t_max"] = a.reliable.empty() ? json(nullptr) : json(a.curve.grid[a.reliable.end - 1]);
  j["fit"] = fit_json(a.fit, a.curve);
  j["gamma"] = a.gamma ? gamma_json(*a.gamma) : json(nullptr);
  return j;
}

// Plot scripts only read the CSVs written next to them.
std::string survival_plot_script(double ref_slope) {
  std::ostringstream os;
  os << "import csv\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
     << "rows = list(csv.DictReader(open('survival.csv')))\n"
     << "t = [float(r['t']) for r in rows if int(r['m']) > 0]\n"
     << "p = [float(r['p_tilde']) for r in rows if int(r['m']) > 0]\n"
     << "hw = [float(r['halfwidth']) for r in rows if int(r['m']) > 0]\n"
     << "plt.errorbar(t, p, yerr=hw, fmt='.', ms=3, label='P[tau > t]')\n"
     << "ref = [p[-1] * (x / t[-1]) ** (" << format_double(-ref_slope) << ") for x in t]\n"
     << "plt.plot(t, ref, '-', color='purple', label='slope " << format_double(-ref_slope) << "')\n"
     << "plt.xscale('log'); plt.yscale('log'); plt.xlabel('t'); plt.ylabel('P[tau > t]')\n"
     << "plt.legend(); plt.savefig('survival.png', dpi=150)\n";
  return os.str();
}

std::string sweep_plot_script(const std::string& csv_name, const std::string& x_label) {
  std::ostringstream os;
  os << "import csv\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
     << "rows = [r for r in csv.DictReader(open('" << csv_name << "')) if r['gamma']]\n"
     << "x = [float(r['value']) for r in rows]\n"
     << "g = [float(r['gamma']) for r in rows]\n"
     << "e = [1.96 * float(r['gamma_sd']) for r in rows]\n"
     << "plt.errorbar(x, g, yerr=e, fmt='o-')\n"
     << "plt.xscale('log'); plt.xlabel('" << x_label << "'); plt.ylabel('gamma')\n"
     << "plt.savefig('" << csv_name.substr(0, csv_name.size() - 4) << ".png', dpi=150)\n";
  return os.str();
}

std::string series_plot_script(const std::string& csv_name, bool loglog) {
  std::ostringstream os;
  os << "import csv\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
     << "rows = list(csv.DictReader(open('" << csv_name << "')))\n"
     << "t = [float(r['t']) for r in rows]\n"
     << "m = [float(r['mean']) for r in rows]\n"
     << "e = [float(r['stderr']) for r in rows]\n"
     << "plt.errorbar(t, m, yerr=e, fmt='.-')\n";
  if (loglog) os << "plt.xscale('symlog'); plt.yscale('log')\n";
  os << "plt.xlabel('t'); plt.savefig('" << csv_name.substr(0, csv_name.size() - 4) << ".png', dpi=150)\n";
  return os.str();
}

std::string coupling_plot_script() {
  return "import csv\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
         "rows = list(csv.DictReader(open('coupling.csv')))\n"
         "n = [int(r['n']) for r in rows]\n"
         "tv = [float(r['tv_exact']) for r in rows]\n"
         "bound = [2 * (float(r['p_T_gt_n']) + float(r['halfwidth'])) for r in rows]\n"
         "plt.plot(n, tv, label='exact TV')\n"
         "plt.plot(n, bound, label='2 (P[T>n] upper CI)')\n"
         "plt.yscale('log'); plt.xlabel('n'); plt.legend()\n"
         "plt.savefig('coupling.png', dpi=150)\n";
}

std::string sweep_csv(const std::vector<double>& values, const std::string& points_csv) {
  // Prefix the standard point columns with the swept value.
  std::istringstream is(points_csv);
  std::ostringstream os;
  std::string line;
  std::getline(is, line);
  os << "value," << line << '\n';
  for (double v : values) {
    if (!std::getline(is, line)) break;
    os << format_double(v) << ',' << line << '\n';
  }
  return os.str();
}

template <class Point>
json points_json(const std::vector<Point>& pts) {
  json arr = json::array();
  for (const auto& p : pts) {
    arr.push_back({{"state", p.encoding}, {"gamma", p.estimated ? gamma_json(p.gamma) : json(nullptr)}});
  }
  return arr;
}

template <class Sweep>
json sweep_json(const Sweep& sw) {
  return {{"coordinate", sw.coordinate},
          {"values", sw.values},
          {"trend", scan::trend_name(sw.verdict.trend)},
          {"overlap_inversions", sw.verdict.overlap_inversions},
          {"disjoint_inversions", sw.verdict.disjoint_inversions}};
}

// --- runners ------------------------------------------------------------------

struct Context {
  const ExperimentConfig& cfg;
  const json& c;  // normalized config
  unsigned workers;
  Artifacts& out;
  std::uint64_t trajectories = 0;
  json summary;
};

template <class B>
stationary::Ensemble<typename B::State> load_ensemble(const B& b, const std::string& path) {
  std::istringstream is(read_file(path));
  stationary::Ensemble<typename B::State> ens;
  try {
    ens = stationary::read_ensemble<typename B::Model>(is);
  } catch (const std::runtime_error& e) {
    throw ValidationError({"ensemble file '" + path + "': " + e.what()});
  }
  if (ens.params_json != b.params_json) {
    throw ValidationError({"ensemble file '" + path + "' was generated with different model parameters"});
  }
  return ens;
}

template <class B>
stationary::Ensemble<typename B::State> inline_burn_in(Context& ctx, const B& b, const json& spec) {
  auto ens = stationary::burn_in(b.model, b.initial, spec.at("burn_time").get<double>(),
                                 spec.at("ensemble_size").get<std::uint64_t>(),
                                 derive_seed(ctx.cfg.seed, "burnin"), ctx.workers);
  ens.params_json = b.params_json;
  ctx.trajectories += ens.size();
  return ens;
}

template <class B>
void write_tail_outputs(Context& ctx, const tails::PassageTally& tally, const tails::TailConfig& tc,
                        const std::string& json_name, json extra) {
  const auto a = tails::analyse_tally(tally, tc);
  ctx.out.write("survival.csv", tails::survival_csv(a.curve));
  ctx.out.write("plot_survival.py", survival_plot_script(tc.beta));
  json j = analysis_json(a, tally);
  for (auto& [k, v] : extra.items()) j[k] = v;
  ctx.out.write_json(json_name, j);
  ctx.summary = j;
}

template <class B>
void run_tail(Context& ctx, const B& b) {
  const auto tc = tail_config(ctx.c.at("tail"));
  const json& init = ctx.c.at("initial");
  const std::uint64_t seed = derive_seed(ctx.cfg.seed, "tail");
  using State = typename B::State;
  std::optional<stationary::Ensemble<State>> ens;
  std::function<State(std::uint64_t, RngStream&)> sampler;
  if (init.contains("state")) {
    sampler = tails::fixed_state(models::ModelTraits<typename B::Model>::decode(init.at("state").get<std::string>()));
  } else if (init.contains("ensemble")) {
    ens = load_ensemble(b, init.at("ensemble"));
  } else if (init.contains("burn_in")) {
    ens = inline_burn_in(ctx, b, init.at("burn_in"));
  } else {
    sampler = b.initial;
  }
  if (ens) sampler = stationary::resample_from(*ens);
  const auto tally = tails::run_passage_tally(b.model, b.refset, sampler, tc, seed, ctx.workers);
  ctx.trajectories += tc.samples;
  write_tail_outputs<B>(ctx, tally, tc, "tail.json", json::object());
  if (ctx.c.at("tail").at("false_returns").get<bool>()) {
    const auto hist = tails::run_false_returns(b.model, b.refset, sampler, tc.h, tc.t_max, tc.samples,
                                               derive_seed(ctx.cfg.seed, "false_returns"), ctx.workers);
    ctx.trajectories += tc.samples;
    std::ostringstream os;
    os << "n,count,p_N_gt_n\n";
    for (std::size_t n = 0; n < hist.counts.size(); ++n) {
      os << n << ',' << hist.counts[n] << ',' << format_double(hist.tail(n)) << '\n';
    }
    ctx.out.write("false_returns.csv", os.str());
  }
}

template <class B>
void run_sweep(Context& ctx, const B& b) {
  using Traits = models::ModelTraits<typename B::Model>;
  const auto tc = tail_config(ctx.c.at("tail"));
  const json& s = ctx.c.at("sweep");
  const auto base = Traits::decode(s.at("base").get<std::string>());
  const auto values = s.at("values").get<std::vector<double>>();
  const std::string coord = s.at("coordinate");
  scan::SweepResult<typename B::State> sw;
  try {
    sw = scan::sweep_1d(b.model, b.refset, base, coord, values, tc, ctx.cfg.seed, ctx.workers);
  } catch (const std::invalid_argument& e) {
    throw ValidationError({std::string("sweep: ") + e.what()});
  }
  ctx.trajectories += tc.samples * values.size();
  ctx.out.write("sweep.csv", sweep_csv(values, scan::points_csv(sw.points)));
  ctx.out.write("plot_sweep.py", sweep_plot_script("sweep.csv", coord));
  json j = sweep_json(sw);
  j["points"] = points_json(sw.points);
  ctx.out.write_json("sweep.json", j);
  ctx.summary = j;
}

template <class B>
void run_scan(Context& ctx, const B& b) {
  using Traits = models::ModelTraits<typename B::Model>;
  const auto tc = tail_config(ctx.c.at("tail"));
  const json& s = ctx.c.at("scan");
  const auto base = Traits::decode(s.at("base").get<std::string>());
  std::vector<scan::LatticeAxis> axes;
  for (const auto& a : s.at("axes")) {
    scan::LatticeAxis ax{a.at("coordinate"), {}};
    ax.values = a.contains("values") ? a.at("values").get<std::vector<double>>()
                                     : scan::geometric_values(a.at("lo"), a.at("hi"), a.at("n"));
    axes.push_back(std::move(ax));
  }
  scan::Lattice<typename B::State> lattice;
  scan::ScanReport<typename B::State> rep;
  try {
    lattice = scan::build_lattice<typename B::Model>(base, axes);
    rep = scan::grid_scan(b.model, b.refset, lattice.states, tc, ctx.cfg.seed, ctx.workers);
  } catch (const std::invalid_argument& e) {
    throw ValidationError({std::string("scan: ") + e.what()});
  }
  ctx.trajectories += tc.samples * lattice.states.size();
  rep.sweeps = scan::axis_sweeps(rep, lattice, axes);
  json j;
  if (s.contains("confirm_samples")) {
    auto big = tc;
    big.samples = s.at("confirm_samples");
    const auto conf = scan::confirm_maximizer(b.model, b.refset, rep.candidate().state, big, ctx.cfg.seed, ctx.workers);
    ctx.trajectories += big.samples;
    scan::attach_confirmation(rep, conf);
    j["confirmation"] = {{"verdict", scan::verdict_name(conf.verdict)},
                         {"gamma", gamma_json(conf.gamma)},
                         {"fit", fit_json(conf.fit, conf.analysis.curve)}};
  }
  ctx.out.write("scan.csv", scan::points_csv(rep.points));
  j["candidate"] = rep.candidate().encoding;
  j["candidate_gamma"] = rep.candidate().estimated ? gamma_json(rep.candidate().gamma) : json(nullptr);
  j["separated"] = rep.separated;
  j["confirmed"] = rep.confirmed;
  j["updated_beta"] = rep.updated_beta ? json(*rep.updated_beta) : json(nullptr);
  j["points"] = rep.points.size();
  json sweeps = json::array();
  for (const auto& sw : rep.sweeps) sweeps.push_back(sweep_json(sw));
  j["sweeps"] = sweeps;
  ctx.out.write_json("scan.json", j);
  ctx.summary = j;
}

template <class B>
void run_confirm(Context& ctx, const B& b) {
  using Traits = models::ModelTraits<typename B::Model>;
  auto tc = tail_config(ctx.c.at("tail"));
  const json& s = ctx.c.at("confirm");
  tc.samples = s.at("samples");
  const auto state = Traits::decode(s.at("state").get<std::string>());
  if (!b.refset.contains(state)) throw ValidationError({"confirm.state lies outside the reference set"});
  const auto tally = tails::run_passage_tally(b.model, b.refset, tails::fixed_state(state), tc,
                                              derive_seed(ctx.cfg.seed, "confirm"), ctx.workers);
  ctx.trajectories += tc.samples;
  const auto conf = scan::confirm_from_tally(tally, tc);
  write_tail_outputs<B>(ctx, tally, tc, "confirm.json",
                        {{"verdict", scan::verdict_name(conf.verdict)},
                         {"updated_beta", conf.updated_beta ? json(*conf.updated_beta) : json(nullptr)},
                         {"gamma_final", gamma_json(conf.gamma)},
                         {"state", Traits::encode(state)}});
}

template <class B>
void run_burnin(Context& ctx, const B& b) {
  const auto ens = inline_burn_in(ctx, b, ctx.c.at("burnin"));
  std::ostringstream os;
  stationary::write_ensemble<typename B::Model>(os, ens);
  ctx.out.write("ensemble.txt", os.str());
  ctx.summary = {{"model", ens.model}, {"burn_time", ens.burn_time}, {"count", ens.size()}};
  ctx.out.write_json("burnin.json", ctx.summary);
}

template <class B>
void run_stabilize(Context& ctx, const B& b) {
  using Traits = models::ModelTraits<typename B::Model>;
  const json& s = ctx.c.at("stabilize");
  const auto obs = Traits::observable(s.at("observable").get<std::string>());
  const auto series = stationary::stabilization_series(
      b.model, b.initial, obs, s.at("times").get<std::vector<double>>(), s.at("trajectories"),
      derive_seed(ctx.cfg.seed, "stabilize"), ctx.workers);
  ctx.trajectories += s.at("trajectories").get<std::uint64_t>();
  ctx.out.write("series.csv", stationary::series_csv(series));
  ctx.out.write("plot_series.py", series_plot_script("series.csv", false));
  ctx.summary = {{"observable", obs.name}, {"flat", stationary::is_flat(series)}};
  ctx.out.write_json("stabilize.json", ctx.summary);
}

template <class B>
void run_correlate(Context& ctx, const B& b) {
  using Traits = models::ModelTraits<typename B::Model>;
  const json& s = ctx.c.at("correlate");
  const auto ens = s.contains("ensemble") ? load_ensemble(b, s.at("ensemble")) : inline_burn_in(ctx, b, s.at("burn_in"));
  const auto xi = Traits::observable(s.at("xi").get<std::string>());
  const auto eta = Traits::observable(s.at("eta").get<std::string>());
  const auto series = stationary::correlation_decay(b.model, ens, xi, eta, s.at("times").get<std::vector<double>>(),
                                                    s.at("pairs"), derive_seed(ctx.cfg.seed, "correlate"), ctx.workers);
  ctx.trajectories += s.at("pairs").get<std::uint64_t>();
  ctx.out.write("correlation.csv", stationary::series_csv(series));
  ctx.out.write("plot_correlation.py", series_plot_script("correlation.csv", true));
  ctx.summary = {{"xi", xi.name},
                 {"eta", eta.name},
                 {"direct_covariance", stationary::ensemble_covariance(ens, xi, eta)},
                 {"c_first", series.means.front()},
                 {"c_first_stderr", series.stderrs.front()}};
  ctx.out.write_json("correlate.json", ctx.summary);
}

couplab::Vector measure(const couplab::DiscreteChain& chain, const json& spec, const char* key) {
  if (spec.is_string()) {
    const auto it = std::find(chain.states.begin(), chain.states.end(), spec.get<std::string>());
    if (it == chain.states.end()) throw ValidationError({std::string("couplab.") + key + " names an unknown state"});
    return couplab::point_mass(chain.size(), static_cast<std::size_t>(it - chain.states.begin()));
  }
  couplab::Vector v;
  try {
    v = spec.get<couplab::Vector>();
  } catch (const json::exception&) {
    throw ValidationError({std::string("couplab.") + key + " must be numeric"});
  }
  double s = 0.0;
  for (double x : v) {
    if (!(x >= 0.0)) throw ValidationError({std::string("couplab.") + key + " has a negative entry"});
    s += x;
  }
  if (v.size() != chain.size() || std::abs(s - 1.0) > 1e-12) {
    throw ValidationError({std::string("couplab.") + key + " must be a probability vector over the chain states"});
  }
  return v;
}

void run_couplab(Context& ctx) {
  const json& s = ctx.c.at("couplab");
  couplab::DiscreteChain chain;
  try {
    chain = couplab::chain_from_json(s.contains("chain") ? s.at("chain").dump() : read_file(s.at("chain_file")));
  } catch (const std::invalid_argument& e) {
    throw ValidationError({std::string("couplab: ") + e.what()});
  }
  const auto mu = measure(chain, s.at("mu"), "mu");
  const auto nu = measure(chain, s.at("nu"), "nu");
  const std::uint64_t n_max = s.at("n_max"), samples = s.at("samples");
  const auto check = couplab::coupling_inequality_check(chain, mu, nu, n_max, samples,
                                                        derive_seed(ctx.cfg.seed, "couplab"), ctx.workers);
  ctx.trajectories += samples;
  const auto split = couplab::split_chain(chain);
  const auto back = couplab::project_kernel(split);
  double proj_err = 0.0;
  for (std::size_t x = 0; x < chain.size(); ++x) {
    for (std::size_t y = 0; y < chain.size(); ++y) proj_err = std::max(proj_err, std::abs(back[x][y] - chain.kernel[x][y]));
  }
  const auto dom = couplab::dominate_check(chain);
  ctx.out.write("coupling.csv", couplab::coupling_csv(check));
  ctx.out.write("plot_coupling.py", coupling_plot_script());
  ctx.summary = {{"eta", chain.eta},
                 {"theta", chain.theta},
                 {"split_kernel", split.kernel},
                 {"projection_max_error", proj_err},
                 {"violations", check.violations},
                 {"inequality_holds", check.ok()},
                 {"coupled_by_n_max", samples - check.coupling.censored},
                 {"dominance", dom ? json{{"x_star", chain.states[dom->x_star]}, {"delta", dom->delta}} : json(nullptr)}};
  ctx.out.write_json("couplab.json", ctx.summary);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, unsigned workers) {
  Artifacts out(cfg.output_dir);
  out.open();
  Context ctx{cfg, cfg.normalized, std::max(1u, workers), out, 0, json::object()};
  try {
    out.write_json("config.json", cfg.normalized);
    if (cfg.kind == Kind::Couplab) {
      run_couplab(ctx);
    } else {
      const AnyBundle bundle = make_bundle(cfg.normalized);
      std::visit(
          [&](const auto& b) {
            switch (cfg.kind) {
              case Kind::Tail: run_tail(ctx, b); break;
              case Kind::Sweep: run_sweep(ctx, b); break;
              case Kind::Scan: run_scan(ctx, b); break;
              case Kind::Confirm: run_confirm(ctx, b); break;
              case Kind::Burnin: run_burnin(ctx, b); break;
              case Kind::Stabilize: run_stabilize(ctx, b); break;
              case Kind::Correlate: run_correlate(ctx, b); break;
              case Kind::Couplab: break;
            }
          },
          bundle);
    }
    json manifest;
    manifest["tool"] = "polymix";
    manifest["kind"] = kind_name(cfg.kind);
    manifest["seed"] = cfg.seed;
    manifest["total_trajectories"] = ctx.trajectories;
    json files = json::array();
    for (const auto& f : out.files()) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    manifest["files"] = files;
    out.write("manifest.json", manifest.dump(2) + "\n", false);
  } catch (...) {
    out.rollback();
    throw;
  }
  return {out.dir().string(), out.files(), ctx.trajectories, ctx.summary};
}

}  // namespace polymix::cli
