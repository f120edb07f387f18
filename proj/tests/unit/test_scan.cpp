#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "polymix/models/countdown.hpp"
#include "polymix/models/rhm.hpp"
#include "polymix/models/see.hpp"
#include "polymix/models/toy.hpp"
#include "polymix/models/traits.hpp"
#include "polymix/scan.hpp"

using namespace polymix;
using namespace polymix::scan;

namespace {

ScanPoint<models::SeeState> point(std::vector<double> e, double gamma, double sd) {
  ScanPoint<models::SeeState> p;
  p.state.energies = std::move(e);
  p.encoding = models::encode_see(p.state);
  p.estimated = true;
  p.gamma.value = gamma;
  p.gamma.std_dev = sd;
  return p;
}

std::vector<ScanPoint<models::SeeState>> series(const std::vector<double>& g, double sd) {
  std::vector<ScanPoint<models::SeeState>> out;
  for (std::size_t k = 0; k < g.size(); ++k) out.push_back(point({1.0 + k}, g[k], sd));
  return out;
}

tails::TailConfig small_cfg() {
  tails::TailConfig cfg;
  cfg.samples = 20000;
  cfg.t_max = 100.0;
  return cfg;
}

/// Tally of tau = sqrt(C / u) over van der Corput uniforms u, so every prefix
/// has P[tau > t] = C t^-beta with beta = 2 and almost no sampling noise.
tails::PassageTally stratified_power_tally(std::uint64_t n, double C, const std::vector<double>& grid) {
  tails::PassageTally tally(grid, n);
  for (std::uint64_t i = 0; i < n; ++i) {
    double u = std::ldexp(1.0, -40), bit = 0.5;
    for (std::uint64_t k = i; k; k >>= 1, bit /= 2) u += (k & 1) * bit;
    const double tau = std::sqrt(C / u);
    tally.add(i, tau > grid.back() ? engine::PassageOutcome::censored(grid.back())
                                   : engine::PassageOutcome::hit(tau));
  }
  return tally;
}

}  // namespace

TEST_CASE("monotone_verdict on synthetic sequences") {
  CHECK(monotone_verdict(series({1, 2, 3, 4}, 0.1)).trend == Trend::Increasing);
  CHECK(monotone_verdict(series({4, 3, 2, 1}, 0.1)).trend == Trend::Decreasing);
  CHECK(monotone_verdict(series({1, 1.05, 0.98, 1.02}, 0.5)).trend == Trend::Flat);

  const auto one_overlap = monotone_verdict(series({1, 2, 1.9, 3}, 0.1));
  CHECK(one_overlap.trend == Trend::Increasing);
  CHECK(one_overlap.overlap_inversions == 1);

  const auto disjoint = monotone_verdict(series({1, 3, 2, 4}, 0.1));
  CHECK(disjoint.trend == Trend::NonMonotone);
  CHECK(disjoint.disjoint_inversions == 1);

  CHECK(monotone_verdict(series({1, 2, 1.9, 2.9, 2.8, 4}, 0.1)).trend == Trend::NonMonotone);
}

TEST_CASE("argmax_point: largest gamma, ties to the smallest key") {
  std::vector<ScanPoint<models::SeeState>> pts{point({0.2, 1.0}, 5.0, 0.1), point({0.1, 3.0}, 5.0, 0.1),
                                                point({0.1, 1.0}, 4.0, 0.1)};
  CHECK(argmax_point<models::SeeModel>(pts) == 1);
  pts[2].gamma.value = 6.0;
  CHECK(argmax_point<models::SeeModel>(pts) == 2);
  CHECK_THROWS_AS(argmax_point<models::SeeModel>({}), std::invalid_argument);
}

TEST_CASE("is_separated compares the candidate CI with every other") {
  std::vector<ScanPoint<models::SeeState>> pts{point({1.0}, 5.0, 0.1), point({2.0}, 3.0, 0.1)};
  CHECK(is_separated(pts, 0));
  pts[1].gamma.std_dev = 2.0;
  CHECK_FALSE(is_separated(pts, 0));
}

TEST_CASE("build_lattice: first axis slowest, duplicates removed") {
  models::SeeState base{{1.0, 1.0, 1.0}};
  const auto lat = build_lattice<models::SeeModel>(base, {{"e1", {0.1, 1.0}}, {"e2", {0.1, 1.0, 10.0}}});
  REQUIRE(lat.states.size() == 6);
  CHECK(lat.states[0].energies == std::vector<double>{0.1, 0.1, 1.0});
  CHECK(lat.states[1].energies == std::vector<double>{0.1, 1.0, 1.0});
  CHECK(lat.states[3].energies == std::vector<double>{1.0, 0.1, 1.0});
  CHECK(lat.index[5] == std::vector<std::size_t>{1, 2});

  const auto dup = build_lattice<models::SeeModel>(base, {{"e1", {2.0, 2.0, 3.0}}});
  CHECK(dup.states.size() == 2);

  // Permuting particles inside a site gives the same key.
  using RT = models::ModelTraits<models::RhmModel>;
  CHECK(RT::key(models::decode_rhm("1: 1; 1,2 | 2: 1; 3")) == RT::key(models::decode_rhm("1: 1; 2,1 | 2: 1; 3")));
  const auto rhm = models::decode_rhm("1: 1; 1,2 | 2: 1; 1,1");
  CHECK(build_lattice<models::RhmModel>(rhm, {{"x1", {1.0, 1.0, 2.0}}, {"s2", {0.0, 0.0}}}).states.size() == 2);

  CHECK_THROWS_AS(build_lattice<models::SeeModel>(base, {{"e1", {}}}), std::invalid_argument);
  CHECK(build_lattice<models::SeeModel>(base, {}).states.size() == 1);
}

TEST_CASE("geometric_values") {
  const auto v = geometric_values(0.1, 10.0, 3);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == 0.1);
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(v[2] == 10.0);
  CHECK(geometric_values(2.0, 5.0, 1) == std::vector<double>{2.0});
  CHECK_THROWS_AS(geometric_values(0.0, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(geometric_values(2.0, 1.0, 2), std::invalid_argument);
}

TEST_CASE("sweep_1d: telegraph label does not affect gamma") {
  const models::TelegraphModel m(1.0, 1.0);
  const auto res = sweep_1d(m, models::InsideSet{}, models::TelegraphState{true, 0.0}, "label", {0, 1, 2, 3},
                            small_cfg(), 7, 2);
  REQUIRE(res.points.size() == 4);
  for (const auto& p : res.points) CHECK(p.estimated);
  CHECK(res.verdict.trend == Trend::Flat);
  CHECK(res.points[2].encoding == "1,2");
}

TEST_CASE("sweep_1d rejects values outside the reference set") {
  const models::SeeModel m({3, 1.0, 2.0});
  CHECK_THROWS_AS(sweep_1d(m, models::SeeBox{0.1, 100.0}, models::SeeState{{1, 1, 1}}, "e2", {1.0, 200.0},
                           small_cfg(), 1, 1),
                  std::invalid_argument);
  const models::CountdownModel cm({4.0, 2.0, 1.0});
  CHECK_THROWS_AS(sweep_1d(cm, models::CountdownRefSet{0}, cm.at_level(0), "level", {0.0, 3.0}, small_cfg(), 1, 1),
                  std::invalid_argument);
}

TEST_CASE("countdown: gamma grows with the start level and peaks at the highest") {
  const models::CountdownModel m({4.0, 2.0, 1.0});
  auto cfg = small_cfg();
  cfg.samples = 2000;
  const std::vector<std::int64_t> levels{1, 2, 4, 8};
  std::vector<ScanPoint<models::CountdownState>> pts;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    pts.push_back(estimate_point(m, models::CountdownRefSet{0}, m.at_level(levels[j]), cfg, 11 + j, 1));
  }
  // Deterministic return at time L: gamma is p~ t^2 at the last grid point before L.
  for (std::size_t j = 0; j < levels.size(); ++j) {
    REQUIRE(pts[j].estimated);
    CHECK(pts[j].gamma.argmax_time < static_cast<double>(levels[j]));
    CHECK(pts[j].gamma.argmax_time > 0.9 * static_cast<double>(levels[j]));
    if (j > 0) CHECK(pts[j].gamma.value >= pts[j - 1].gamma.value);
  }
  CHECK(monotone_verdict(pts).trend == Trend::Increasing);

  const std::vector<std::int64_t> shuffled{3, 1, 6, 2};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<ScanPoint<models::CountdownState>> q;
    for (std::size_t j = 0; j < shuffled.size(); ++j) {
      q.push_back(estimate_point(m, models::CountdownRefSet{0}, m.at_level(shuffled[j]), cfg,
                                 derive_seed(seed, "level", j), 1));
    }
    CHECK(q[argmax_point<models::CountdownModel>(q)].state.level == 6);
  }
}

TEST_CASE("grid_scan: single point and determinism") {
  const models::TelegraphModel m(1.0, 1.0);
  const auto cfg = small_cfg();
  const std::vector<models::TelegraphState> one{{true, 0.0}};
  const auto r1 = grid_scan(m, models::InsideSet{}, one, cfg, 3, 1);
  CHECK(r1.points.size() == 1);
  CHECK(r1.candidate_index == 0);
  CHECK(r1.separated);

  const std::vector<models::TelegraphState> three{{true, 0.0}, {true, 1.0}, {true, 2.0}};
  const auto a = grid_scan(m, models::InsideSet{}, three, cfg, 9, 1);
  const auto b = grid_scan(m, models::InsideSet{}, three, cfg, 9, 4);
  CHECK(points_csv(a.points) == points_csv(b.points));

  const std::vector<models::TelegraphState> outside{{false, 0.0}};
  CHECK_THROWS_AS(grid_scan(m, models::InsideSet{}, outside, cfg, 9, 1), std::invalid_argument);
  CHECK_THROWS_AS(grid_scan(m, models::InsideSet{}, std::vector<models::TelegraphState>{}, cfg, 9, 1),
                  std::invalid_argument);
}

TEST_CASE("axis_sweeps pick the lattice line through the candidate") {
  models::SeeState base{{1.0, 1.0}};
  const std::vector<LatticeAxis> axes{{"e1", {1.0, 2.0, 3.0}}, {"e2", {1.0, 2.0}}};
  const auto lat = build_lattice<models::SeeModel>(base, axes);
  ScanReport<models::SeeState> rep;
  for (std::size_t k = 0; k < lat.states.size(); ++k) {
    const auto& e = lat.states[k].energies;
    rep.points.push_back(point(e, e[0] + 10.0 * e[1], 0.01));
  }
  rep.candidate_index = argmax_point<models::SeeModel>(rep.points);
  CHECK(rep.candidate().state.energies == std::vector<double>{3.0, 2.0});
  const auto sw = axis_sweeps(rep, lat, axes);
  REQUIRE(sw.size() == 2);
  CHECK(sw[0].values == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(sw[0].points[0].state.energies == std::vector<double>{1.0, 2.0});
  CHECK(sw[0].verdict.trend == Trend::Increasing);
  CHECK(sw[1].values == std::vector<double>{1.0, 2.0});
  CHECK(sw[1].points[0].state.energies == std::vector<double>{3.0, 1.0});
}

TEST_CASE("confirm_from_tally: exact power law is confirmed") {
  const auto grid = tails::log_grid(0.1, 1000.0, 40);
  const auto tally = stratified_power_tally(1000000, 4.0, grid);
  tails::TailConfig cfg;
  cfg.beta = 2.0;
  cfg.z = 0.0;  // plain proportions, so the curve carries no interval shrinkage
  const auto c = confirm_from_tally(tally, cfg);
  REQUIRE(c.fit.has_value());
  CHECK(std::abs(c.fit->fit.beta - 2.0) < 0.05);
  CHECK_FALSE(c.updated_beta.has_value());
  CHECK(c.verdict == Verdict::Confirmed);
  CHECK(c.gamma.value == doctest::Approx(4.0).epsilon(0.05));

  // A wrong exponent is moved to the fitted one.
  cfg.beta = 1.0;
  const auto d = confirm_from_tally(tally, cfg);
  REQUIRE(d.updated_beta.has_value());
  CHECK(*d.updated_beta == doctest::Approx(2.0).epsilon(0.03));
  CHECK(d.verdict == Verdict::BetaUpdated);

  ScanReport<models::SeeState> rep;
  attach_confirmation(rep, c);
  CHECK(rep.confirmed);
  attach_confirmation(rep, d);
  CHECK_FALSE(rep.confirmed);
  CHECK(rep.updated_beta.has_value());
}

TEST_CASE("countdown oracle at the worst start: refitted slope matches") {
  const models::CountdownModel m({4.0, 2.0, 1.0});
  tails::TailConfig cfg;
  cfg.samples = 200000;
  const auto tally = tails::run_passage_tally(
      m, models::CountdownRefSet{0}, [&](std::uint64_t, RngStream& rng) { return m.atom_exit(rng); }, cfg, 77, 2);
  const auto c = confirm_from_tally(tally, cfg);
  REQUIRE(c.fit.has_value());
  CHECK(std::abs(c.fit->fit.beta - 2.0) <= 3.0 * c.fit->combined_std_err());
  CHECK_FALSE(c.updated_beta.has_value());
}

TEST_CASE("points_csv layout") {
  std::vector<ScanPoint<models::SeeState>> pts{point({0.5, 2.0}, 1.5, 0.25)};
  pts[0].gamma.argmax_time = 3.0;
  pts[0].gamma.stabilized = true;
  ScanPoint<models::SeeState> blank;
  blank.encoding = "1,1";
  pts.push_back(blank);
  CHECK(points_csv(pts) ==
        "state_encoding,gamma,gamma_sd,argmax_t,stabilized\n"
        "\"0.5,2\",1.5,0.25,3,true\n"
        "\"1,1\",,,,false\n");
}
