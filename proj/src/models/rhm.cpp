#include "polymix/models/rhm.hpp"

#include <random>
#include <stdexcept>

#include "polymix/format.hpp"

namespace polymix::models {

void RhmParams::validate() const {
  if (n_sites < 1) throw std::invalid_argument("RhmParams: n_sites must be >= 1");
  const std::pair<const char*, double> positive[] = {{"T_L", T_L},     {"T_R", T_R},
                                                     {"rho_L", rho_L}, {"rho_R", rho_R},
                                                     {"S", S}};
  for (const auto& [name, v] : positive) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("RhmParams: ") + name + " must be > 0");
  }
  if (!(m >= 0.0)) throw std::invalid_argument("RhmParams: m must be >= 0");
}

std::size_t RhmState::particle_count() const {
  std::size_t k = 0;
  for (const auto& site : sites) k += site.particles.size();
  return k;
}

double RhmState::total_energy() const {
  double e = 0.0;
  for (const auto& site : sites) {
    e += site.stored;
    for (double x : site.particles) e += x;
  }
  return e;
}

bool RhmState::valid() const {
  if (sites.empty()) return false;
  for (const auto& site : sites) {
    if (!(site.stored >= 0.0) || !std::isfinite(site.stored)) return false;
    for (double x : site.particles) {
      if (!(x > 0.0) || !std::isfinite(x)) return false;
    }
  }
  return true;
}

void rhm_mix(RhmSite& site, std::size_t j, double u) {
  const double x = site.particles.at(j);
  const double u2 = u * u;
  const double s = site.stored;
  site.stored = x * u2;
  site.particles[j] = s + x * (1.0 - u2);
}

void rhm_jump(RhmState& s, std::size_t site, std::size_t j, bool to_left) {
  auto& from = s.sites.at(site).particles;
  const double x = from.at(j);
  from[j] = from.back();
  from.pop_back();
  if (to_left) {
    if (site > 0) s.sites[site - 1].particles.push_back(x);
  } else {
    if (site + 1 < s.sites.size()) s.sites[site + 1].particles.push_back(x);
  }
}

double sample_injection_energy(double T, RngStream& rng) {
  std::gamma_distribution<double> gamma(1.5, T);
  double x = 0.0;
  do {
    x = gamma(rng);
  } while (!(x > 0.0));
  return x;
}

RhmModel::RhmModel(RhmParams params) : params_(params) { params_.validate(); }

void RhmModel::apply(State& s, std::size_t clock, RngStream& rng) const {
  std::size_t k = clock;
  for (std::size_t i = 0; i < s.sites.size(); ++i) {
    const std::size_t n = s.sites[i].particles.size();
    if (k < n) {
      if (rng.uniform_open() * (1.0 + params_.m) < 1.0) {
        rhm_jump(s, i, k, rng.uniform_open() < 0.5);
      } else {
        rhm_mix(s.sites[i], k, rng.uniform_open());
      }
      return;
    }
    k -= n;
  }
  if (k == 0) {
    s.sites.front().particles.push_back(sample_injection_energy(params_.T_L, rng));
  } else if (k == 1) {
    s.sites.back().particles.push_back(sample_injection_energy(params_.T_R, rng));
  } else {
    throw std::out_of_range("RhmModel::apply: clock index out of range");
  }
}

engine::EventRates rhm_rates(const RhmState& s, const RhmParams& params) {
  engine::EventRates out;
  RhmModel(params).rates(s, out);
  return out;
}

RhmState rhm_initial_draw(const RhmParams& params, RngStream& rng) {
  RhmState s;
  s.sites.resize(static_cast<std::size_t>(params.n_sites));
  std::poisson_distribution<int> count(0.5 * (params.rho_L + params.rho_R));
  const double mean_x = 0.5 * (params.T_L + params.T_R);
  for (auto& site : s.sites) {
    site.stored = 100.0 * rng.uniform_open();
    const int k = count(rng);
    site.particles.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) site.particles.push_back(rng.exponential_mean(mean_x));
  }
  return s;
}

std::string encode_rhm(const RhmState& s) {
  std::string out;
  for (std::size_t i = 0; i < s.sites.size(); ++i) {
    if (i) out += " | ";
    out += std::to_string(i + 1);
    out += ": ";
    out += format_shortest(s.sites[i].stored);
    out += ';';
    const auto& xs = s.sites[i].particles;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      out += j ? "," : " ";
      out += format_shortest(xs[j]);
    }
  }
  return out;
}

RhmState decode_rhm(std::string_view line) {
  RhmState s;
  for (auto field : split(line, '|')) {
    const auto colon = field.find(':');
    const auto semi = field.find(';');
    if (colon == std::string_view::npos || semi == std::string_view::npos || semi < colon) {
      throw std::invalid_argument("decode_rhm: malformed site field '" + std::string(field) + "'");
    }
    const auto index = parse_double(field.substr(0, colon));
    if (index != static_cast<double>(s.sites.size() + 1)) {
      throw std::invalid_argument("decode_rhm: sites out of order");
    }
    RhmSite site;
    site.stored = parse_double(field.substr(colon + 1, semi - colon - 1));
    auto rest = field.substr(semi + 1);
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\r')) rest.remove_suffix(1);
    if (!rest.empty()) {
      for (auto x : split(rest, ',')) site.particles.push_back(parse_double(x));
    }
    s.sites.push_back(std::move(site));
  }
  if (!s.valid()) throw std::invalid_argument("decode_rhm: invalid state");
  return s;
}

}  // namespace polymix::models
