#include "polymix/models/see.hpp"

#include <stdexcept>

#include "polymix/format.hpp"

namespace polymix::models {

void SeeParams::validate() const {
  if (n_sites < 1) throw std::invalid_argument("SeeParams: n_sites must be >= 1");
  if (!(T_L > 0.0)) throw std::invalid_argument("SeeParams: T_L must be > 0");
  if (!(T_R > 0.0)) throw std::invalid_argument("SeeParams: T_R must be > 0");
}

bool SeeState::valid() const {
  if (energies.empty()) return false;
  for (double e : energies) {
    if (!(e > 0.0) || !std::isfinite(e)) return false;
  }
  return true;
}

void see_exchange(SeeState& s, std::size_t clock, double p, double rho_L, double rho_R) {
  auto& e = s.energies;
  const std::size_t n = e.size();
  if (clock == 0) {
    e[0] = p * (e[0] + rho_L);
  } else if (clock == n) {
    e[n - 1] = p * (e[n - 1] + rho_R);
  } else if (clock < n) {
    const double total = e[clock - 1] + e[clock];
    e[clock - 1] = p * total;
    e[clock] = (1.0 - p) * total;
  } else {
    throw std::out_of_range("see_exchange: clock index out of range");
  }
}

SeeModel::SeeModel(SeeParams params) : params_(params) { params_.validate(); }

void SeeModel::apply(State& s, std::size_t clock, RngStream& rng) const {
  const std::size_t n = s.energies.size();
  double rho_L = 0.0;
  double rho_R = 0.0;
  if (clock == 0) rho_L = rng.exponential_mean(params_.T_L);
  if (clock == n) rho_R = rng.exponential_mean(params_.T_R);
  const double p = rng.uniform_open();
  see_exchange(s, clock, p, rho_L, rho_R);
}

engine::EventRates see_rates(const SeeState& s, const SeeParams& params) {
  engine::EventRates out;
  SeeModel(params).rates(s, out);
  return out;
}

SeeState see_initial_draw(const SeeParams& params, RngStream& rng) {
  SeeState s;
  s.energies.resize(static_cast<std::size_t>(params.n_sites));
  const double mean = 0.5 * (params.T_L + params.T_R);
  for (auto& e : s.energies) e = rng.exponential_mean(mean);
  return s;
}

std::string encode_see(const SeeState& s) {
  std::string out;
  for (std::size_t i = 0; i < s.energies.size(); ++i) {
    if (i) out += ',';
    out += format_shortest(s.energies[i]);
  }
  return out;
}

SeeState decode_see(std::string_view line) {
  SeeState s;
  for (auto field : split(line, ',')) s.energies.push_back(parse_double(field));
  if (!s.valid()) throw std::invalid_argument("decode_see: energies must be positive");
  return s;
}

}  // namespace polymix::models
