#pragma once

// Survival-curve estimation for first-passage times and the statistics built
// on it: Agresti-Coull intervals, log-log slope fits and the sup statistic
// gamma = sup_t P[tau > t] t^beta.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "polymix/engine.hpp"

namespace polymix::tails {

struct Interval {
  double p_tilde = 0.0;
  double halfwidth = 0.0;
};

/// N~ = n + z^2, p~ = (m + z^2/2) / N~, halfwidth = z sqrt(p~(1-p~)/N~).
/// Throws std::domain_error unless 0 <= m <= n, n >= 1, z >= 0.
Interval agresti_coull(std::uint64_t m, std::uint64_t n, double z);

/// Log-spaced grid: t_k = t_min 10^(k / per_decade) for every t_k <= t_max,
/// with t_max appended when it is not already (within 1e-12) the last point.
std::vector<double> log_grid(double t_min, double t_max, int per_decade = 40);

struct SurvivalCurve {
  std::vector<double> grid;
  std::vector<std::uint64_t> counts;  // m_k = #{tau > t_k}
  std::uint64_t n_total = 0;
  double z = 1.96;
  std::vector<double> p_tilde;
  std::vector<double> halfwidth;

  std::size_t size() const { return grid.size(); }
  /// Plain empirical tail m_k / n.
  double raw(std::size_t k) const {
    return static_cast<double>(counts[k]) / static_cast<double>(n_total);
  }
  void check() const;
};

/// Fill p_tilde / halfwidth from counts.
SurvivalCurve curve_from_counts(std::vector<double> grid, std::vector<std::uint64_t> counts,
                                std::uint64_t n_total, double z);

/// m_k counts Censored outcomes as exceeding every grid point. Throws on an
/// empty sample, a non-increasing grid, or a grid point beyond a censoring
/// horizon.
SurvivalCurve estimate_survival(std::span<const engine::PassageOutcome> outcomes,
                                const std::vector<double>& grid, double z = 1.96);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return size() == 0; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Leading run of grid points with m_k >= m_min (counts are non-increasing).
IndexRange reliable_range(const SurvivalCurve& curve, std::uint64_t m_min = 100);

/// Drop points of `range` with t_k < t_lo.
IndexRange restrict_from(const SurvivalCurve& curve, IndexRange range, double t_lo);

/// Large-t window for slope fits: the reliable points within `decades` of the
/// last reliable grid time, and no earlier than t_lo.
IndexRange tail_window(const SurvivalCurve& curve, std::uint64_t m_min, double decades, double t_lo);

struct TailFit {
  double beta = 0.0;
  double std_err = 0.0;
  double intercept = 0.0;  // log p~ at log t = 0
  IndexRange fit_range;
  std::size_t points() const { return fit_range.size(); }
};

/// Weighted least squares of log p~_k on log t_k with weights
/// (halfwidth_k / p~_k)^-2 (unweighted when any halfwidth is zero).
/// beta is the negated slope; std_err is the regression standard error.
TailFit fit_slope(const SurvivalCurve& curve, IndexRange range);

struct GammaEstimate {
  double value = 0.0;
  double argmax_time = 0.0;
  std::size_t argmax_index = 0;
  bool stabilized = false;
  double std_dev = 0.0;
  std::size_t batches_used = 0;
  std::vector<double> prefix_values;  // gamma on the n/4, n/2, n prefixes
};

/// max over reliable t_k >= h of p~_k t_k^beta. Throws when no such point.
GammaEstimate gamma_estimate(const SurvivalCurve& curve, double beta, double h,
                             std::uint64_t m_min = 100);

/// Survival counts split into contiguous sample blocks so that prefixes and
/// batches of the sample can be re-analysed without re-simulating.
class PassageTally {
 public:
  static constexpr std::size_t kDefaultBlocks = 40;

  PassageTally() = default;
  PassageTally(std::vector<double> grid, std::uint64_t n_samples,
               std::size_t n_blocks = kDefaultBlocks);

  /// Block of sample index i (contiguous, depends only on n_samples).
  std::size_t block_of(std::uint64_t i) const;
  void add(std::uint64_t sample_index, const engine::PassageOutcome& o);
  void merge(const PassageTally& other);

  const std::vector<double>& grid() const { return grid_; }
  std::size_t n_blocks() const { return hist_.size(); }
  std::uint64_t n_samples() const { return n_samples_; }
  std::uint64_t recorded() const;
  std::uint64_t censored() const;

  /// Curve over blocks [b0, b1).
  SurvivalCurve curve(double z, std::size_t b0, std::size_t b1) const;
  SurvivalCurve curve(double z) const { return curve(z, 0, n_blocks()); }

 private:
  std::vector<double> grid_;
  std::uint64_t n_samples_ = 0;
  // hist_[b][j] = # samples in block b with exactly j grid points < tau.
  std::vector<std::vector<std::uint64_t>> hist_;
};

struct GammaOptions {
  std::uint64_t m_min = 100;
  double z = 1.96;
  std::size_t batches = 10;
  double stabilization_tol = 0.05;
};

/// gamma_estimate on the full tally, flagged stabilized when the n/4 -> n/2
/// and n/2 -> n prefixes each change gamma by less than the tolerance.
/// std_dev is the standard error of the batch-mean gamma, or the binomial sd
/// at the argmax when fewer than two batches have a reliable point.
GammaEstimate gamma_from_tally(const PassageTally& tally, double beta, double h,
                               const GammaOptions& opts = {});

/// Slope fit over `window` with a batch standard error alongside the
/// regression one. Each batch is fitted on its own reliable points inside the
/// window.
struct BatchedFit {
  TailFit fit;
  double batch_std_err = 0.0;
  double combined_std_err() const;
};
BatchedFit fit_slope_batched(const PassageTally& tally, IndexRange window,
                             const GammaOptions& opts = {});

// --- moments versus tails ---------------------------------------------------

using TailFunction = std::function<double(double)>;  // n -> P[Z > n]

struct MomentSeries {
  double order = 0.0;
  std::vector<std::uint64_t> checkpoints;  // 10, 100, ..., n_max
  std::vector<double> partial_sums;        // truncated E[Z^order] at each checkpoint
  double last_term = 0.0;                  // n^order P[Z = n] at n = n_max
  double decade_ratio = 0.0;               // last decade increment / previous one
  bool converged = false;
  double value() const { return partial_sums.empty() ? 0.0 : partial_sums.back(); }
};

/// Truncated sum_{n=1}^{n_max} n^order P[Z = n]. Converged when the final
/// term is below `tol` and the decade increments shrink (ratio < 0.9).
MomentSeries truncated_moment(const TailFunction& tail, double order, std::uint64_t n_max,
                              double tol = 1e-6);

struct MomentTailReport {
  double beta = 0.0;
  double epsilon = 0.0;
  MomentSeries below;  // order beta - epsilon
  MomentSeries at;     // order beta
  double tail_product = 0.0;  // n^beta P[Z > n] at n_max
  bool consistent() const { return below.converged && !at.converged; }
};

MomentTailReport moment_tail_check(const TailFunction& tail, double beta, double epsilon,
                                   std::uint64_t n_max = 1'000'000, double tol = 1e-6);

/// Step tail from an empirical curve: raw(k) at the last grid point <= n, 1
/// before the first point. Valid for n up to the last grid point.
TailFunction tail_from_curve(const SurvivalCurve& curve);

// --- CSV ---------------------------------------------------------------------

/// `t,m,n,p_tilde,halfwidth` with 17 significant digits.
std::string survival_csv(const SurvivalCurve& curve);

}  // namespace polymix::tails
