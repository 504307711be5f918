#ifndef PERSMED_METRICS_HPP
#define PERSMED_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "persmed/core.hpp"

namespace persmed {

class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Personalization level of a policy, in [0,1].
///
/// Each patient scores (c - a) / (b - a), where c is the mean CSR of the
/// chosen treatment and a, b are the min and max mean CSR over the
/// treatments of that patient's illness. An illness with a single CSR level
/// scores 0. The result is the average over patients (0 for no patients).
inline double personalization_level(const ScenarioInstance& inst, const Assignment& asg) {
  const std::size_t n = inst.patients.size();
  if (n == 0) return 0.0;
  // per-illness (min, max) mean CSR
  std::map<IllnessId, std::pair<double, double>> range;
  for (const auto& t : inst.treatments) {
    auto [it, fresh] = range.try_emplace(t.illness, t.csr_mean, t.csr_mean);
    if (!fresh) {
      it->second.first = std::min(it->second.first, t.csr_mean);
      it->second.second = std::max(it->second.second, t.csr_mean);
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [lo, hi] = range.at(inst.patients[i].illness);
    if (hi > lo) total += (inst.treatments[asg.chosen[i]].csr_mean - lo) / (hi - lo);
  }
  return total / static_cast<double>(n);
}

struct FitResult {
  std::vector<double> coefficients;
  double r_squared = 0.0;
  double residual_norm = 0.0;
  std::string basis;
};

namespace detail {

// R² = 1 - SS_res / SS_tot, reported as 0 when the targets are constant.
inline double r_squared(std::span<const double> ys, std::span<const double> fitted) {
  const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    ss_tot += (ys[k] - mean) * (ys[k] - mean);
    ss_res += (ys[k] - fitted[k]) * (ys[k] - fitted[k]);
  }
  if (ss_tot == 0.0) return 0.0;
  return 1.0 - ss_res / ss_tot;
}

inline double residual_norm(std::span<const double> ys, std::span<const double> fitted) {
  double ss = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) ss += (ys[k] - fitted[k]) * (ys[k] - fitted[k]);
  return std::sqrt(ss);
}

}  // namespace detail

/// Ordinary least squares for y = b1 x + b0; coefficients are [b0, b1].
inline FitResult linear_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("linear_fit: xs and ys differ in length");
  if (xs.size() < 2) throw DegenerateInput("linear_fit: need at least two points");
  const auto n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
  }
  if (sxx == 0.0) throw DegenerateInput("linear_fit: all x values are identical");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;

  std::vector<double> fitted(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) fitted[k] = intercept + slope * xs[k];
  return FitResult{{intercept, slope}, detail::r_squared(ys, fitted),
                   detail::residual_norm(ys, fitted), "y = b0 + b1*x"};
}

struct SurfacePoint {
  double delta_oeb = 0.0;
  double delta_csr = 0.0;
  double count = 0.0;
};

inline constexpr const char* kSurfaceBasis = "count = c0 + c1*dOEB + c2*dOEB^2 + c3*dCSR + c4*dOEB*dCSR";
inline constexpr std::array<const char*, 5> kSurfaceCoefNames = {"const", "d_oeb", "d_oeb_sq", "d_csr",
                                                                 "d_oeb_x_d_csr"};

/// Least-squares fit of count over the basis {1, dOEB, dOEB², dCSR, dOEB·dCSR}.
inline FitResult poly_surface_fit(std::span<const SurfacePoint> points) {
  constexpr Eigen::Index kCols = 5;
  if (points.size() < static_cast<std::size_t>(kCols))
    throw DegenerateInput("poly_surface_fit: need at least 5 points");
  const auto rows = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd design(rows, kCols);
  Eigen::VectorXd target(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& p = points[static_cast<std::size_t>(r)];
    design(r, 0) = 1.0;
    design(r, 1) = p.delta_oeb;
    design(r, 2) = p.delta_oeb * p.delta_oeb;
    design(r, 3) = p.delta_csr;
    design(r, 4) = p.delta_oeb * p.delta_csr;
    target(r) = p.count;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < kCols) throw DegenerateInput("poly_surface_fit: design matrix is rank deficient");
  const Eigen::VectorXd coef = qr.solve(target);
  const Eigen::VectorXd fitted_v = design * coef;

  std::vector<double> ys(target.data(), target.data() + rows);
  std::vector<double> fitted(fitted_v.data(), fitted_v.data() + rows);
  return FitResult{std::vector<double>(coef.data(), coef.data() + kCols),
                   detail::r_squared(ys, fitted), detail::residual_norm(ys, fitted), kSurfaceBasis};
}

/// Normalized selection counts on a (ΔOEB, ΔCSR) grid.
struct HeatmapGrid {
  double bin_width = 0.01;
  std::map<std::pair<std::int64_t, std::int64_t>, double> cells;

  double total() const {
    double s = 0.0;
    for (const auto& [_, v] : cells) s += v;
    return s;
  }
};

namespace detail {

inline double round9(double v) { return std::round(v * 1e9) / 1e9; }

// Values are rounded to 9 decimals before flooring, and so is the quotient,
// so that 0.29 / 0.01 lands in bin 29 rather than 28.
inline std::int64_t bin_index(double value, double width) {
  return static_cast<std::int64_t>(std::floor(round9(round9(value) / width)));
}

}  // namespace detail

inline HeatmapGrid bin_selections(std::span<const std::pair<double, double>> selections,
                                  double bin_width = 0.01) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("bin_selections: bin_width must be positive");
  HeatmapGrid grid;
  grid.bin_width = bin_width;
  if (selections.empty()) return grid;
  std::map<std::pair<std::int64_t, std::int64_t>, std::uint64_t> counts;
  for (const auto& [doeb, dcsr] : selections)
    ++counts[{detail::bin_index(doeb, bin_width), detail::bin_index(dcsr, bin_width)}];
  const auto total = static_cast<double>(selections.size());
  for (const auto& [key, c] : counts) grid.cells[key] = static_cast<double>(c) / total;
  return grid;
}

// Summary statistics ------------------------------------------------------

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace detail {

inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e + 1 < order.size() && xs[order[e + 1]] == xs[order[k]]) ++e;
    const double r = (static_cast<double>(k) + static_cast<double>(e)) / 2.0 + 1.0;
    for (std::size_t q = k; q <= e; ++q) ranks[order[q]] = r;
    k = e + 1;
  }
  return ranks;
}

}  // namespace detail

/// Spearman rank correlation with average ranks for ties; 0 if either side is constant.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return 0.0;
  const auto rx = detail::average_ranks(xs);
  const auto ry = detail::average_ranks(ys);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace persmed

#endif  // PERSMED_METRICS_HPP
