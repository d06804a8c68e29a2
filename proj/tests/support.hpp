#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ahfic/ahfic.hpp"

namespace testing_support {

using ahfic::Dataset;
using ahfic::Subject;

inline Dataset make_dataset(const std::vector<double>& times, const std::vector<int>& status,
                            const Eigen::MatrixXd& x, double tau) {
  std::vector<Subject> s;
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
  for (std::size_t i = 0; i < times.size(); ++i)
    s.push_back({times[i], status[i], x.row(static_cast<Eigen::Index>(i)).transpose()});
  return Dataset(std::move(s), std::move(names), tau);
}

/// Intercept-only data set.
inline Dataset intercept_only(const std::vector<double>& times, const std::vector<int>& status,
                              double tau) {
  return make_dataset(times, status, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(times.size()), 1),
                      tau);
}

struct RandomDataOptions {
  std::size_t n = 50;
  std::size_t q = 3;       // including the intercept
  bool binary = false;     // covariates 2..q in {0, 1} instead of U(0, 1)
  double tie_grid = 0.0;   // round times to this grid when positive
  double censor_max = 4.0; // censoring ~ U(0, censor_max)
  /// Window end placed so that at least this many subjects remain at risk.
  std::size_t min_at_risk = 0;
};

/// Additive-hazard data: hazard 0.3 + sum_j 0.4 x_j with nonnegative x, so
/// the truth is a valid hazard.
inline Dataset random_dataset(std::mt19937_64& rng, const RandomDataOptions& o) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(o.n), static_cast<Eigen::Index>(o.q));
  std::vector<double> times(o.n);
  std::vector<int> status(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double rate = 0.3;
    for (Eigen::Index j = 1; j < x.cols(); ++j) {
      x(ii, j) = o.binary ? (unif(rng) < 0.5 ? 0.0 : 1.0) : unif(rng);
      rate += 0.4 * x(ii, j);
    }
    double t = std::exponential_distribution<double>(rate)(rng);
    double c = o.censor_max * unif(rng);
    if (o.tie_grid > 0.0) {
      t = o.tie_grid * std::ceil(t / o.tie_grid);
      c = o.tie_grid * std::ceil(c / o.tie_grid);
    }
    times[i] = std::min(t, c);
    status[i] = t <= c ? 1 : 0;
  }
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  double tau = sorted.back();
  if (o.min_at_risk > 0 && o.min_at_risk < o.n) tau = sorted[o.n - o.min_at_risk];
  return make_dataset(times, status, x, tau);
}

/// Nelson-Aalen estimate sum_{s <= t} d(s) / Y(s), events restricted to (0, tau].
inline double nelson_aalen(const Dataset& ds, double t) {
  std::map<double, int> deaths;
  for (const auto& s : ds.subjects())
    if (s.status == 1 && s.time <= ds.tau() && s.time <= t) ++deaths[s.time];
  double h = 0.0;
  for (const auto& [time, d] : deaths) {
    int at_risk = 0;
    for (const auto& s : ds.subjects()) at_risk += s.time >= time ? 1 : 0;
    h += static_cast<double>(d) / at_risk;
  }
  return h;
}

/// Kaplan-Meier estimate of P(T > t) with events in (0, tau].
inline double kaplan_meier(const Dataset& ds, double t) {
  std::map<double, int> deaths;
  for (const auto& s : ds.subjects())
    if (s.status == 1 && s.time <= ds.tau() && s.time <= t) ++deaths[s.time];
  double surv = 1.0;
  for (const auto& [time, d] : deaths) {
    int at_risk = 0;
    for (const auto& s : ds.subjects()) at_risk += s.time >= time ? 1 : 0;
    surv *= 1.0 - static_cast<double>(d) / at_risk;
  }
  return surv;
}

/// Result of the stacked weighted least-squares problem: per-interval
/// increments of A_I and the constant effects alpha.
struct StackedSolution {
  std::vector<double> breakpoints;        // right ends of the intervals
  std::vector<Eigen::VectorXd> increments;  // A_I increment on each interval
  Eigen::VectorXd alpha;
};

/// Minimises sum_k (1/len_k) |dN_k - Y_I b_k - len_k Y_J alpha|^2 over all b_k
/// and alpha by one dense least-squares solve. The intervals are rebuilt
/// from the raw follow-up times, independently of the library's grid.
inline StackedSolution stacked_least_squares(const Dataset& ds, const std::vector<int>& I,
                                             const std::vector<int>& J) {
  const double tau = ds.tau();
  std::vector<double> pts;
  for (const auto& s : ds.subjects())
    if (s.time > 0.0 && s.time <= tau) pts.push_back(s.time);
  pts.push_back(tau);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  const auto ni = static_cast<Eigen::Index>(I.size());
  const auto nj = static_cast<Eigen::Index>(J.size());
  const auto m = static_cast<Eigen::Index>(pts.size());
  struct Row {
    Eigen::Index k;
    std::size_t i;
  };
  std::vector<Row> rows;
  for (Eigen::Index k = 0; k < m; ++k)
    for (std::size_t i = 0; i < ds.n(); ++i)
      if (ds.subject(i).time >= pts[static_cast<std::size_t>(k)]) rows.push_back({k, i});

  const Eigen::Index cols = m * ni + nj;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), cols);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    const auto k = rows[r].k;
    const auto& s = ds.subject(rows[r].i);
    const double right = pts[static_cast<std::size_t>(k)];
    const double left = k == 0 ? 0.0 : pts[static_cast<std::size_t>(k - 1)];
    const double len = right - left;
    const double w = 1.0 / std::sqrt(len);
    for (Eigen::Index c = 0; c < ni; ++c) a(rr, k * ni + c) = w * s.covariates[I[static_cast<std::size_t>(c)]];
    for (Eigen::Index c = 0; c < nj; ++c)
      a(rr, m * ni + c) = w * len * s.covariates[J[static_cast<std::size_t>(c)]];
    y[rr] = w * ((s.status == 1 && s.time == right) ? 1.0 : 0.0);
  }
  const Eigen::VectorXd sol = a.completeOrthogonalDecomposition().solve(y);
  StackedSolution out;
  out.breakpoints = pts;
  for (Eigen::Index k = 0; k < m; ++k) out.increments.push_back(sol.segment(k * ni, ni));
  out.alpha = sol.tail(nj);
  return out;
}

/// Every (I, J) partition of {0..q-1} with I or J nonempty.
inline std::vector<ahfic::ModelSpec> all_partitions(std::size_t q) {
  std::vector<ahfic::ModelSpec> out;
  for (const auto& s : ahfic::enumerate_models(q))
    if (!s.empty()) out.push_back(s);
  return out;
}

/// sum_e K_e dN_e: the estimator written as an integral against dN.
inline double integrate_weights(const ahfic::WeightRows& w) {
  double s = 0.0;
  for (double k : w.values) s += k;
  return s;
}

}  // namespace testing_support
