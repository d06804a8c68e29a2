#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "ahfic/fic.hpp"
#include "ahfic/sampling.hpp"

namespace ahfic {

/// Finite weighted set of focus points (t_k, x_k, w_k).
struct WeightMeasure {
  struct Atom {
    double t = 0.0;
    Eigen::VectorXd x;
    double w = 0.0;
  };
  std::vector<Atom> atoms;

  double total() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.w;
    return s;
  }

  bool uniform() const {
    return std::all_of(atoms.begin(), atoms.end(),
                       [&](const Atom& a) { return a.w == atoms.front().w; });
  }

  void validate(std::size_t q, double tau) const {
    if (atoms.empty()) throw DomainError("weight measure has no atoms");
    for (const auto& a : atoms) {
      if (!(a.w >= 0.0) || !std::isfinite(a.w)) throw DomainError("atom weight must be >= 0");
      if (!(a.t > 0.0) || a.t > tau) throw DomainError("atom time must lie in (0, tau]");
      if (static_cast<std::size_t>(a.x.size()) != q)
        throw DomainError("atom covariate vector has wrong length");
    }
  }
};

struct WficScore {
  double v_int = 0.0;
  double sqb_int_raw = 0.0;
  double sqb_int_plus = 0.0;
  double wfic = 0.0;       // v_int + max(0, sqb_int_raw)
  double wfic_star = 0.0;  // v_int + sqb_int_raw
  double h_mean = 0.0;
  double h_sd = 0.0;
};

/// Full-model references for every atom of a measure.
struct MeasureReference {
  WeightMeasure measure;
  std::vector<FocusReference> atoms;
};

inline MeasureReference make_reference(const SemiparFit& full, const WeightMeasure& w) {
  w.validate(full.data().q(), full.tau());
  MeasureReference r{w, {}};
  r.atoms.reserve(w.atoms.size());
  for (const auto& a : w.atoms) r.atoms.push_back(make_reference(full, FocusPoint{a.t, a.x, {}}));
  return r;
}

/// Weighted mean and standard deviation with reliability weights; for equal
/// weights this is the ordinary sample SD (denominator N - 1).
inline std::pair<double, double> weighted_mean_sd(const std::vector<double>& h,
                                                  const std::vector<double>& w) {
  double v1 = 0.0, v2 = 0.0, m = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    v1 += w[k];
    v2 += w[k] * w[k];
    m += w[k] * h[k];
  }
  if (v1 <= 0.0) return {0.0, 0.0};
  m /= v1;
  double ss = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) ss += w[k] * (h[k] - m) * (h[k] - m);
  const double denom = v1 - v2 / v1;
  return {m, denom > 0.0 ? std::sqrt(ss / denom) : 0.0};
}

/// Aggregates variance and squared-bias estimates over the measure, then
/// truncates the aggregate squared bias once.
inline WficScore wfic_score(const SemiparFit& fit, const MeasureReference& ref) {
  WficScore s;
  std::vector<double> h, w;
  h.reserve(ref.atoms.size());
  w.reserve(ref.atoms.size());
  for (std::size_t k = 0; k < ref.atoms.size(); ++k) {
    const double wk = ref.measure.atoms[k].w;
    const FicScore f = fic_score(fit, ref.atoms[k]);
    s.v_int += wk * f.v;
    s.sqb_int_raw += wk * f.sqb_raw;
    h.push_back(f.h_hat);
    w.push_back(wk);
  }
  s.sqb_int_plus = std::max(0.0, s.sqb_int_raw);
  s.wfic = s.v_int + s.sqb_int_plus;
  s.wfic_star = s.v_int + s.sqb_int_raw;
  std::tie(s.h_mean, s.h_sd) = weighted_mean_sd(h, w);
  return s;
}

inline WficScore wfic_score(const SemiparFit& fit, const SemiparFit& full, const WeightMeasure& w) {
  return wfic_score(fit, make_reference(full, w));
}

/// Covariates taking exactly two distinct values; returns those values.
inline std::vector<std::pair<double, double>> dichotomous_levels(const Dataset& ds,
                                                                 std::vector<bool>& is_binary) {
  std::vector<std::pair<double, double>> levels(ds.q());
  is_binary.assign(ds.q(), false);
  for (std::size_t j = 0; j < ds.q(); ++j) {
    std::set<double> vals;
    for (std::size_t i = 0; i < ds.n() && vals.size() <= 2; ++i)
      vals.insert(ds.covariates()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    if (vals.size() == 2) {
      is_binary[j] = true;
      levels[j] = {*vals.begin(), *vals.rbegin()};
    }
  }
  return levels;
}

/// `count` virtual patients at time t_focus: fixed covariates pinned, the rest
/// drawn from the conditional normal given them (empirical mean and
/// covariance). Two-valued covariates are rounded to the nearer level and
/// constant columns keep their value.
inline WeightMeasure virtual_patient_measure(const Dataset& ds,
                                             const std::vector<std::pair<std::size_t, double>>& fixed,
                                             std::size_t count, double t_focus,
                                             std::uint64_t seed) {
  if (count == 0) throw DomainError("virtual patient count must be positive");
  if (!(t_focus > 0.0) || t_focus > ds.tau()) throw DomainError("focus time must lie in (0, tau]");
  const auto q = ds.q();
  const auto n = static_cast<double>(ds.n());
  const Eigen::MatrixXd& x = ds.covariates();
  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = ds.n() > 1 ? Eigen::MatrixXd(centered.transpose() * centered / (n - 1.0))
                                         : Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q),
                                                                 static_cast<Eigen::Index>(q));

  Eigen::VectorXd base = mean;
  std::vector<bool> pinned(q, false);
  std::vector<int> cond;  // fixed and informative
  for (const auto& [j, v] : fixed) {
    if (j >= q) throw DomainError("fixed covariate index out of range");
    if (pinned[j]) throw DomainError("covariate fixed twice");
    pinned[j] = true;
    base[static_cast<Eigen::Index>(j)] = v;
  }
  std::vector<int> free;
  for (std::size_t j = 0; j < q; ++j) {
    const bool constant = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) <= 0.0;
    if (pinned[j]) {
      if (!constant) cond.push_back(static_cast<int>(j));
    } else if (!constant) {
      free.push_back(static_cast<int>(j));
    }
  }

  std::vector<bool> is_binary;
  const auto levels = dichotomous_levels(ds, is_binary);

  WeightMeasure w;
  const double wt = 1.0 / static_cast<double>(count);
  if (free.empty()) {
    for (std::size_t k = 0; k < count; ++k) w.atoms.push_back({t_focus, base, wt});
    return w;
  }

  Eigen::VectorXd mu = detail::pick(mean, free);
  Eigen::MatrixXd sigma = detail::principal(cov, free, free);
  if (!cond.empty()) {
    const Eigen::MatrixXd s_ff = detail::principal(cov, cond, cond);
    const Eigen::MatrixXd s_rf = detail::principal(cov, free, cond);
    Eigen::LLT<Eigen::MatrixXd> llt(s_ff);
    if (llt.info() != Eigen::Success || llt.rcond() < kSingularRcond)
      throw DegenerateConditional("covariance of the fixed covariates is singular");
    const Eigen::VectorXd dev = detail::pick(base, cond) - detail::pick(mean, cond);
    mu += s_rf * llt.solve(dev);
    sigma -= s_rf * llt.solve(s_rf.transpose());
  }
  sigma = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<Eigen::MatrixXd> chol(sigma);
  if (chol.info() != Eigen::Success || chol.rcond() < kSingularRcond)
    throw DegenerateConditional("conditional covariance is singular");
  const Eigen::MatrixXd lower = chol.matrixL();

  Rng rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(free.size()));
  for (std::size_t k = 0; k < count; ++k) {
    for (Eigen::Index r = 0; r < z.size(); ++r) z[r] = normal(rng);
    const Eigen::VectorXd draw = mu + lower * z;
    Eigen::VectorXd xk = base;
    for (std::size_t r = 0; r < free.size(); ++r) {
      const auto j = static_cast<std::size_t>(free[r]);
      double v = draw[static_cast<Eigen::Index>(r)];
      if (is_binary[j]) {
        const auto [lo, hi] = levels[j];
        v = (std::abs(v - lo) <= std::abs(v - hi)) ? lo : hi;
      }
      xk[static_cast<Eigen::Index>(j)] = v;
    }
    w.atoms.push_back({t_focus, std::move(xk), wt});
  }
  return w;
}

struct MeasureDiagnostics {
  /// Censored subjects whose fitted survival at the censoring time is 0.
  std::size_t degenerate = 0;
};

/// Empirical (t, x) distribution with censored times replaced by r draws from
/// the fitted model conditional on survival past the censoring time; times
/// are capped at tau.
inline WeightMeasure empirical_measure(const SemiparFit& full, std::size_t r, std::uint64_t seed,
                                       MeasureDiagnostics* diag = nullptr) {
  if (r == 0) throw DomainError("empirical measure needs r >= 1");
  const Dataset& ds = full.data();
  const double tau = ds.tau();
  const double wt = 1.0 / static_cast<double>(ds.n() * r);
  Rng rng(seed);
  WeightMeasure w;
  w.atoms.reserve(ds.n() * r);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto& s = ds.subject(i);
    const bool draw = s.status == 0 && s.time < tau;
    HazardSampler life;
    bool degenerate = false;
    if (draw) {
      life = lifetime_sampler(full, s.covariates);
      degenerate = !(life.survival(s.time) > 0.0);
      if (degenerate && diag) ++diag->degenerate;
    }
    for (std::size_t j = 0; j < r; ++j) {
      double t = std::min(s.time, tau);
      if (draw && !degenerate) t = std::min(life.sample(rng, s.time), tau);
      w.atoms.push_back({t, s.covariates, wt});
    }
  }
  return w;
}

}  // namespace ahfic
