#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ahfic/dataset.hpp"
#include "ahfic/errors.hpp"
#include "ahfic/model_spec.hpp"

namespace ahfic {

/// Gram matrices with reciprocal condition number below this are singular.
inline constexpr double kSingularRcond = 1e-10;

/// Right-continuous pure-jump function starting at 0.
class StepFunction {
 public:
  StepFunction() = default;
  StepFunction(std::vector<double> times, std::vector<double> sizes)
      : times_(std::move(times)), sizes_(std::move(sizes)), cum_(sizes_.size()) {
    double s = 0.0;
    for (std::size_t k = 0; k < sizes_.size(); ++k) cum_[k] = (s += sizes_[k]);
  }

  double operator()(double t) const {
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 0.0;
    return cum_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& sizes() const noexcept { return sizes_; }

 private:
  std::vector<double> times_;
  std::vector<double> sizes_;
  std::vector<double> cum_;
};

/// Piece of a fitted cumulative hazard: constant rate on (left, right] and a
/// jump at right.
struct HazardSegment {
  double left = 0.0;
  double right = 0.0;
  double rate = 0.0;
  double jump = 0.0;
};

namespace detail {

inline Eigen::MatrixXd principal(const Eigen::MatrixXd& g, const std::vector<int>& a,
                                 const std::vector<int>& b) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < b.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = g(a[r], b[c]);
  return out;
}

inline Eigen::VectorXd pick(const Eigen::Ref<const Eigen::VectorXd>& x, const std::vector<int>& a) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(a.size()));
  for (std::size_t r = 0; r < a.size(); ++r) out[static_cast<Eigen::Index>(r)] = x[a[r]];
  return out;
}

/// Cholesky factor of a symmetric Gram matrix, or nullopt when singular.
inline std::optional<Eigen::LLT<Eigen::MatrixXd>> factor(const Eigen::MatrixXd& g) {
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const double rc = llt.rcond();
  if (!(rc >= kSingularRcond)) return std::nullopt;
  return llt;
}

}  // namespace detail

/// Least-squares fit of the additive model with time-varying effects on I and
/// constant effects on J. Immutable; holds everything needed to evaluate the
/// estimator and its influence weights at any focus.
struct SemiparFit {
  DesignPtr design;
  ModelSpec spec;
  std::vector<int> tv;   // I
  std::vector<int> cst;  // J
  Eigen::VectorXd alpha;  // constant effects, hazard per unit time

  // Per interval k of the grid.
  std::vector<Eigen::MatrixXd> proj;  // {Y_I'Y_I}^{-1} Y_I'Y_J, |I| x |J|
  Eigen::MatrixXd slope;              // drift of A_I, |I| x m
  Eigen::MatrixXd jumps;              // jump of A_I at right end, |I| x m
  // Values at interval left ends (column k) and at tau (column m).
  Eigen::MatrixXd a_cum;             // A_I, |I| x (m+1)
  std::vector<Eigen::MatrixXd> p_cum;  // integral of proj, |I| x |J|

  // Per observed event e (aligned with design->events).
  Eigen::MatrixXd event_gain;     // {Y_I'Y_I}^{-1} x_{iI}, events x |I|
  Eigen::MatrixXd event_resid;    // row of Ytilde_J, events x |J|
  Eigen::MatrixXd inv_info;       // {int Ytilde_J'Ytilde_J ds}^{-1}, |J| x |J|

  const Dataset& data() const { return design->data; }
  const TimeGrid& grid() const { return design->grid; }
  double tau() const { return design->data.tau(); }

  /// A_I(t) for every time-varying covariate.
  Eigen::VectorXd cumulative_tv(double t) const {
    const auto ni = static_cast<Eigen::Index>(tv.size());
    if (ni == 0 || t <= 0.0) return Eigen::VectorXd::Zero(ni);
    const auto k = grid().interval_of(t);
    const auto kk = static_cast<Eigen::Index>(k);
    const auto& iv = grid().intervals[k];
    Eigen::VectorXd v = a_cum.col(kk) + slope.col(kk) * (t - iv.left);
    if (t == iv.right) v += jumps.col(kk);
    return v;
  }

  /// A_j(t) for covariate j (0-based): time-varying component, alpha_j * t
  /// for a constant effect, 0 when excluded.
  double coefficient(int j, double t) const {
    auto it = std::find(tv.begin(), tv.end(), j);
    if (it != tv.end()) return cumulative_tv(t)[it - tv.begin()];
    it = std::find(cst.begin(), cst.end(), j);
    if (it != cst.end()) return alpha[it - cst.begin()] * t;
    return 0.0;
  }

  /// Integral of proj over (0, t].
  Eigen::MatrixXd proj_integral(double t) const {
    const auto ni = static_cast<Eigen::Index>(tv.size());
    const auto nj = static_cast<Eigen::Index>(cst.size());
    if (t <= 0.0 || ni == 0 || nj == 0) return Eigen::MatrixXd::Zero(ni, nj);
    const auto k = grid().interval_of(t);
    return p_cum[k] + proj[k] * (t - grid().intervals[k].left);
  }

  /// Cumulative hazard of covariate vector x as rate segments plus jumps.
  std::vector<HazardSegment> hazard_path(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd xi = detail::pick(x, tv);
    const Eigen::VectorXd xj = detail::pick(x, cst);
    const double base = cst.empty() ? 0.0 : xj.dot(alpha);
    std::vector<HazardSegment> out;
    out.reserve(grid().size());
    for (std::size_t k = 0; k < grid().size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const auto& iv = grid().intervals[k];
      HazardSegment seg{iv.left, iv.right, base, 0.0};
      if (!tv.empty()) {
        seg.rate += xi.dot(slope.col(kk));
        seg.jump = xi.dot(jumps.col(kk));
      }
      out.push_back(seg);
    }
    return out;
  }
};

namespace detail {

inline SemiparFit fit_impl(const DesignPtr& design, const ModelSpec& spec) {
  const Dataset& ds = design->data;
  const TimeGrid& grid = design->grid;
  const GramCache& gc = design->gram;
  if (spec.q() != ds.q()) throw ValidationError("model spec does not match covariate count");
  if (spec.empty()) throw EmptyModel();

  SemiparFit f;
  f.design = design;
  f.spec = spec;
  f.tv = spec.time_varying();
  f.cst = spec.constant();
  const auto ni = static_cast<Eigen::Index>(f.tv.size());
  const auto nj = static_cast<Eigen::Index>(f.cst.size());
  const auto m = grid.size();
  const auto mm = static_cast<Eigen::Index>(m);
  const auto ne = static_cast<Eigen::Index>(design->events.size());
  const auto& x = ds.covariates();

  f.proj.assign(m, Eigen::MatrixXd::Zero(ni, nj));
  f.slope = Eigen::MatrixXd::Zero(ni, mm);
  f.jumps = Eigen::MatrixXd::Zero(ni, mm);
  f.event_gain = Eigen::MatrixXd::Zero(ne, ni);
  f.event_resid = Eigen::MatrixXd::Zero(ne, nj);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(nj, nj);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(nj);

  std::size_t e = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& iv = grid.intervals[k];
    const auto n_events = grid.events_in(k).size();
    if (gc.at_risk_count[k] == 0) continue;
    const bool need_inverse = ni > 0 && (nj > 0 || n_events > 0);
    std::optional<Eigen::LLT<Eigen::MatrixXd>> llt;
    if (need_inverse) {
      llt = factor(principal(gc.gram[k], f.tv, f.tv));
      if (!llt) throw SingularDesign(iv.right, "time-varying Gram matrix is singular");
    }
    if (nj > 0) {
      const Eigen::MatrixXd gjj = principal(gc.gram[k], f.cst, f.cst);
      if (ni > 0) {
        const Eigen::MatrixXd gij = principal(gc.gram[k], f.tv, f.cst);
        f.proj[k] = llt->solve(gij);
        info += iv.length * (gjj - gij.transpose() * f.proj[k]);
      } else {
        info += iv.length * gjj;
      }
    }
    for (auto i : grid.events_in(k)) {
      const auto ee = static_cast<Eigen::Index>(e);
      const Eigen::VectorXd xr = x.row(static_cast<Eigen::Index>(i)).transpose();
      const Eigen::VectorXd xi = pick(xr, f.tv);
      if (ni > 0) {
        f.event_gain.row(ee) = llt->solve(xi).transpose();
        f.jumps.col(static_cast<Eigen::Index>(k)) += f.event_gain.row(ee).transpose();
      }
      if (nj > 0) {
        Eigen::VectorXd r = pick(xr, f.cst);
        if (ni > 0) r -= f.proj[k].transpose() * xi;
        f.event_resid.row(ee) = r.transpose();
        score += r;
      }
      ++e;
    }
  }

  f.alpha = Eigen::VectorXd::Zero(nj);
  f.inv_info = Eigen::MatrixXd::Zero(nj, nj);
  if (nj > 0) {
    info = 0.5 * (info + info.transpose());
    auto llt = factor(info);
    if (!llt) throw SingularDesign(ds.tau(), "integrated constant-effect information is singular");
    f.alpha = llt->solve(score);
    f.inv_info = llt->solve(Eigen::MatrixXd::Identity(nj, nj));
  }

  f.a_cum = Eigen::MatrixXd::Zero(ni, mm + 1);
  f.p_cum.assign(m + 1, Eigen::MatrixXd::Zero(ni, nj));
  for (std::size_t k = 0; k < m; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double len = grid.intervals[k].length;
    if (ni > 0 && nj > 0) f.slope.col(kk) = -f.proj[k] * f.alpha;
    f.a_cum.col(kk + 1) = f.a_cum.col(kk) + f.slope.col(kk) * len + f.jumps.col(kk);
    f.p_cum[k + 1] = f.p_cum[k] + f.proj[k] * len;
  }
  return f;
}

}  // namespace detail

/// Semiparametric least-squares fit for the given partition.
inline SemiparFit fit_semiparametric(const DesignPtr& design, const ModelSpec& spec) {
  return detail::fit_impl(design, spec);
}

/// Nonparametric Aalen fit with every covariate time-varying.
inline SemiparFit fit_full(const DesignPtr& design) {
  return detail::fit_impl(design, ModelSpec::full(design->data.q()));
}

/// Per-event influence weights K_i(t_k) of a fit for a focus; entry e matches
/// design->events[e].
struct WeightRows {
  std::vector<double> values;
};

inline WeightRows weight_rows(const SemiparFit& fit, const FocusPoint& focus) {
  validate_focus(focus, fit.data().q(), fit.tau());
  const double t0 = focus.start();
  const Eigen::VectorXd xi = detail::pick(focus.x, fit.tv);
  const Eigen::VectorXd xj = detail::pick(focus.x, fit.cst);
  const auto& events = fit.design->events;

  WeightRows w;
  w.values.assign(events.size(), 0.0);
  Eigen::VectorXd u;
  if (!fit.cst.empty()) {
    Eigen::VectorXd c = (focus.t - t0) * xj;
    if (!fit.tv.empty())
      c -= (fit.proj_integral(focus.t) - fit.proj_integral(t0)).transpose() * xi;
    u = fit.inv_info * c;
  }
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto ee = static_cast<Eigen::Index>(e);
    double v = 0.0;
    if (!fit.tv.empty() && events[e].time > t0 && events[e].time <= focus.t)
      v += fit.event_gain.row(ee).dot(xi);
    if (!fit.cst.empty()) v += fit.event_resid.row(ee).dot(u);
    w.values[e] = v;
  }
  return w;
}

/// H(t, x) under the fit, or the increment from t0 when set.
inline double cumhaz(const SemiparFit& fit, const FocusPoint& focus) {
  validate_focus(focus, fit.data().q(), fit.tau());
  const double t0 = focus.start();
  double h = 0.0;
  if (!fit.tv.empty()) {
    const Eigen::VectorXd xi = detail::pick(focus.x, fit.tv);
    h += xi.dot(fit.cumulative_tv(focus.t) - fit.cumulative_tv(t0));
  }
  if (!fit.cst.empty()) h += detail::pick(focus.x, fit.cst).dot(fit.alpha) * (focus.t - t0);
  return h;
}

struct SurvivalEstimate {
  double value = 1.0;
  /// Raw product left [0, 1] and was clamped.
  bool clamped = false;
  /// Some hazard increment was negative or a jump exceeded 1.
  bool nonmonotone = false;
};

/// Product-integral survival over (t0, t]: jump factors (1 - dH) times
/// exp(-continuous part).
inline SurvivalEstimate survival(const SemiparFit& fit, const FocusPoint& focus) {
  validate_focus(focus, fit.data().q(), fit.tau());
  const double t0 = focus.start();
  SurvivalEstimate s;
  double prod = 1.0;
  double cont = 0.0;
  for (const auto& seg : fit.hazard_path(focus.x)) {
    if (seg.left >= focus.t) break;
    const double lo = std::max(seg.left, t0);
    const double hi = std::min(seg.right, focus.t);
    if (hi > lo) {
      cont += seg.rate * (hi - lo);
      if (seg.rate < 0.0) s.nonmonotone = true;
    }
    if (seg.right > t0 && seg.right <= focus.t && seg.jump != 0.0) {
      double factor = 1.0 - seg.jump;
      if (seg.jump < 0.0) s.nonmonotone = true;
      if (factor < 0.0) {
        s.nonmonotone = true;
        factor = 0.0;
      }
      prod *= factor;
    }
  }
  double v = prod * std::exp(-cont);
  if (v > 1.0 || v < 0.0) {
    s.clamped = true;
    v = std::clamp(v, 0.0, 1.0);
  }
  s.value = v;
  return s;
}

}  // namespace ahfic
