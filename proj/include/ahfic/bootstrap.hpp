#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "ahfic/sampling.hpp"
#include "ahfic/selector.hpp"

namespace ahfic {

struct AveragingConfig {
  std::optional<double> lambda;  // default_lambda when unset
  std::size_t M = 1;
};

/// Selection-plus-estimation procedure re-run on every bootstrap replicate.
struct Pipeline {
  std::vector<ModelSpec> candidates;
  Criterion criterion;
  /// Quantity reported by the pipeline. Unset: the criterion's focus, or for
  /// wFIC the weighted mean estimate over the measure.
  std::optional<FocusPoint> focus;
  /// Unset: estimate from the top-ranked model only.
  std::optional<AveragingConfig> averaging;
  RankOptions rank_options;
};

struct PipelineResult {
  double estimate = 0.0;
  ModelSpec selected;
  std::optional<AverageEstimate> average;
};

namespace detail {

inline bool same_focus(const FocusPoint& a, const FocusPoint& b) {
  return a.t == b.t && a.t0 == b.t0 && a.x.size() == b.x.size() && a.x == b.x;
}

}  // namespace detail

/// The pipeline's estimand evaluated under one fit.
inline double pipeline_estimand(const SemiparFit& fit, const Pipeline& p) {
  if (p.focus) return cumhaz(fit, *p.focus);
  if (!p.criterion.weighted()) return cumhaz(fit, p.criterion.focus);
  std::vector<double> h, w;
  for (const auto& a : p.criterion.measure.atoms) {
    h.push_back(cumhaz(fit, FocusPoint{a.t, a.x, {}}));
    w.push_back(a.w);
  }
  return weighted_mean_sd(h, w).first;
}

inline PipelineResult run_pipeline(const DesignPtr& design, const Pipeline& p,
                                   Ranking* ranking_out = nullptr) {
  Ranking r = rank(design, p.candidates, p.criterion, p.rank_options);
  const std::size_t M = p.averaging ? p.averaging->M : 1;
  if (M < 1) throw ValidationError("model average needs M >= 1");
  if (M > r.rows.size()) throw ValidationError("ranking has fewer than M rows");
  // Row estimates already match the estimand unless an explicit, different
  // focus was requested.
  const bool refit =
      p.focus && (p.criterion.weighted() || !detail::same_focus(p.criterion.focus, *p.focus));
  if (refit) {
    for (std::size_t m = 0; m < M; ++m)
      r.rows[m].h_hat = cumhaz(fit_semiparametric(design, r.rows[m].spec), *p.focus);
  }
  PipelineResult out;
  out.selected = r.rows.front().spec;
  if (p.averaging) {
    out.average = model_average(r, p.averaging->lambda, M);
    out.estimate = out.average->value;
  } else {
    out.estimate = r.rows.front().h_hat;
  }
  if (ranking_out) *ranking_out = std::move(r);
  return out;
}

/// Linear-interpolation sample quantile of sorted data (type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

struct BootstrapOptions {
  std::size_t workers = 1;
  /// Use the dataset's known censoring times instead of reverse Kaplan-Meier.
  bool known_censoring = false;
  /// Every replicate uses the same random stream (degenerate; for testing).
  bool identical_replicates = false;
  /// Fraction of failed replicates above which the result is flagged.
  double failure_warning = 0.2;
};

struct BootstrapResult {
  std::size_t B = 0;
  std::size_t failed = 0;
  double estimate = 0.0;  // pipeline estimate on the original data
  double h_full = 0.0;    // full-model estimand on the original data
  std::vector<double> errors;  // replicate estimate - h_full, replicate order
  double c = 0.0;  // alpha quantile of errors
  double d = 0.0;  // 1 - alpha quantile of errors
  double lower = 0.0;
  double upper = 0.0;
  double mse = 0.0;
  bool reliability_warning = false;
  /// How often each model was ranked first across successful replicates.
  std::vector<std::pair<ModelSpec, std::size_t>> selection_counts;
};

/// Bootstrap from the full fit: errors of the re-run pipeline against the
/// original full-model estimate give the interval
/// [estimate - d, estimate - c] with nominal coverage 1 - 2 alpha.
inline BootstrapResult bootstrap_ci(const DesignPtr& design, const Pipeline& p, std::size_t B,
                                    double alpha, std::uint64_t seed,
                                    const BootstrapOptions& opt = {}) {
  if (B < 2) throw ValidationError("bootstrap needs B >= 2");
  if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 1/2)");
  const Dataset& ds = design->data;
  const SemiparFit full = fit_full(design);

  BootstrapResult res;
  res.B = B;
  res.h_full = pipeline_estimand(full, p);
  res.estimate = run_pipeline(design, p).estimate;

  if (opt.known_censoring && !ds.has_known_censoring())
    throw ValidationError("dataset has no known censoring times");
  const CensoringSampler censoring = opt.known_censoring
                                         ? CensoringSampler::known(ds.known_censoring())
                                         : censoring_km(ds);
  const auto lifetimes = lifetime_samplers(full);

  Pipeline inner = p;
  inner.rank_options.workers = 1;
  std::vector<std::optional<PipelineResult>> reps(B);
  parallel_for(B, opt.workers, [&](std::size_t b) {
    Rng rng = derived_rng(seed, opt.identical_replicates ? 0 : b);
    auto sim = make_design(simulate_dataset(ds, lifetimes, censoring, rng));
    try {
      reps[b] = run_pipeline(sim, inner);
    } catch (const SingularDesign&) {
    } catch (const EmptyRanking&) {
    }
  });

  std::map<ModelSpec, std::size_t> counts;
  for (const auto& r : reps) {
    if (!r) {
      ++res.failed;
      continue;
    }
    res.errors.push_back(r->estimate - res.h_full);
    ++counts[r->selected];
  }
  if (res.errors.empty()) throw EmptyRanking("every bootstrap replicate failed");
  res.reliability_warning =
      static_cast<double>(res.failed) > opt.failure_warning * static_cast<double>(B);

  std::vector<double> sorted = res.errors;
  std::sort(sorted.begin(), sorted.end());
  res.c = quantile_sorted(sorted, alpha);
  res.d = quantile_sorted(sorted, 1.0 - alpha);
  res.lower = res.estimate - res.d;
  res.upper = res.estimate - res.c;
  double ss = 0.0;
  for (double e : res.errors) ss += e * e;
  res.mse = ss / static_cast<double>(res.errors.size());
  res.selection_counts.assign(counts.begin(), counts.end());
  std::stable_sort(res.selection_counts.begin(), res.selection_counts.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return res;
}

}  // namespace ahfic
