#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>

#include "ahfic/estimators.hpp"

namespace ahfic {

struct FicScore {
  double v = 0.0;         // variance estimate
  double b = 0.0;         // bias estimate against the full model
  double tau2 = 0.0;      // variance of the bias estimate
  double sqb_raw = 0.0;   // b^2 - tau2, may be negative
  double sqb_plus = 0.0;  // max(0, sqb_raw)
  double fic = 0.0;       // v + sqb_plus
  double fic_star = 0.0;  // v + sqb_raw
  double h_hat = 0.0;     // submodel estimate of the focus
};

/// Sum of squared weights over all observed events in (0, tau].
inline double variance_estimate(const WeightRows& w) {
  double v = 0.0;
  for (double k : w.values) v += k * k;
  return v;
}

inline double bias_estimate(const SemiparFit& fit, const SemiparFit& full,
                            const FocusPoint& focus) {
  return cumhaz(fit, focus) - cumhaz(full, focus);
}

/// Full-model quantities at a focus, shared by every candidate scored there.
struct FocusReference {
  FocusPoint focus;
  WeightRows full_weights;
  double h_full = 0.0;
};

inline FocusReference make_reference(const SemiparFit& full, const FocusPoint& focus) {
  if (!full.spec.is_full()) throw ValidationError("reference fit must be the full model");
  return {focus, weight_rows(full, focus), cumhaz(full, focus)};
}

/// Sum over events of (K_i - Ktilde_i)^2 with Ktilde contracted by x.
inline double bias_variance(const WeightRows& sub, const WeightRows& full) {
  double t2 = 0.0;
  for (std::size_t e = 0; e < sub.values.size(); ++e) {
    const double d = sub.values[e] - full.values[e];
    t2 += d * d;
  }
  return t2;
}

/// Returns (sqb_raw, tau2).
inline std::pair<double, double> sqb_estimate(const SemiparFit& fit, const SemiparFit& full,
                                              const FocusPoint& focus) {
  const double b = bias_estimate(fit, full, focus);
  const double t2 = bias_variance(weight_rows(fit, focus), weight_rows(full, focus));
  return {b * b - t2, t2};
}

inline FicScore fic_score(const SemiparFit& fit, const FocusReference& ref) {
  const WeightRows w = weight_rows(fit, ref.focus);
  FicScore s;
  s.h_hat = cumhaz(fit, ref.focus);
  s.v = variance_estimate(w);
  s.b = s.h_hat - ref.h_full;
  s.tau2 = bias_variance(w, ref.full_weights);
  s.sqb_raw = s.b * s.b - s.tau2;
  s.sqb_plus = std::max(0.0, s.sqb_raw);
  s.fic = s.v + s.sqb_plus;
  s.fic_star = s.v + s.sqb_raw;
  return s;
}

inline FicScore fic_score(const SemiparFit& fit, const SemiparFit& full,
                          const FocusPoint& focus) {
  return fic_score(fit, make_reference(full, focus));
}

}  // namespace ahfic
