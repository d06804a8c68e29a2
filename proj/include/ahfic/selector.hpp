#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "ahfic/fic.hpp"
#include "ahfic/parallel.hpp"
#include "ahfic/wfic.hpp"

namespace ahfic {

enum class Protection {
  Free,
  TimeVarying,  // always in I
  Constant,     // always in J
  Included,     // never in K
};

class ProtectionRules {
 public:
  explicit ProtectionRules(std::size_t q) : rules_(q, Protection::Free) {}

  /// Protects covariate j; a second, different protection is a contradiction.
  ProtectionRules& set(std::size_t j, Protection p) {
    if (j >= rules_.size()) throw ValidationError("protected covariate index out of range");
    if (rules_[j] != Protection::Free && rules_[j] != p)
      throw ValidationError("contradictory protection rules for covariate " + std::to_string(j + 1));
    rules_[j] = p;
    return *this;
  }

  std::size_t q() const noexcept { return rules_.size(); }
  Protection operator[](std::size_t j) const { return rules_.at(j); }

  std::vector<Role> allowed(std::size_t j) const {
    switch (rules_.at(j)) {
      case Protection::TimeVarying: return {Role::TimeVarying};
      case Protection::Constant: return {Role::Constant};
      case Protection::Included: return {Role::TimeVarying, Role::Constant};
      case Protection::Free: break;
    }
    return {Role::TimeVarying, Role::Constant, Role::Excluded};
  }

 private:
  std::vector<Protection> rules_;
};

/// All partitions allowed by the rules, lexicographic in the per-covariate
/// role (I < J < K), covariate 1 most significant.
inline std::vector<ModelSpec> enumerate_models(std::size_t q, const ProtectionRules& rules) {
  if (q == 0) throw ValidationError("need at least one covariate");
  if (rules.q() != q) throw ValidationError("protection rules do not match covariate count");
  std::vector<std::vector<Role>> choices(q);
  for (std::size_t j = 0; j < q; ++j) choices[j] = rules.allowed(j);
  std::vector<ModelSpec> out;
  std::vector<std::size_t> pos(q, 0);
  std::vector<Role> roles(q);
  for (;;) {
    for (std::size_t j = 0; j < q; ++j) roles[j] = choices[j][pos[j]];
    out.emplace_back(roles);
    std::size_t j = q;
    while (j > 0) {
      --j;
      if (++pos[j] < choices[j].size()) break;
      pos[j] = 0;
      if (j == 0) return out;
    }
  }
}

inline std::vector<ModelSpec> enumerate_models(std::size_t q) {
  return enumerate_models(q, ProtectionRules(q));
}

struct Criterion {
  enum class Kind { Fic, FicStar, Wfic };
  Kind kind = Kind::Fic;
  FocusPoint focus;        // Fic, FicStar
  WeightMeasure measure;   // Wfic

  static Criterion fic(FocusPoint f) { return {Kind::Fic, std::move(f), {}}; }
  static Criterion fic_star(FocusPoint f) { return {Kind::FicStar, std::move(f), {}}; }
  static Criterion wfic(WeightMeasure w) { return {Kind::Wfic, {}, std::move(w)}; }
  bool weighted() const noexcept { return kind == Kind::Wfic; }
};

inline const char* criterion_name(Criterion::Kind k) {
  switch (k) {
    case Criterion::Kind::Fic: return "fic";
    case Criterion::Kind::FicStar: return "fic_star";
    case Criterion::Kind::Wfic: return "wfic";
  }
  return "";
}

struct RankRow {
  ModelSpec spec;
  double criterion = 0.0;
  /// Variance, raw squared bias and focus estimate; for wFIC these are the
  /// integrated values and the mean estimate over the measure.
  double v = 0.0;
  double sqb_raw = 0.0;
  double sqb_plus = 0.0;
  double h_hat = 0.0;
  double h_sd = 0.0;
  FicScore fic;    // set for Fic / FicStar
  WficScore wfic;  // set for Wfic
};

struct RankDiagnostics {
  std::vector<ModelSpec> singular;
  std::vector<ModelSpec> empty;
};

struct Ranking {
  Criterion::Kind kind = Criterion::Kind::Fic;
  std::vector<RankRow> rows;  // ascending by criterion
  RankRow full;
  RankDiagnostics diagnostics;
};

struct RankOptions {
  std::size_t workers = 1;
};

/// Precomputed full-model side of a criterion, reusable across candidates.
class CriterionContext {
 public:
  CriterionContext(const SemiparFit& full, const Criterion& c) : kind_(c.kind) {
    if (c.weighted())
      measure_ = make_reference(full, c.measure);
    else
      focus_ = make_reference(full, c.focus);
  }

  RankRow score(const SemiparFit& fit) const {
    RankRow r;
    r.spec = fit.spec;
    if (kind_ == Criterion::Kind::Wfic) {
      r.wfic = wfic_score(fit, *measure_);
      r.criterion = r.wfic.wfic;
      r.v = r.wfic.v_int;
      r.sqb_raw = r.wfic.sqb_int_raw;
      r.sqb_plus = r.wfic.sqb_int_plus;
      r.h_hat = r.wfic.h_mean;
      r.h_sd = r.wfic.h_sd;
    } else {
      r.fic = fic_score(fit, *focus_);
      r.criterion = kind_ == Criterion::Kind::Fic ? r.fic.fic : r.fic.fic_star;
      r.v = r.fic.v;
      r.sqb_raw = r.fic.sqb_raw;
      r.sqb_plus = r.fic.sqb_plus;
      r.h_hat = r.fic.h_hat;
    }
    return r;
  }

 private:
  Criterion::Kind kind_;
  std::optional<FocusReference> focus_;
  std::optional<MeasureReference> measure_;
};

/// Criterion ascending; ties prefer fewer included covariates, then fewer
/// time-varying ones, then the enumeration order.
inline bool rank_before(const RankRow& a, const RankRow& b) {
  auto key = [](const RankRow& r) {
    const auto& s = r.spec;
    return std::make_tuple(r.criterion, s.time_varying().size() + s.constant().size(),
                           s.time_varying().size());
  };
  const auto ka = key(a), kb = key(b);
  if (ka != kb) return ka < kb;
  return a.spec < b.spec;
}

/// Fits and scores every candidate against the shared full fit. Candidates
/// whose design is singular (or that include no covariate) are skipped and
/// reported in the diagnostics.
inline Ranking rank(const DesignPtr& design, const std::vector<ModelSpec>& candidates,
                    const Criterion& criterion, const RankOptions& opt = {}) {
  if (candidates.empty()) throw ValidationError("no candidate models");
  const SemiparFit full = fit_full(design);
  const CriterionContext ctx(full, criterion);

  enum class Status { Ok, Singular, Empty };
  std::vector<RankRow> rows(candidates.size());
  std::vector<Status> status(candidates.size(), Status::Ok);
  parallel_for(candidates.size(), opt.workers, [&](std::size_t c) {
    try {
      rows[c] = ctx.score(fit_semiparametric(design, candidates[c]));
    } catch (const SingularDesign&) {
      status[c] = Status::Singular;
    } catch (const EmptyModel&) {
      status[c] = Status::Empty;
    }
  });

  Ranking r;
  r.kind = criterion.kind;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    switch (status[c]) {
      case Status::Ok: r.rows.push_back(std::move(rows[c])); break;
      case Status::Singular: r.diagnostics.singular.push_back(candidates[c]); break;
      case Status::Empty: r.diagnostics.empty.push_back(candidates[c]); break;
    }
  }
  if (r.rows.empty()) throw EmptyRanking("every candidate model failed to fit");
  std::sort(r.rows.begin(), r.rows.end(), rank_before);
  r.full = ctx.score(full);
  return r;
}

struct AverageEstimate {
  std::vector<ModelSpec> specs;
  std::vector<double> criterion;
  std::vector<double> estimates;
  std::vector<double> weights;  // c(m), sums to 1
  double value = 0.0;           // sum of c(m) * estimate(m)
  double lambda = 0.0;
  std::size_t M = 0;
};

/// 1 / median criterion over the top M rows, or 0 when that median is not
/// positive.
inline double default_lambda(const Ranking& r, std::size_t M) {
  M = std::min(M, r.rows.size());
  if (M == 0) return 0.0;
  std::vector<double> c;
  for (std::size_t m = 0; m < M; ++m) c.push_back(r.rows[m].criterion);
  std::sort(c.begin(), c.end());
  const double med = M % 2 ? c[M / 2] : 0.5 * (c[M / 2 - 1] + c[M / 2]);
  return med > 0.0 ? 1.0 / med : 0.0;
}

/// Softmin weights exp(-lambda * criterion) over the given criterion values,
/// shifted by their minimum before exponentiation.
inline std::vector<double> softmin_weights(const std::vector<double>& crit, double lambda) {
  const double lo = *std::min_element(crit.begin(), crit.end());
  std::vector<double> w;
  double total = 0.0;
  for (double c : crit) {
    w.push_back(std::exp(-lambda * (c - lo)));
    total += w.back();
  }
  for (auto& x : w) x /= total;
  return w;
}

/// Model average over the top M rows. `lambda` defaults to default_lambda.
inline AverageEstimate model_average(const Ranking& r, std::optional<double> lambda, std::size_t M) {
  if (M < 1) throw ValidationError("model average needs M >= 1");
  if (M > r.rows.size()) throw ValidationError("ranking has fewer than M rows");
  const double lam = lambda ? *lambda : default_lambda(r, M);
  if (!(lam >= 0.0)) throw ValidationError("lambda must be nonnegative");
  AverageEstimate a;
  a.lambda = lam;
  a.M = M;
  for (std::size_t m = 0; m < M; ++m) {
    a.specs.push_back(r.rows[m].spec);
    a.criterion.push_back(r.rows[m].criterion);
    a.estimates.push_back(r.rows[m].h_hat);
  }
  a.weights = softmin_weights(a.criterion, lam);
  for (std::size_t m = 0; m < M; ++m) a.value += a.weights[m] * a.estimates[m];
  return a;
}

}  // namespace ahfic
