#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "ahfic/dataset.hpp"
#include "ahfic/estimators.hpp"

namespace ahfic {

using Rng = std::mt19937_64;

inline constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

/// Uniform draw in the open interval (0, 1), identical on every platform.
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Independent stream for replicate `index` of a run seeded with `seed`.
inline Rng derived_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// Lifetime distribution given by a hazard with constant rates between
/// breakpoints and discrete jumps at them. Mass beyond the last breakpoint is
/// an infinite lifetime.
class HazardSampler {
 public:
  struct Piece {
    double left = 0.0;
    double right = 0.0;
    double rate = 0.0;       // >= 0
    double jump_prob = 0.0;  // in [0, 1]
  };
  struct Masses {
    std::vector<double> continuous;  // probability of failing inside piece k
    std::vector<double> jump;        // probability of failing at its right end
    double residual = 0.0;
  };

  HazardSampler() = default;

  /// Builds from fitted hazard segments, clamping rates at 0 and jump
  /// probabilities into [0, 1]. Clamping beyond 1e-6 marks the sampler invalid.
  explicit HazardSampler(const std::vector<HazardSegment>& segs) {
    for (const auto& s : segs) {
      Piece p{s.left, s.right, s.rate, s.jump};
      if (p.rate < 0.0) {
        clamped_ = true;
        if (p.rate * (s.right - s.left) < -1e-6) invalid_ = true;
        p.rate = 0.0;
      }
      if (p.jump_prob < 0.0 || p.jump_prob > 1.0) {
        clamped_ = true;
        if (p.jump_prob < -1e-6 || p.jump_prob > 1.0 + 1e-6) invalid_ = true;
        p.jump_prob = std::clamp(p.jump_prob, 0.0, 1.0);
      }
      pieces_.push_back(p);
    }
  }

  explicit HazardSampler(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {}

  bool clamped() const noexcept { return clamped_; }
  bool invalid() const noexcept { return invalid_; }
  const std::vector<Piece>& pieces() const noexcept { return pieces_; }

  /// P(T > t) under the (clamped) distribution.
  double survival(double t) const {
    double log_s = 0.0;
    double prod = 1.0;
    for (const auto& p : pieces_) {
      if (p.left >= t) break;
      log_s -= p.rate * (std::min(p.right, t) - p.left);
      if (p.right <= t) prod *= 1.0 - p.jump_prob;
    }
    return prod * std::exp(log_s);
  }

  /// Probability decomposition of T given T > after.
  Masses masses(double after = 0.0) const {
    Masses m;
    double s = 1.0;
    for (const auto& p : pieces_) {
      double cont = 0.0;
      double jump = 0.0;
      if (p.right > after) {
        const double lo = std::max(p.left, after);
        const double s_end = s * std::exp(-p.rate * (p.right - lo));
        cont = s - s_end;
        jump = s_end * p.jump_prob;
        s = s_end - jump;
      }
      m.continuous.push_back(cont);
      m.jump.push_back(jump);
    }
    m.residual = s;
    return m;
  }

  /// Inverse-transform draw of T given T > after.
  double sample(Rng& rng, double after = 0.0) const {
    const double target = -std::log(uniform_open(rng));
    double acc = 0.0;
    for (const auto& p : pieces_) {
      if (p.right <= after) continue;
      const double lo = std::max(p.left, after);
      const double gain = p.rate * (p.right - lo);
      if (p.rate > 0.0 && acc + gain >= target) {
        return std::min(p.right, lo + (target - acc) / p.rate);
      }
      acc += gain;
      if (p.jump_prob > 0.0) {
        if (p.jump_prob >= 1.0) return p.right;
        acc -= std::log1p(-p.jump_prob);
        if (acc >= target) return p.right;
      }
    }
    return kInfiniteTime;
  }

 private:
  std::vector<Piece> pieces_;
  bool clamped_ = false;
  bool invalid_ = false;
};

/// Lifetime distribution F_i implied by a fit for covariate vector x:
/// 1 - product-integral of (1 - dH(s, x)).
inline HazardSampler lifetime_sampler(const SemiparFit& fit, const Eigen::VectorXd& x) {
  return HazardSampler(fit.hazard_path(x));
}

/// Censoring-time generator: per-subject known times, or the product-limit
/// estimate with censorings as events (reverse Kaplan-Meier).
class CensoringSampler {
 public:
  static CensoringSampler known(std::vector<double> times) {
    CensoringSampler c;
    c.known_ = std::move(times);
    return c;
  }

  static CensoringSampler reverse_km(const Dataset& ds) {
    std::vector<std::pair<double, int>> obs;
    for (const auto& s : ds.subjects()) obs.emplace_back(s.time, s.status);
    std::sort(obs.begin(), obs.end());
    CensoringSampler c;
    std::vector<HazardSampler::Piece> pieces;
    double left = 0.0;
    for (std::size_t a = 0; a < obs.size();) {
      const double t = obs[a].first;
      const std::size_t at_risk = obs.size() - a;
      std::size_t cens = 0;
      for (; a < obs.size() && obs[a].first == t; ++a) cens += obs[a].second == 0 ? 1 : 0;
      if (cens > 0) {
        const double h = static_cast<double>(cens) / static_cast<double>(at_risk);
        pieces.push_back({left, t, 0.0, h});
        c.support_.push_back(t);
        c.km_.push_back((c.km_.empty() ? 1.0 : c.km_.back()) * (1.0 - h));
        left = t;
      }
    }
    c.dist_ = HazardSampler(std::move(pieces));
    return c;
  }

  bool is_known() const noexcept { return !known_.empty(); }
  /// Censoring times with mass and the product-limit survival just after each.
  const std::vector<double>& support() const noexcept { return support_; }
  const std::vector<double>& survival_after() const noexcept { return km_; }
  const HazardSampler& distribution() const noexcept { return dist_; }

  double sample(Rng& rng, std::size_t subject) const {
    if (is_known()) return known_.at(subject);
    return dist_.sample(rng);
  }

 private:
  std::vector<double> known_;
  std::vector<double> support_;
  std::vector<double> km_;
  HazardSampler dist_;
};

inline CensoringSampler censoring_km(const Dataset& ds) { return CensoringSampler::reverse_km(ds); }

struct SimulationDiagnostics {
  std::size_t clamped_subjects = 0;
  std::size_t invalid_subjects = 0;
};

/// Per-subject lifetime samplers of a fit.
inline std::vector<HazardSampler> lifetime_samplers(const SemiparFit& fit,
                                                    SimulationDiagnostics* diag = nullptr) {
  std::vector<HazardSampler> out;
  out.reserve(fit.data().n());
  for (const auto& s : fit.data().subjects()) {
    out.push_back(lifetime_sampler(fit, s.covariates));
    if (diag) {
      diag->clamped_subjects += out.back().clamped() ? 1 : 0;
      diag->invalid_subjects += out.back().invalid() ? 1 : 0;
    }
  }
  return out;
}

/// Draws (min(T0*, C*), 1{T0* <= C*}, x_i) per subject. A lifetime and a
/// censoring time that are both infinite give a subject censored at tau.
inline Dataset simulate_dataset(const Dataset& ds, const std::vector<HazardSampler>& lifetimes,
                                const CensoringSampler& censoring, Rng& rng) {
  std::vector<Subject> out;
  out.reserve(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double t0 = lifetimes[i].sample(rng);
    const double c = censoring.sample(rng, i);
    Subject s{t0 <= c ? t0 : c, t0 <= c ? 1 : 0, ds.subject(i).covariates};
    if (!std::isfinite(s.time)) s = {ds.tau(), 0, ds.subject(i).covariates};
    out.push_back(std::move(s));
  }
  return Dataset(std::move(out), ds.names(), ds.tau(), ds.known_censoring());
}

/// Simulated copy of the fitted data set; covariates, tau and known
/// censoring times are carried over.
inline Dataset simulate_dataset(const SemiparFit& full, const CensoringSampler& censoring, Rng& rng,
                                SimulationDiagnostics* diag = nullptr) {
  return simulate_dataset(full.data(), lifetime_samplers(full, diag), censoring, rng);
}

}  // namespace ahfic
