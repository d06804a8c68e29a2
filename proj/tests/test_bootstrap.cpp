#include <gtest/gtest.h>

#include "support.hpp"

using namespace ahfic;
using testing_support::intercept_only;
using testing_support::make_dataset;
using testing_support::random_dataset;

namespace {

/// Constant-hazard intercept fit to exponential(rate) lifetimes on a window
/// long enough that truncation is negligible.
SemiparFit constant_fit(std::size_t n, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> life(rate);
  std::vector<double> t(n);
  std::vector<int> d(n, 1);
  for (auto& v : t) v = std::min(life(rng), 59.0);
  return fit_semiparametric(make_design(intercept_only(t, d, 60.0)), ModelSpec({Role::Constant}));
}

Pipeline two_model_pipeline(const FocusPoint& f) {
  Pipeline p;
  p.candidates = {ModelSpec::full(2), ModelSpec::from_sets(2, {0}, {1}), ModelSpec::from_sets(2, {0}, {})};
  p.criterion = Criterion::fic(f);
  return p;
}

}  // namespace

TEST(Rng, UniformOpenInterval) {
  Rng rng(1);
  for (int k = 0; k < 100000; ++k) {
    const double u = uniform_open(rng);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  Rng a = derived_rng(5, 3), b = derived_rng(5, 3), c = derived_rng(5, 4);
  EXPECT_EQ(a(), b());
  EXPECT_NE(derived_rng(5, 3)(), c());
}

TEST(LifetimeSampler, MassConservation) {
  std::mt19937_64 rng(61);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = make_design(random_dataset(rng, {.n = 60, .q = 3, .min_at_risk = 6}));
    for (const auto& spec : {ModelSpec::full(3), ModelSpec::from_sets(3, {0}, {1, 2})}) {
      const auto fit = fit_semiparametric(d, spec);
      for (const auto& s : d->data.subjects()) {
        const auto life = lifetime_sampler(fit, s.covariates);
        for (double after : {0.0, 0.5 * d->data.tau()}) {
          const auto m = life.masses(after);
          double total = m.residual;
          for (double v : m.continuous) total += v;
          for (double v : m.jump) total += v;
          EXPECT_NEAR(total, 1.0, 1e-10);
          EXPECT_NEAR(m.residual, life.survival(d->data.tau()) / life.survival(after), 1e-12);
        }
      }
    }
  }
}

TEST(LifetimeSampler, ExponentialMean) {
  const auto fit = constant_fit(1000, 0.5, 2);
  const double mean = 1.0 / fit.alpha[0];
  const auto life = lifetime_sampler(fit, Eigen::VectorXd::Ones(1));
  Rng rng(3);
  const int n = 10000;
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += life.sample(rng);
  const double se = mean / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(s / n - mean), 3.0 * se);
}

TEST(LifetimeSampler, ClampsNegativeJumps) {
  const auto d = make_design(intercept_only({1, 2, 3}, {1, 1, 1}, 3));
  const auto life = lifetime_sampler(fit_full(d), -Eigen::VectorXd::Ones(1));
  EXPECT_TRUE(life.clamped());
  EXPECT_TRUE(life.invalid());
  Rng rng(1);
  EXPECT_EQ(life.sample(rng), kInfiniteTime);
}

TEST(LifetimeSampler, JumpDistribution) {
  // Nelson-Aalen on {1,2,3}: jumps 1/3, 1/2, 1 give P(T=1)=1/3, P(T=2)=1/3.
  const auto d = make_design(intercept_only({1, 2, 3}, {1, 1, 1}, 3));
  const auto life = lifetime_sampler(fit_full(d), Eigen::VectorXd::Ones(1));
  const auto m = life.masses();
  EXPECT_NEAR(m.jump[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.jump[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.jump[2], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.residual, 0.0, 1e-15);
}

TEST(Censoring, NoCensoredSubjects) {
  const auto c = censoring_km(intercept_only({1, 2, 3}, {1, 1, 1}, 3));
  Rng rng(1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(c.sample(rng, 0), kInfiniteTime);
}

TEST(Censoring, AllCensoredAtTwo) {
  const auto c = censoring_km(intercept_only({2, 2, 2, 2}, {0, 0, 0, 0}, 2));
  Rng rng(1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(c.sample(rng, 0), 2.0);
}

TEST(Censoring, HalfCensoredAtOne) {
  const auto c = censoring_km(intercept_only({1, 1, 2, 3}, {0, 0, 1, 1}, 3));
  ASSERT_EQ(c.support(), (std::vector<double>{1.0}));
  EXPECT_DOUBLE_EQ(c.survival_after()[0], 0.5);
  const auto m = c.distribution().masses();
  EXPECT_DOUBLE_EQ(m.jump[0], 0.5);
  EXPECT_DOUBLE_EQ(m.residual, 0.5);
}

// Reverse Kaplan-Meier against a direct product-limit computation.
TEST(Censoring, ReverseKaplanMeierOracle) {
  std::mt19937_64 rng(62);
  const auto ds = random_dataset(rng, {.n = 80, .q = 1, .tie_grid = 0.1});
  const auto c = censoring_km(ds);
  for (std::size_t k = 0; k < c.support().size(); ++k) {
    const double t = c.support()[k];
    double s = 1.0;
    std::vector<double> times;
    for (const auto& sub : ds.subjects())
      if (sub.status == 0 && sub.time <= t) times.push_back(sub.time);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (double u : times) {
      int at_risk = 0, cens = 0;
      for (const auto& sub : ds.subjects()) {
        at_risk += sub.time >= u;
        cens += sub.time == u && sub.status == 0;
      }
      s *= 1.0 - static_cast<double>(cens) / at_risk;
    }
    EXPECT_NEAR(c.survival_after()[k], s, 1e-12);
    EXPECT_NEAR(c.distribution().survival(t), s, 1e-12);
    if (k) EXPECT_LE(c.survival_after()[k], c.survival_after()[k - 1]);
  }
}

TEST(Simulate, ZeroHazardCensorsEveryone) {
  const auto d = make_design(intercept_only({1, 2, 3}, {0, 0, 0}, 3));
  const auto full = fit_full(d);
  Rng rng(4);
  const auto sim = simulate_dataset(full, CensoringSampler::known({0.5, 1.5, 2.5}), rng);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(sim.subject(i).status, 0);
    EXPECT_EQ(sim.subject(i).time, 0.5 + static_cast<double>(i));
  }
  const auto sim2 = simulate_dataset(full, censoring_km(d->data), rng);
  for (const auto& s : sim2.subjects()) EXPECT_EQ(s.status, 0);
}

TEST(Simulate, Deterministic) {
  std::mt19937_64 rng(63);
  const auto d = make_design(random_dataset(rng, {.n = 50, .q = 2}));
  const auto full = fit_full(d);
  Rng a = derived_rng(9, 1), b = derived_rng(9, 1);
  const auto s1 = simulate_dataset(full, censoring_km(d->data), a);
  const auto s2 = simulate_dataset(full, censoring_km(d->data), b);
  for (std::size_t i = 0; i < s1.n(); ++i) {
    EXPECT_EQ(s1.subject(i).time, s2.subject(i).time);
    EXPECT_EQ(s1.subject(i).status, s2.subject(i).status);
    EXPECT_EQ(s1.subject(i).covariates, d->data.subject(i).covariates);
  }
}

TEST(Bootstrap, IdenticalReplicatesGiveZeroWidth) {
  std::mt19937_64 rng(64);
  const auto d = make_design(random_dataset(rng, {.n = 80, .q = 2, .min_at_risk = 8}));
  const FocusPoint f{0.5 * d->data.tau(), Eigen::Vector2d(1.0, 0.5), {}};
  BootstrapOptions opt;
  opt.identical_replicates = true;
  const auto b = bootstrap_ci(d, two_model_pipeline(f), 2, 0.05, 11, opt);
  EXPECT_EQ(b.c, b.d);
  EXPECT_EQ(b.lower, b.upper);
}

TEST(Bootstrap, Validation) {
  std::mt19937_64 rng(65);
  const auto d = make_design(random_dataset(rng, {.n = 40, .q = 2, .min_at_risk = 6}));
  const FocusPoint f{0.5 * d->data.tau(), Eigen::Vector2d(1.0, 0.5), {}};
  EXPECT_THROW(bootstrap_ci(d, two_model_pipeline(f), 1, 0.05, 1), ValidationError);
  EXPECT_THROW(bootstrap_ci(d, two_model_pipeline(f), 10, 0.5, 1), ValidationError);
  BootstrapOptions opt;
  opt.known_censoring = true;
  EXPECT_THROW(bootstrap_ci(d, two_model_pipeline(f), 10, 0.05, 1, opt), ValidationError);
}

TEST(Bootstrap, WorkerCountDoesNotChangeResult) {
  std::mt19937_64 rng(66);
  const auto d = make_design(random_dataset(rng, {.n = 80, .q = 2, .min_at_risk = 8}));
  const FocusPoint f{0.5 * d->data.tau(), Eigen::Vector2d(1.0, 0.5), {}};
  BootstrapOptions one, four;
  four.workers = 4;
  const auto a = bootstrap_ci(d, two_model_pipeline(f), 20, 0.1, 5, one);
  const auto b = bootstrap_ci(d, two_model_pipeline(f), 20, 0.1, 5, four);
  EXPECT_EQ(a.errors, b.errors);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_LE(a.c, a.d);
  EXPECT_TRUE(std::isfinite(a.lower) && std::isfinite(a.upper));
}

TEST(Bootstrap, QuantileType7) {
  EXPECT_DOUBLE_EQ(quantile_sorted({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(quantile_sorted({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted({1, 2, 3, 4}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_sorted({7}, 0.3), 7.0);
}

// Symmetric error distribution: the interval is nearly centred on the
// estimate.
TEST(Bootstrap, SymmetricErrorsSymmetricInterval) {
  std::mt19937_64 rng(67);
  const std::size_t n = 400;
  std::vector<double> t(n);
  std::vector<int> d(n);
  std::exponential_distribution<double> life(1.0);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = std::min(life(rng), 3.0);
    d[i] = t[i] < 3.0;
  }
  const auto des = make_design(intercept_only(t, d, 3.0));
  Pipeline p;
  p.candidates = {ModelSpec({Role::Constant})};
  p.criterion = Criterion::fic({1.0, Eigen::VectorXd::Ones(1), {}});
  const std::size_t B = 400;
  const auto b = bootstrap_ci(des, p, B, 0.25, 17);
  double s = 0.0, ss = 0.0;
  for (double e : b.errors) {
    s += e;
    ss += e * e;
  }
  const double sd = std::sqrt(ss / B - (s / B) * (s / B));
  // Interval ends sit at -c and d from the estimate; for symmetric errors
  // c + d is twice their centre.
  const double asym = (b.upper - b.estimate) - (b.estimate - b.lower);
  EXPECT_NEAR(asym, -(b.c + b.d), 1e-12);
  // Standard error of a normal-sample quartile, for both ends.
  const double q_se = std::sqrt(0.25 * 0.75 / B) / 0.3178 * sd;
  EXPECT_LT(std::abs(b.c + b.d - 2.0 * s / B), 2.0 * std::sqrt(2.0) * q_se);
}

// With the pipeline fixed to the full model, the bootstrap MSE estimates
// the plug-in variance. Group indicators keep every individual increment
// nonnegative, so no clamping enters the simulated lifetimes.
TEST(Bootstrap, FullModelMseMatchesVariance) {
  std::mt19937_64 rng(68);
  const auto ds = random_dataset(rng, {.n = 1000, .q = 2, .binary = true, .censor_max = 5.0});
  const auto d = make_design(ds.with_tau(2.0));
  const FocusPoint f{1.5, Eigen::Vector2d(1.0, 0.5), {}};
  Pipeline p;
  p.candidates = {ModelSpec::full(2)};
  p.criterion = Criterion::fic(f);
  const auto b = bootstrap_ci(d, p, 500, 0.05, 23);
  const double v = variance_estimate(weight_rows(fit_full(d), f));
  EXPECT_LT(std::abs(b.mse - v), 0.25 * v) << b.mse << " vs " << v;
}
