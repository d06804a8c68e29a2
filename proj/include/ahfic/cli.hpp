#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ahfic/bootstrap.hpp"
#include "ahfic/io.hpp"

namespace ahfic::cli {

/// Everything a command needs; filled from flags or a config file.
struct RunConfig {
  std::string input;
  CsvOptions csv;

  /// "name=tv", "name=const" or "name=either"; names may be 1-based indices.
  std::vector<std::string> protect;
  std::string criterion = "fic";  // fic | fic_star | wfic

  std::optional<double> focus_t;
  std::optional<double> focus_t0;
  /// "name=value" or "name=qP" (empirical P-quantile); unlisted covariates
  /// take their sample mean.
  std::vector<std::string> focus_x;

  std::optional<std::string> weights_file;
  std::size_t virtual_patients = 0;
  std::vector<std::string> fix;
  std::size_t empirical = 0;

  std::size_t top = 10;
  std::optional<std::size_t> M;
  std::optional<double> lambda;

  std::size_t bootstrap = 0;
  double alpha = 0.05;
  bool known_censoring = false;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;

  std::string out = "-";
  std::string plot_out;
  std::string spread_out;
  std::string bands_dir;
  std::string measure_out;
  bool paper_format = false;
};

/// Process exit status for an error raised by a command.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const SingularDesign*>(&e) || dynamic_cast<const EmptyRanking*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  return 2;
}

inline void write_output(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  fn(os);
  if (!os) throw IoError("error writing '" + path + "'");
}

inline Dataset load(const RunConfig& c) {
  if (c.input.empty()) throw ValidationError("no input file given");
  return load_csv(c.input, c.csv);
}

/// Covariate index from a name or a 1-based number.
inline std::size_t covariate_index(const Dataset& ds, const std::string& key) {
  if (auto j = ds.index_of(key)) return *j;
  if (auto v = detail::parse_double(key); v && *v >= 1 && *v <= static_cast<double>(ds.q()) &&
                                          *v == std::floor(*v))
    return static_cast<std::size_t>(*v) - 1;
  throw ValidationError("unknown covariate '" + key + "'");
}

inline std::pair<std::string, std::string> split_assignment(const std::string& s) {
  auto pos = s.find('=');
  if (pos == std::string::npos || pos == 0 || pos + 1 == s.size())
    throw ValidationError("expected name=value, got '" + s + "'");
  return {s.substr(0, pos), s.substr(pos + 1)};
}

/// Numeric value, or qP for the empirical P-quantile of column j.
inline double covariate_value(const Dataset& ds, std::size_t j, const std::string& text) {
  if (!text.empty() && text.front() == 'q') {
    auto p = detail::parse_double(text.substr(1));
    if (!p || *p < 0.0 || *p > 1.0) throw ValidationError("bad quantile '" + text + "'");
    const Eigen::VectorXd col = ds.covariates().col(static_cast<Eigen::Index>(j));
    std::vector<double> v(col.data(), col.data() + col.size());
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, *p);
  }
  auto v = detail::parse_double(text);
  if (!v) throw ValidationError("bad covariate value '" + text + "'");
  return *v;
}

inline FocusPoint build_focus(const RunConfig& c, const Dataset& ds) {
  if (!c.focus_t) throw ValidationError("focus time (--t) required");
  FocusPoint f;
  f.t = *c.focus_t;
  f.t0 = c.focus_t0;
  f.x = ds.covariates().colwise().mean().transpose();
  for (const auto& a : c.focus_x) {
    auto [name, value] = split_assignment(a);
    const auto j = covariate_index(ds, name);
    f.x[static_cast<Eigen::Index>(j)] = covariate_value(ds, j, value);
  }
  validate_focus(f, ds.q(), ds.tau());
  return f;
}

inline ProtectionRules build_rules(const RunConfig& c, const Dataset& ds) {
  ProtectionRules rules(ds.q());
  for (const auto& a : c.protect) {
    auto [name, kind] = split_assignment(a);
    Protection p;
    if (kind == "tv") p = Protection::TimeVarying;
    else if (kind == "const") p = Protection::Constant;
    else if (kind == "either") p = Protection::Included;
    else throw ValidationError("protection must be tv, const or either: '" + a + "'");
    rules.set(covariate_index(ds, name), p);
  }
  return rules;
}

inline bool weighted(const RunConfig& c) { return c.criterion == "wfic"; }

/// Checks the mutually exclusive focus / measure choices and seed needs.
inline void validate(const RunConfig& c) {
  if (c.criterion != "fic" && c.criterion != "fic_star" && c.criterion != "wfic")
    throw ValidationError("criterion must be fic, fic_star or wfic");
  const int sources = (c.weights_file ? 1 : 0) + (c.virtual_patients > 0 ? 1 : 0) + (c.empirical > 0 ? 1 : 0);
  if (weighted(c)) {
    if (sources != 1)
      throw ValidationError("wfic needs exactly one of --weights-file, --virtual-patients, --empirical");
    if (c.virtual_patients == 0 && (c.focus_t || !c.focus_x.empty()))
      throw ValidationError("give either a focus or a weight measure, not both");
  } else {
    if (sources != 0) throw ValidationError("weight measures apply to --criterion wfic only");
  }
  const bool stochastic = c.virtual_patients > 0 || c.empirical > 0 || c.bootstrap > 0;
  if (stochastic && !c.seed) throw ValidationError("--seed is required for stochastic steps");
}

inline WeightMeasure build_measure(const RunConfig& c, const SemiparFit& full) {
  const Dataset& ds = full.data();
  if (c.weights_file) {
    std::ifstream in(*c.weights_file);
    if (!in) throw IoError("cannot open '" + *c.weights_file + "'");
    return read_measure_csv(in, ds.q());
  }
  if (c.virtual_patients > 0) {
    if (!c.focus_t) throw ValidationError("virtual patients need a focus time (--t)");
    std::vector<std::pair<std::size_t, double>> fixed;
    for (const auto& a : c.fix) {
      auto [name, value] = split_assignment(a);
      const auto j = covariate_index(ds, name);
      fixed.emplace_back(j, covariate_value(ds, j, value));
    }
    return virtual_patient_measure(ds, fixed, c.virtual_patients, *c.focus_t, *c.seed);
  }
  MeasureDiagnostics diag;
  auto w = empirical_measure(full, c.empirical, *c.seed, &diag);
  if (diag.degenerate > 0)
    std::cerr << "warning: " << diag.degenerate
              << " censored subjects have zero fitted survival; kept at their censoring time\n";
  return w;
}

inline Criterion build_criterion(const RunConfig& c, const DesignPtr& design) {
  if (weighted(c)) {
    auto w = build_measure(c, fit_full(design));
    if (!c.measure_out.empty())
      write_output(c.measure_out, [&](std::ostream& os) { write_measure_csv(os, w, design->data.names()); });
    return Criterion::wfic(std::move(w));
  }
  auto f = build_focus(c, design->data);
  return c.criterion == "fic" ? Criterion::fic(std::move(f)) : Criterion::fic_star(std::move(f));
}

inline Pipeline build_pipeline(const RunConfig& c, const DesignPtr& design, bool average) {
  Pipeline p;
  p.candidates = enumerate_models(design->data.q(), build_rules(c, design->data));
  p.criterion = build_criterion(c, design);
  if (weighted(c) && c.virtual_patients == 0 && c.focus_t) p.focus = build_focus(c, design->data);
  p.rank_options.workers = c.workers;
  if (average || c.M) p.averaging = AveragingConfig{c.lambda, c.M.value_or(1)};
  return p;
}

inline void report_diagnostics(const Ranking& r) {
  if (!r.diagnostics.singular.empty())
    std::cerr << "note: " << r.diagnostics.singular.size() << " candidate models skipped (singular design)\n";
  if (!r.diagnostics.empty.empty())
    std::cerr << "note: " << r.diagnostics.empty.size() << " candidate models skipped (no covariates)\n";
}

/// Full-model fit: JSON to `out`, one band file per covariate in bands_dir.
inline void cmd_fit(const RunConfig& c) {
  auto design = make_design(load(c));
  const SemiparFit full = fit_full(design);
  write_output(c.out, [&](std::ostream& os) { os << fit_json(full).dump(2) << '\n'; });
  if (!c.bands_dir.empty()) {
    std::filesystem::create_directories(c.bands_dir);
    const auto& names = design->data.names();
    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto path = (std::filesystem::path(c.bands_dir) / ("band_" + names[j] + ".csv")).string();
      write_output(path, [&](std::ostream& os) { write_band_csv(os, coefficient_band(full, j)); });
    }
  }
}

inline Ranking cmd_rank(const RunConfig& c) {
  validate(c);
  auto design = make_design(load(c));
  const auto candidates = enumerate_models(design->data.q(), build_rules(c, design->data));
  const Criterion crit = build_criterion(c, design);
  Ranking r = rank(design, candidates, crit, RankOptions{c.workers});
  report_diagnostics(r);
  write_output(c.out, [&](std::ostream& os) {
    if (c.paper_format)
      write_ranking_table(os, r, c.top);
    else
      write_ranking_csv(os, r, c.top);
  });
  if (!c.plot_out.empty()) write_output(c.plot_out, [&](std::ostream& os) { write_plot_csv(os, r); });
  if (!c.spread_out.empty() && crit.weighted())
    write_output(c.spread_out, [&](std::ostream& os) { write_spread_csv(os, r); });
  return r;
}

inline json cmd_average(const RunConfig& c) {
  validate(c);
  auto design = make_design(load(c));
  RunConfig cc = c;
  if (!cc.M) cc.M = std::min<std::size_t>(c.top, 10);
  Pipeline p = build_pipeline(cc, design, true);
  Ranking r;
  const PipelineResult res = run_pipeline(design, p, &r);
  report_diagnostics(r);
  json j;
  j["criterion"] = criterion_name(r.kind);
  j["average"] = average_json(*res.average);
  if (c.bootstrap > 0) {
    const auto b = bootstrap_ci(design, p, c.bootstrap, c.alpha, *c.seed,
                                BootstrapOptions{c.workers, c.known_censoring});
    j["bootstrap"] = bootstrap_json(b, c.alpha);
  }
  write_output(c.out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  return j;
}

inline json cmd_bootstrap(const RunConfig& c) {
  validate(c);
  if (c.bootstrap < 2) throw ValidationError("--bootstrap B with B >= 2 required");
  auto design = make_design(load(c));
  const Pipeline p = build_pipeline(c, design, false);
  const auto b = bootstrap_ci(design, p, c.bootstrap, c.alpha, *c.seed,
                              BootstrapOptions{c.workers, c.known_censoring});
  if (b.reliability_warning)
    std::cerr << "warning: " << b.failed << " of " << b.B << " replicates failed\n";
  json j = bootstrap_json(b, c.alpha);
  write_output(c.out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  return j;
}

/// One data set drawn from the full fit, written as CSV.
inline void cmd_simulate(const RunConfig& c) {
  if (!c.seed) throw ValidationError("--seed is required for stochastic steps");
  auto design = make_design(load(c));
  const SemiparFit full = fit_full(design);
  if (c.known_censoring && !design->data.has_known_censoring())
    throw ValidationError("dataset has no known censoring times");
  const auto censoring = c.known_censoring ? CensoringSampler::known(design->data.known_censoring())
                                           : censoring_km(design->data);
  Rng rng = derived_rng(*c.seed, 0);
  SimulationDiagnostics diag;
  const Dataset sim = simulate_dataset(full, censoring, rng, &diag);
  if (diag.invalid_subjects > 0)
    std::cerr << "warning: " << diag.invalid_subjects
              << " subjects have fitted hazards outside [0, 1]; sampled from the clamped distribution\n";
  write_output(c.out, [&](std::ostream& os) { write_dataset_csv(os, sim); });
}

}  // namespace ahfic::cli
