#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ahfic/bootstrap.hpp"
#include "ahfic/dataset.hpp"
#include "ahfic/estimators.hpp"
#include "ahfic/selector.hpp"
#include "ahfic/wfic.hpp"

namespace ahfic {

using json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to exactly v.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::vector<int> one_based(const std::vector<int>& idx) {
  std::vector<int> out;
  for (int j : idx) out.push_back(j + 1);
  return out;
}

inline json spec_json(const ModelSpec& s) {
  return {{"I", one_based(s.time_varying())},
          {"J", one_based(s.constant())},
          {"K", one_based(s.excluded())}};
}

/// Spec, constant effects and the jump lists of every time-varying
/// coefficient; nonzero drift slopes are listed per interval.
inline json fit_json(const SemiparFit& fit) {
  const auto& names = fit.data().names();
  const auto& grid = fit.grid();
  json j;
  j["spec"] = spec_json(fit.spec);
  j["tau"] = fit.tau();
  j["alpha"] = json::array();
  for (std::size_t r = 0; r < fit.cst.size(); ++r)
    j["alpha"].push_back({{"name", names[static_cast<std::size_t>(fit.cst[r])]},
                          {"index", fit.cst[r] + 1},
                          {"value", fit.alpha[static_cast<Eigen::Index>(r)]}});
  j["coefficients"] = json::array();
  for (std::size_t r = 0; r < fit.tv.size(); ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    json c{{"name", names[static_cast<std::size_t>(fit.tv[r])]}, {"index", fit.tv[r] + 1}};
    c["jumps"] = json::array();
    c["drift"] = json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      if (!grid.events_in(k).empty()) c["jumps"].push_back({grid.intervals[k].right, fit.jumps(rr, kk)});
      if (fit.slope(rr, kk) != 0.0)
        c["drift"].push_back({grid.intervals[k].left, grid.intervals[k].right, fit.slope(rr, kk)});
    }
    j["coefficients"].push_back(std::move(c));
  }
  return j;
}

/// Jumps of time-varying coefficient r (local index) as a step function.
inline StepFunction coefficient_jumps(const SemiparFit& fit, std::size_t r) {
  std::vector<double> t, s;
  for (std::size_t k = 0; k < fit.grid().size(); ++k) {
    if (fit.grid().events_in(k).empty()) continue;
    t.push_back(fit.grid().intervals[k].right);
    s.push_back(fit.jumps(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)));
  }
  return StepFunction(std::move(t), std::move(s));
}

struct BandRow {
  double t = 0.0;
  double a_hat = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Cumulative coefficient of full-model covariate j at 0 and every event
/// time, with pointwise bands A_j +- z * sqrt(v) for the unit focus e_j.
inline std::vector<BandRow> coefficient_band(const SemiparFit& full, std::size_t j, double z = 1.96) {
  if (!full.spec.is_full()) throw ValidationError("bands are defined for the full model");
  const auto& events = full.design->events;
  const auto& grid = full.grid();
  const auto jj = static_cast<Eigen::Index>(j);
  std::vector<BandRow> rows{{0.0, 0.0, 0.0, 0.0}};
  double a = 0.0, v = 0.0;
  std::size_t e = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid.events_in(k).empty()) continue;
    for (; e < events.size() && events[e].interval == k; ++e) {
      const double g = full.event_gain(static_cast<Eigen::Index>(e), jj);
      v += g * g;
    }
    a += full.jumps(jj, static_cast<Eigen::Index>(k));
    const double half = z * std::sqrt(v);
    rows.push_back({grid.intervals[k].right, a, a - half, a + half});
  }
  return rows;
}

inline void write_band_csv(std::ostream& os, const std::vector<BandRow>& rows) {
  os << "t,A_hat,lo,hi\n";
  for (const auto& r : rows)
    os << format_double(r.t) << ',' << format_double(r.a_hat) << ',' << format_double(r.lo) << ','
       << format_double(r.hi) << '\n';
}

inline std::string index_list(const std::vector<int>& idx) { return format_indices(idx, ' '); }

/// Machine-readable ranking: top rows then the full-model row.
inline void write_ranking_csv(std::ostream& os, const Ranking& r, std::size_t top) {
  const bool weighted = r.kind == Criterion::Kind::Wfic;
  os << criterion_name(r.kind) << ",sqrt_v,sqrt_sqb_plus,I,J,"
     << (weighted ? "H_mean,H_sd" : "H_hat") << '\n';
  auto line = [&](const RankRow& row) {
    os << format_double(row.criterion) << ',' << format_double(std::sqrt(row.v)) << ','
       << format_double(std::sqrt(row.sqb_plus)) << ',' << index_list(row.spec.time_varying()) << ','
       << index_list(row.spec.constant()) << ',' << format_double(row.h_hat);
    if (weighted) os << ',' << format_double(row.h_sd);
    os << '\n';
  };
  for (std::size_t m = 0; m < std::min(top, r.rows.size()); ++m) line(r.rows[m]);
  line(r.full);
}

/// Three-decimal table body in the layout of a LaTeX tabular.
inline void write_ranking_table(std::ostream& os, const Ranking& r, std::size_t top) {
  const bool weighted = r.kind == Criterion::Kind::Wfic;
  if (weighted)
    os << "wfic & sqrt(int v dW) & sqrt((int sqb dW)+) & I & J & Mean(H) & SD(H)\\\\\\hline\n";
  else
    os << criterion_name(r.kind) << " & sqrt(v) & sqrt(sqb+) & I & J & H\\\\\\hline\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%7.3f", v);
    return std::string(buf);
  };
  auto line = [&](const RankRow& row) {
    os << num(row.criterion) << " & " << num(std::sqrt(row.v)) << " & " << num(std::sqrt(row.sqb_plus))
       << " & " << format_indices(row.spec.time_varying()) << " & "
       << format_indices(row.spec.constant()) << "& " << num(row.h_hat);
    if (weighted) os << "& " << num(row.h_sd);
    os << "\\\\\n";
  };
  for (std::size_t m = 0; m < std::min(top, r.rows.size()); ++m) line(r.rows[m]);
  os << "\\hline\n";
  line(r.full);
}

/// (criterion, estimate) for every ranked model.
inline void write_plot_csv(std::ostream& os, const Ranking& r) {
  os << "criterion," << (r.kind == Criterion::Kind::Wfic ? "H_mean" : "H_hat") << '\n';
  for (const auto& row : r.rows) os << format_double(row.criterion) << ',' << format_double(row.h_hat) << '\n';
}

/// (criterion, SD of the estimates) for a weighted ranking.
inline void write_spread_csv(std::ostream& os, const Ranking& r) {
  os << "criterion,H_sd\n";
  for (const auto& row : r.rows) os << format_double(row.criterion) << ',' << format_double(row.h_sd) << '\n';
}

struct RankingCsvRow {
  double criterion = 0.0;
  double sqrt_v = 0.0;
  double sqrt_sqb_plus = 0.0;
  std::vector<int> tv;  // 1-based
  std::vector<int> cst;
  std::vector<double> estimates;
};

inline std::vector<RankingCsvRow> read_ranking_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(0, "missing header row");
  std::vector<RankingCsvRow> out;
  std::size_t row = 0;
  auto ints = [](std::string_view s) {
    std::vector<int> v;
    std::istringstream is{std::string(s)};
    for (int x; is >> x;) v.push_back(x);
    return v;
  };
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto f = detail::split(line, ',');
    if (f.size() < 6) throw IngestError(row, "too few fields");
    auto num = [&](std::string_view s) {
      auto v = detail::parse_double(s);
      if (!v) throw IngestError(row, "cannot parse '" + std::string(s) + "'");
      return *v;
    };
    RankingCsvRow r{num(f[0]), num(f[1]), num(f[2]), ints(f[3]), ints(f[4]), {}};
    for (std::size_t c = 5; c < f.size(); ++c) r.estimates.push_back(num(f[c]));
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_measure_csv(std::ostream& os, const WeightMeasure& w,
                              const std::vector<std::string>& names) {
  os << "t,w";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (const auto& a : w.atoms) {
    os << format_double(a.t) << ',' << format_double(a.w);
    for (Eigen::Index j = 0; j < a.x.size(); ++j) os << ',' << format_double(a.x[j]);
    os << '\n';
  }
}

/// Columns t, w, then q covariate columns in dataset order.
inline WeightMeasure read_measure_csv(std::istream& in, std::size_t q) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(0, "missing header row");
  auto header = detail::split(line, ',');
  if (header.size() != q + 2 || header[0] != "t" || header[1] != "w")
    throw IngestError(0, "weight file header must be t,w followed by " + std::to_string(q) +
                             " covariate columns");
  WeightMeasure w;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto f = detail::split(line, ',');
    if (f.size() != q + 2) throw IngestError(row, "wrong number of fields");
    std::vector<double> v;
    for (auto s : f) {
      auto d = detail::parse_double(s);
      if (!d) throw IngestError(row, "cannot parse '" + std::string(s) + "'");
      v.push_back(*d);
    }
    WeightMeasure::Atom a{v[0], Eigen::VectorXd(static_cast<Eigen::Index>(q)), v[1]};
    for (std::size_t j = 0; j < q; ++j) a.x[static_cast<Eigen::Index>(j)] = v[j + 2];
    w.atoms.push_back(std::move(a));
  }
  return w;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  os << "time,status";
  for (const auto& n : ds.names()) os << ',' << n;
  os << '\n';
  for (const auto& s : ds.subjects()) {
    os << format_double(s.time) << ',' << s.status;
    for (Eigen::Index j = 0; j < s.covariates.size(); ++j) os << ',' << format_double(s.covariates[j]);
    os << '\n';
  }
}

inline json average_json(const AverageEstimate& a) {
  json j{{"lambda", a.lambda}, {"M", a.M}, {"estimate", a.value}};
  j["models"] = json::array();
  for (std::size_t m = 0; m < a.M; ++m) {
    json r = spec_json(a.specs[m]);
    r["criterion"] = a.criterion[m];
    r["H_hat"] = a.estimates[m];
    r["weight"] = a.weights[m];
    j["models"].push_back(std::move(r));
  }
  return j;
}

inline json bootstrap_json(const BootstrapResult& b, double alpha) {
  json j{{"B", b.B},
         {"failed", b.failed},
         {"alpha", alpha},
         {"estimate", b.estimate},
         {"H_full", b.h_full},
         {"c", b.c},
         {"d", b.d},
         {"interval", {b.lower, b.upper}},
         {"mse", b.mse},
         {"reliability_warning", b.reliability_warning}};
  j["selection_frequency"] = json::array();
  for (const auto& [spec, count] : b.selection_counts) {
    json r = spec_json(spec);
    r["count"] = count;
    j["selection_frequency"].push_back(std::move(r));
  }
  return j;
}

}  // namespace ahfic
