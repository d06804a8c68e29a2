#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ahfic/errors.hpp"

namespace ahfic {

struct Subject {
  double time = 0.0;
  int status = 0;
  Eigen::VectorXd covariates;
};

/// Right-censored survival data on the window (0, tau].
///
/// Subjects followed beyond tau count as censored at tau in every estimator;
/// the raw follow-up time is kept so that the window can be changed.
class Dataset {
 public:
  Dataset(std::vector<Subject> subjects, std::vector<std::string> names,
          double tau, std::vector<double> known_censoring = {})
      : subjects_(std::move(subjects)),
        names_(std::move(names)),
        tau_(tau),
        known_censoring_(std::move(known_censoring)) {
    if (subjects_.empty()) throw ValidationError("dataset has no subjects");
    if (names_.empty()) throw ValidationError("dataset has no covariates");
    if (!(tau_ > 0.0) || !std::isfinite(tau_))
      throw ValidationError("tau must be a positive finite number");
    if (!known_censoring_.empty() && known_censoring_.size() != subjects_.size())
      throw ValidationError("known censoring times must cover every subject");
    const auto q = names_.size();
    covariates_.resize(static_cast<Eigen::Index>(subjects_.size()),
                       static_cast<Eigen::Index>(q));
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
      const auto& s = subjects_[i];
      const auto row = i + 1;
      if (!std::isfinite(s.time) || s.time < 0.0)
        throw ValidationError("time must be finite and nonnegative", row);
      if (s.status != 0 && s.status != 1)
        throw ValidationError("status must be 0 or 1", row);
      if (s.status == 1 && s.time == 0.0)
        throw ValidationError("event at time 0 is not allowed", row);
      if (static_cast<std::size_t>(s.covariates.size()) != q)
        throw ValidationError("covariate vector has wrong length", row);
      if (!s.covariates.allFinite())
        throw ValidationError("covariates must be finite", row);
      covariates_.row(static_cast<Eigen::Index>(i)) = s.covariates.transpose();
    }
  }

  std::size_t n() const noexcept { return subjects_.size(); }
  std::size_t q() const noexcept { return names_.size(); }
  double tau() const noexcept { return tau_; }
  const std::vector<Subject>& subjects() const noexcept { return subjects_; }
  const Subject& subject(std::size_t i) const { return subjects_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  /// n x q covariate matrix.
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  bool has_known_censoring() const noexcept { return !known_censoring_.empty(); }
  const std::vector<double>& known_censoring() const noexcept {
    return known_censoring_;
  }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
  }

  Dataset with_tau(double tau) const {
    return Dataset(subjects_, names_, tau, known_censoring_);
  }

 private:
  std::vector<Subject> subjects_;
  std::vector<std::string> names_;
  double tau_;
  std::vector<double> known_censoring_;
  Eigen::MatrixXd covariates_;
};

struct CsvOptions {
  char delimiter = ',';
  std::string time_column = "time";
  std::string status_column = "status";
  /// Covariate columns in order; empty means every remaining column.
  std::vector<std::string> covariates;
  /// Columns centered by their sample mean over all subjects.
  std::vector<std::string> center;
  bool intercept = false;
  std::string intercept_name = "intercept";
  /// Optional column with known (administrative) censoring times.
  std::optional<std::string> censor_column;
  /// Window end; defaults to the largest follow-up time.
  std::optional<double> tau;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses delimited text with a header row. Data rows are numbered from 1 in
/// error messages.
inline Dataset parse_csv(std::istream& in, const CsvOptions& opt) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(0, "missing header row");
  std::vector<std::string> header;
  for (auto f : detail::split(line, opt.delimiter)) header.emplace_back(f);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestError(0, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto time_col = column(opt.time_column);
  const auto status_col = column(opt.status_column);
  std::optional<std::size_t> censor_col;
  if (opt.censor_column) censor_col = column(*opt.censor_column);

  std::vector<std::string> names = opt.covariates;
  if (names.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == time_col || c == status_col || (censor_col && c == *censor_col))
        continue;
      names.push_back(header[c]);
    }
  }
  if (names.empty()) throw IngestError(0, "no covariate columns");
  std::vector<std::size_t> cov_cols;
  for (const auto& nm : names) cov_cols.push_back(column(nm));
  for (const auto& c : opt.center) {
    if (std::find(names.begin(), names.end(), c) == names.end())
      throw ValidationError("centered column '" + c + "' is not a covariate");
  }

  std::vector<double> times;
  std::vector<double> status;
  std::vector<double> censor;
  std::vector<std::vector<double>> cols(names.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto fields = detail::split(line, opt.delimiter);
    if (fields.size() != header.size())
      throw IngestError(row, "expected " + std::to_string(header.size()) +
                                 " fields, found " + std::to_string(fields.size()));
    auto num = [&](std::size_t c) {
      auto v = detail::parse_double(fields[c]);
      if (!v) throw IngestError(row, "cannot parse '" + std::string(fields[c]) +
                                         "' in column '" + header[c] + "'");
      return *v;
    };
    const double t = num(time_col);
    if (t < 0.0) throw ValidationError("negative time", row);
    const double st = num(status_col);
    if (st != 0.0 && st != 1.0) throw ValidationError("status must be 0 or 1", row);
    if (st == 1.0 && t == 0.0)
      throw ValidationError("event at time 0 is not allowed", row);
    times.push_back(t);
    status.push_back(st);
    if (censor_col) censor.push_back(num(*censor_col));
    for (std::size_t j = 0; j < cov_cols.size(); ++j) cols[j].push_back(num(cov_cols[j]));
  }
  if (row == 0) throw IngestError(0, "no data rows");

  for (std::size_t j = 0; j < names.size(); ++j) {
    if (std::find(opt.center.begin(), opt.center.end(), names[j]) == opt.center.end())
      continue;
    const double mean =
        std::accumulate(cols[j].begin(), cols[j].end(), 0.0) / static_cast<double>(row);
    for (auto& v : cols[j]) v -= mean;
  }

  const std::size_t offset = opt.intercept ? 1 : 0;
  if (opt.intercept) names.insert(names.begin(), opt.intercept_name);
  std::vector<Subject> subjects(row);
  for (std::size_t i = 0; i < row; ++i) {
    auto& s = subjects[i];
    s.time = times[i];
    s.status = static_cast<int>(status[i]);
    s.covariates.resize(static_cast<Eigen::Index>(names.size()));
    if (opt.intercept) s.covariates[0] = 1.0;
    for (std::size_t j = 0; j < cols.size(); ++j)
      s.covariates[static_cast<Eigen::Index>(j + offset)] = cols[j][i];
  }
  const double tau = opt.tau ? *opt.tau : *std::max_element(times.begin(), times.end());
  return Dataset(std::move(subjects), std::move(names), tau, std::move(censor));
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, opt);
}

/// n x q matrix whose row i is x_i' when subject i is at risk at s.
inline Eigen::MatrixXd risk_matrix_at(const Dataset& ds, double s) {
  if (!(s > 0.0) || s > ds.tau())
    throw DomainError("risk matrix requested outside (0, tau]");
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.n()),
                                            static_cast<Eigen::Index>(ds.q()));
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.subject(i).time >= s)
      y.row(static_cast<Eigen::Index>(i)) = ds.covariates().row(static_cast<Eigen::Index>(i));
  }
  return y;
}

struct Interval {
  double left = 0.0;
  double right = 0.0;
  double length = 0.0;
};

/// Partition of (0, tau] on which the at-risk matrix is constant.
///
/// Interval k ends at points[k] for k < points.size(); a trailing interval
/// ending at tau exists when tau is not an observed time.
struct TimeGrid {
  std::vector<double> points;
  std::vector<Interval> intervals;
  /// Subjects with an observed event at each point, ascending index.
  std::vector<std::vector<std::size_t>> events_at;

  std::size_t size() const noexcept { return intervals.size(); }

  /// Index of the interval (left, right] containing t, for 0 < t <= tau.
  std::size_t interval_of(double t) const {
    auto it = std::lower_bound(intervals.begin(), intervals.end(), t,
                               [](const Interval& iv, double v) { return iv.right < v; });
    if (t <= 0.0 || it == intervals.end()) throw DomainError("time outside (0, tau]");
    return static_cast<std::size_t>(it - intervals.begin());
  }

  /// Subjects with an event at the right end of interval k.
  std::span<const std::size_t> events_in(std::size_t k) const {
    if (k >= events_at.size()) return {};
    return events_at[k];
  }
};

inline TimeGrid build_grid(const Dataset& ds) {
  TimeGrid g;
  const double tau = ds.tau();
  for (const auto& s : ds.subjects())
    if (s.time > 0.0 && s.time <= tau) g.points.push_back(s.time);
  std::sort(g.points.begin(), g.points.end());
  g.points.erase(std::unique(g.points.begin(), g.points.end()), g.points.end());

  double left = 0.0;
  for (double p : g.points) {
    g.intervals.push_back({left, p, p - left});
    left = p;
  }
  if (g.points.empty() || g.points.back() < tau) g.intervals.push_back({left, tau, tau - left});

  g.events_at.resize(g.points.size());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto& s = ds.subject(i);
    if (s.status != 1 || s.time > tau) continue;
    auto it = std::lower_bound(g.points.begin(), g.points.end(), s.time);
    g.events_at[static_cast<std::size_t>(it - g.points.begin())].push_back(i);
  }
  return g;
}

/// Per-interval sufficient statistics of the at-risk design. Every submodel
/// Gram matrix is a principal submatrix of `gram[k]`.
struct GramCache {
  std::vector<Eigen::MatrixXd> gram;       // Y'Y on interval k
  std::vector<Eigen::VectorXd> risk_sums;  // sum of at-risk x_i on interval k
  std::vector<std::size_t> at_risk_count;
  /// Subjects ordered by follow-up time; the risk set of interval k is the
  /// suffix starting at risk_start[k].
  std::vector<std::size_t> order;
  std::vector<std::size_t> risk_start;

  std::span<const std::size_t> at_risk(std::size_t k) const {
    return std::span<const std::size_t>(order).subspan(risk_start[k]);
  }
};

inline GramCache build_gram_cache(const Dataset& ds, const TimeGrid& grid) {
  GramCache c;
  const auto q = static_cast<Eigen::Index>(ds.q());
  const auto m = grid.size();
  c.order.resize(ds.n());
  std::iota(c.order.begin(), c.order.end(), std::size_t{0});
  std::stable_sort(c.order.begin(), c.order.end(), [&](std::size_t a, std::size_t b) {
    return ds.subject(a).time < ds.subject(b).time;
  });
  c.gram.assign(m, Eigen::MatrixXd::Zero(q, q));
  c.risk_sums.assign(m, Eigen::VectorXd::Zero(q));
  c.at_risk_count.assign(m, 0);
  c.risk_start.assign(m, ds.n());

  // Sweep backwards: risk sets grow as the interval moves left.
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(q);
  std::size_t pos = ds.n();
  for (std::size_t kk = m; kk-- > 0;) {
    const double right = grid.intervals[kk].right;
    while (pos > 0 && ds.subject(c.order[pos - 1]).time >= right) {
      --pos;
      const auto x = ds.covariates().row(static_cast<Eigen::Index>(c.order[pos]));
      g.noalias() += x.transpose() * x;
      sums += x.transpose();
    }
    c.gram[kk] = g;
    c.risk_sums[kk] = sums;
    c.at_risk_count[kk] = ds.n() - pos;
    c.risk_start[kk] = pos;
  }
  return c;
}

struct EventRecord {
  std::size_t interval = 0;
  std::size_t subject = 0;
  double time = 0.0;
};

/// Dataset plus the grid and Gram caches shared by all fits on it.
struct Design {
  Dataset data;
  TimeGrid grid;
  GramCache gram;
  /// Observed events in (0, tau], ordered by time then subject index.
  std::vector<EventRecord> events;

  explicit Design(Dataset ds)
      : data(std::move(ds)), grid(build_grid(data)), gram(build_gram_cache(data, grid)) {
    for (std::size_t k = 0; k < grid.size(); ++k)
      for (auto i : grid.events_in(k)) events.push_back({k, i, grid.intervals[k].right});
  }
};

using DesignPtr = std::shared_ptr<const Design>;

inline DesignPtr make_design(Dataset ds) {
  return std::make_shared<const Design>(std::move(ds));
}

}  // namespace ahfic
