#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ahfic/cli.hpp"

namespace {

using ahfic::cli::RunConfig;

void add_data_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("input", c.input, "CSV file with one row per subject")->required();
  sub->add_option("--time-column", c.csv.time_column, "follow-up time column");
  sub->add_option("--status-column", c.csv.status_column, "event indicator column (1 = event)");
  sub->add_option("--covariates", c.csv.covariates, "covariate columns in order (default: all others)")
      ->delimiter(',');
  sub->add_option("--center", c.csv.center, "columns to center at their sample mean")->delimiter(',');
  sub->add_flag("--intercept", c.csv.intercept, "prepend an intercept column");
  sub->add_option("--censor-column", c.csv.censor_column, "known censoring times");
  sub->add_option("--tau", c.csv.tau, "end of the observation window");
  sub->add_option("--delimiter", c.csv.delimiter, "field separator");
}

void add_selection_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--criterion", c.criterion, "fic, fic_star or wfic")
      ->check(CLI::IsMember({"fic", "fic_star", "wfic"}));
  sub->add_option("--protect", c.protect, "name=tv|const|either");
  sub->add_option("--t", c.focus_t, "focus time");
  sub->add_option("--t0", c.focus_t0, "start of the increment H(t) - H(t0)");
  sub->add_option("--x", c.focus_x, "focus covariate, name=value or name=qP");
  sub->add_option("--weights-file", c.weights_file, "weight measure CSV (t,w,covariates)");
  sub->add_option("--virtual-patients", c.virtual_patients, "number of virtual patients");
  sub->add_option("--fix", c.fix, "fixed covariate for virtual patients, name=value or name=qP");
  sub->add_option("--empirical", c.empirical, "draws per subject for the empirical measure");
  sub->add_option("--measure-out", c.measure_out, "write the weight measure used");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--workers", c.workers, "worker threads (0 = all cores)");
  sub->add_option("--top", c.top, "rows reported");
}

void add_bootstrap_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--bootstrap", c.bootstrap, "bootstrap replicates");
  sub->add_option("--alpha", c.alpha, "one-sided level; interval coverage is 1 - 2 alpha");
  sub->add_flag("--known-censoring", c.known_censoring, "resample censoring from --censor-column");
  sub->add_option("--M", c.M, "models averaged");
  sub->add_option("--lambda", c.lambda, "softmin temperature (default 1/median criterion)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Focused model selection for additive hazards regression"};
  app.set_config("--config");
  app.require_subcommand(1);
  RunConfig c;

  auto* fit = app.add_subcommand("fit", "fit the full model");
  add_data_options(fit, c);
  fit->add_option("--out", c.out, "fit JSON (default stdout)");
  fit->add_option("--bands", c.bands_dir, "directory for pointwise coefficient bands");

  auto* rnk = app.add_subcommand("rank", "rank candidate models");
  add_data_options(rnk, c);
  add_selection_options(rnk, c);
  rnk->add_option("--out", c.out, "ranking CSV (default stdout)");
  rnk->add_option("--plot", c.plot_out, "criterion-versus-estimate CSV");
  rnk->add_option("--spread", c.spread_out, "estimate spread CSV (wfic)");
  rnk->add_flag("--paper-format", c.paper_format, "three-decimal table");

  auto* avg = app.add_subcommand("average", "model-averaged estimate");
  add_data_options(avg, c);
  add_selection_options(avg, c);
  add_bootstrap_options(avg, c);
  avg->add_option("--out", c.out, "JSON (default stdout)");

  auto* boot = app.add_subcommand("bootstrap", "bootstrap interval for the selected estimate");
  add_data_options(boot, c);
  add_selection_options(boot, c);
  add_bootstrap_options(boot, c);
  boot->add_option("--out", c.out, "JSON (default stdout)");

  auto* sim = app.add_subcommand("simulate", "draw one data set from the full fit");
  add_data_options(sim, c);
  sim->add_option("--seed", c.seed, "random seed");
  sim->add_flag("--known-censoring", c.known_censoring, "resample censoring from --censor-column");
  sim->add_option("--out", c.out, "CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(fit)) ahfic::cli::cmd_fit(c);
    else if (app.got_subcommand(rnk)) ahfic::cli::cmd_rank(c);
    else if (app.got_subcommand(avg)) ahfic::cli::cmd_average(c);
    else if (app.got_subcommand(boot)) ahfic::cli::cmd_bootstrap(c);
    else if (app.got_subcommand(sim)) ahfic::cli::cmd_simulate(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ahfic::cli::exit_code(e);
  }
  return 0;
}
