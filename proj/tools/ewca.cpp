// ewca command-line front end. See README.md for the command reference.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "ewca/cli.hpp"

namespace {

using ewca::cli::RunOptions;

void add_input(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("input", o.input, "CSV file, one sample per row")->required();
  cmd->add_flag("--header", o.header, "first non-comment line holds column names");
  cmd->add_option("--label-column", o.label_column, "label column name or 0-based index");
  cmd->add_option("-o,--out", o.output_dir, "output directory")->capture_default_str();
}

void add_solver(CLI::App* cmd, RunOptions& o, std::string& algo, std::string& lambda_min) {
  ewca::SolverConfig& c = o.config;
  cmd->add_option("--algo", algo, "bcd or mm")
      ->check(CLI::IsMember({"bcd", "mm"}))
      ->capture_default_str();
  cmd->add_option("--epsilon", c.epsilon, "entropic regularization (0 selects PCA)")
      ->capture_default_str();
  cmd->add_option("--k", c.k, "subspace dimension")->capture_default_str();
  cmd->add_flag("--center,!--no-center", c.center_data, "center the data before fitting");
  cmd->add_option("--lambda-min", lambda_min, "auto, exact or bound")
      ->check(CLI::IsMember({"auto", "exact", "bound"}))
      ->capture_default_str();
  cmd->add_flag("--log-domain", c.log_domain, "always run Sinkhorn in the log domain");
  cmd->add_option("--outer-tol", c.outer_tol, "relative objective change to stop")
      ->capture_default_str();
  cmd->add_option("--outer-max-iter", c.outer_max_iter)->capture_default_str();
  cmd->add_option("--sinkhorn-tol", c.sinkhorn_tol, "max marginal violation")
      ->capture_default_str();
  cmd->add_option("--sinkhorn-max-iter", c.sinkhorn_max_iter)->capture_default_str();
  cmd->add_option("--mm-inner", c.mm_inner_iter, "MM updates per outer iteration")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropic Wasserstein component analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ewca::kVersion);

  RunOptions o;
  std::string algo = "mm";
  std::string lambda_min = "auto";
  std::optional<std::uint64_t> seed;
  std::string manifest;
  std::string rerun_out;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "random seed (falls back to EWCA_SEED, then 0)");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit a subspace; writes basis, plan and trace");
  add_input(fit, o);
  add_solver(fit, o, algo, lambda_min);
  add_seed(fit);

  CLI::App* pca = app.add_subcommand("pca", "PCA basis in the fit output format");
  add_input(pca, o);
  pca->add_option("--k", o.config.k)->capture_default_str();
  pca->add_flag("--center,!--no-center", o.config.center_data);

  CLI::App* transform = app.add_subcommand("transform", "project samples onto a basis");
  add_input(transform, o);
  transform->add_option("--basis", o.basis, "basis.csv from fit or pca")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "1-NN error of raw, PCA and EWCA");
  add_input(evaluate, o);
  add_solver(evaluate, o, algo, lambda_min);
  add_seed(evaluate);
  evaluate->add_option("--ks", o.ks, "subspace dimensions to sweep")->delimiter(',');
  evaluate->add_option("--splits", o.splits, "outer train/test splits")->capture_default_str();
  evaluate->add_option("--inner-splits", o.inner_splits, "splits for epsilon selection")
      ->capture_default_str();
  evaluate->add_option("--train-frac", o.train_frac)->capture_default_str();
  evaluate->add_option("--eps-grid", o.eps_grid, "epsilon candidates")->delimiter(',');
  evaluate->add_flag("--grid", o.grid, "one EWCA row per epsilon candidate");
  evaluate->add_flag("--refit,!--no-refit", o.refit, "refit the subspace on every train split");
  evaluate->add_option("--jobs", o.jobs, "parallel split evaluations")->capture_default_str();

  CLI::App* bench = app.add_subcommand("benchmark", "BCD vs MM wall time over d");
  bench->add_option("input", o.input, "CSV file (synthetic clusters when omitted)");
  bench->add_flag("--header", o.header);
  bench->add_option("--label-column", o.label_column);
  bench->add_option("-o,--out", o.output_dir)->capture_default_str();
  add_solver(bench, o, algo, lambda_min);
  add_seed(bench);
  bench->add_option("--dims", o.dims, "feature counts to subsample")->delimiter(',');
  bench->add_option("--repeats", o.repeats)->capture_default_str();
  bench->add_option("--n-per-class", o.n_per_class)->capture_default_str();
  bench->add_option("--classes", o.n_classes)->capture_default_str();
  bench->add_option("--separation", o.separation)->capture_default_str();

  CLI::App* synth = app.add_subcommand("synth", "write Gaussian clusters as data.csv");
  synth->add_option("-o,--out", o.output_dir)->capture_default_str();
  synth->add_option("--n-per-class", o.n_per_class)->capture_default_str();
  synth->add_option("--classes", o.n_classes)->capture_default_str();
  synth->add_option("--dim", o.dim)->capture_default_str();
  synth->add_option("--separation", o.separation)->capture_default_str();
  add_seed(synth);

  CLI::App* rerun = app.add_subcommand("rerun", "repeat a run from its manifest.txt");
  rerun->add_option("manifest", manifest)->required();
  rerun->add_option("-o,--out", rerun_out, "output directory (default: the recorded one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ewca::cli::kConfigError;
  }

  try {
    if (rerun->parsed()) {
      o = ewca::cli::read_manifest(manifest);
      if (!rerun_out.empty()) o.output_dir = rerun_out;
    } else {
      o.command = app.get_subcommands().front()->get_name();
      o.algo = *ewca::cli::parse_algorithm(algo);
      o.config.lambda_min_strategy = *ewca::cli::parse_strategy(lambda_min);
      o.seed = ewca::cli::resolve_seed(seed);
      o.config.seed = o.seed;
      for (CLI::App* cmd : {fit, evaluate, bench}) {
        if (cmd->parsed() && cmd->count("--epsilon") > 0) o.epsilon_given = true;
      }
    }
    return ewca::cli::run(o, std::cerr);
  } catch (const std::exception& e) {
    return ewca::cli::report(e, std::cerr);
  }
}
