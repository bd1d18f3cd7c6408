#pragma once

// Command implementations behind the `ewca` executable. Argument parsing
// lives in tools/ewca.cpp; everything here works on a RunOptions value so
// the same code path serves fresh runs and manifest re-runs.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ewca/csv.hpp"
#include "ewca/eval.hpp"
#include "ewca/solver.hpp"
#include "ewca/version.hpp"

namespace ewca::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kIoError = 2, kConfigError = 3 };

struct RunOptions {
  std::string command;
  std::string input;
  bool header = false;
  std::string label_column;  // empty: no labels
  std::string output_dir = ".";
  std::string basis;         // transform
  Algorithm algo = Algorithm::Mm;
  SolverConfig config;
  bool epsilon_given = false;
  std::uint64_t seed = 0;
  // evaluate
  std::vector<int> ks;
  int splits = 100;
  int inner_splits = 20;
  double train_frac = 0.5;
  std::vector<double> eps_grid;
  bool grid = false;
  bool refit = true;
  int jobs = 1;
  // benchmark
  std::vector<Index> dims;
  int repeats = 3;
  // synth (also the benchmark data source when no input is given)
  int n_per_class = 50;
  int n_classes = 2;
  int dim = 10;
  double separation = 4.0;
};

inline std::string provenance(const std::string& command) {
  return std::string("ewca ") + kVersion + " " + command;
}

inline std::optional<Algorithm> parse_algorithm(const std::string& s) {
  if (s == "bcd") return Algorithm::Bcd;
  if (s == "mm") return Algorithm::Mm;
  return std::nullopt;
}

inline std::string to_string(LambdaMinStrategy s) {
  switch (s) {
    case LambdaMinStrategy::Exact: return "exact";
    case LambdaMinStrategy::GershgorinBound: return "bound";
    default: return "auto";
  }
}

inline std::optional<LambdaMinStrategy> parse_strategy(const std::string& s) {
  if (s == "auto") return LambdaMinStrategy::Auto;
  if (s == "exact") return LambdaMinStrategy::Exact;
  if (s == "bound") return LambdaMinStrategy::GershgorinBound;
  return std::nullopt;
}

// Seed precedence: explicit flag, then EWCA_SEED, then 0.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EWCA_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0') throw ConfigError("EWCA_SEED is not an unsigned integer");
    return v;
  }
  return 0;
}

// ---------------------------------------------------------------- manifest

namespace detail {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> split_list(const std::string& s, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    if constexpr (std::is_floating_point_v<T>) {
      auto v = ewca::detail::parse_double(item);
      if (!v) throw ConfigError("manifest: bad number in " + key);
      out.push_back(static_cast<T>(*v));
    } else {
      auto v = ewca::detail::parse_index(item);
      if (!v) throw ConfigError("manifest: bad integer in " + key);
      out.push_back(static_cast<T>(*v));
    }
  }
  return out;
}

inline std::string b(bool v) { return v ? "true" : "false"; }

}  // namespace detail

inline std::map<std::string, std::string> to_manifest(const RunOptions& o) {
  const SolverConfig& c = o.config;
  return {
      {"command", o.command},
      {"input", o.input},
      {"header", detail::b(o.header)},
      {"label_column", o.label_column},
      {"output_dir", o.output_dir},
      {"basis", o.basis},
      {"algo", to_string(o.algo)},
      {"epsilon", format_double(c.epsilon)},
      {"epsilon_given", detail::b(o.epsilon_given)},
      {"k", std::to_string(c.k)},
      {"center", detail::b(c.center_data)},
      {"lambda_min", to_string(c.lambda_min_strategy)},
      {"log_domain", detail::b(c.log_domain)},
      {"seed", std::to_string(o.seed)},
      {"outer_tol", format_double(c.outer_tol)},
      {"outer_max_iter", std::to_string(c.outer_max_iter)},
      {"sinkhorn_tol", format_double(c.sinkhorn_tol)},
      {"sinkhorn_max_iter", std::to_string(c.sinkhorn_max_iter)},
      {"mm_inner", std::to_string(c.mm_inner_iter)},
      {"ks", detail::join(o.ks)},
      {"splits", std::to_string(o.splits)},
      {"inner_splits", std::to_string(o.inner_splits)},
      {"train_frac", format_double(o.train_frac)},
      {"eps_grid", detail::join(o.eps_grid)},
      {"grid", detail::b(o.grid)},
      {"refit", detail::b(o.refit)},
      {"jobs", std::to_string(o.jobs)},
      {"dims", detail::join(o.dims)},
      {"repeats", std::to_string(o.repeats)},
      {"n_per_class", std::to_string(o.n_per_class)},
      {"n_classes", std::to_string(o.n_classes)},
      {"dim", std::to_string(o.dim)},
      {"separation", format_double(o.separation)},
  };
}

inline void write_manifest(const RunOptions& o, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  out << "# " << provenance(o.command) << '\n';
  out << "version=" << kVersion << '\n';
  out << "created=" << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << '\n';
  for (const auto& [key, value] : to_manifest(o)) out << key << '=' << value << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline RunOptions read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = ewca::detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const std::size_t eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[std::string(view.substr(0, eq))] = std::string(view.substr(eq + 1));
  }

  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("manifest '" + path + "' lacks key '" + key + "'");
    return it->second;
  };
  auto num = [&](const std::string& key) {
    auto v = ewca::detail::parse_double(get(key));
    if (!v) throw ConfigError("manifest: '" + key + "' is not a number");
    return *v;
  };
  auto integer = [&](const std::string& key) {
    auto v = ewca::detail::parse_index(get(key));
    if (!v) throw ConfigError("manifest: '" + key + "' is not a nonnegative integer");
    return *v;
  };
  auto flag = [&](const std::string& key) {
    const std::string& v = get(key);
    if (v != "true" && v != "false") throw ConfigError("manifest: '" + key + "' must be true/false");
    return v == "true";
  };

  RunOptions o;
  o.command = get("command");
  o.input = get("input");
  o.header = flag("header");
  o.label_column = get("label_column");
  o.output_dir = get("output_dir");
  o.basis = get("basis");
  const auto algo = parse_algorithm(get("algo"));
  if (!algo) throw ConfigError("manifest: unknown algo");
  o.algo = *algo;
  o.config.epsilon = num("epsilon");
  o.epsilon_given = flag("epsilon_given");
  o.config.k = static_cast<int>(integer("k"));
  o.config.center_data = flag("center");
  const auto strategy = parse_strategy(get("lambda_min"));
  if (!strategy) throw ConfigError("manifest: unknown lambda_min");
  o.config.lambda_min_strategy = *strategy;
  o.config.log_domain = flag("log_domain");
  {
    const std::string& s = get("seed");
    char* end = nullptr;
    o.seed = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw ConfigError("manifest: bad seed");
  }
  o.config.seed = o.seed;
  o.config.outer_tol = num("outer_tol");
  o.config.outer_max_iter = static_cast<int>(integer("outer_max_iter"));
  o.config.sinkhorn_tol = num("sinkhorn_tol");
  o.config.sinkhorn_max_iter = static_cast<int>(integer("sinkhorn_max_iter"));
  o.config.mm_inner_iter = static_cast<int>(integer("mm_inner"));
  o.ks = detail::split_list<int>(get("ks"), "ks");
  o.splits = static_cast<int>(integer("splits"));
  o.inner_splits = static_cast<int>(integer("inner_splits"));
  o.train_frac = num("train_frac");
  o.eps_grid = detail::split_list<double>(get("eps_grid"), "eps_grid");
  o.grid = flag("grid");
  o.refit = flag("refit");
  o.jobs = static_cast<int>(integer("jobs"));
  o.dims = detail::split_list<Index>(get("dims"), "dims");
  o.repeats = static_cast<int>(integer("repeats"));
  o.n_per_class = static_cast<int>(integer("n_per_class"));
  o.n_classes = static_cast<int>(integer("n_classes"));
  o.dim = static_cast<int>(integer("dim"));
  o.separation = num("separation");
  return o;
}

// ---------------------------------------------------------------- commands

namespace detail {

inline std::string out_path(const RunOptions& o, const std::string& name) {
  return (std::filesystem::path(o.output_dir) / name).string();
}

inline void prepare_output(const RunOptions& o) {
  std::error_code ec;
  std::filesystem::create_directories(o.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + o.output_dir + "': " + ec.message());
}

inline CsvTable load(const RunOptions& o) {
  if (o.input.empty()) throw ConfigError("no input file given");
  std::optional<std::string> label;
  if (!o.label_column.empty()) label = o.label_column;
  return ingest_csv(o.input, o.header, label);
}

inline LabeledDataset load_labeled(const RunOptions& o) {
  if (o.label_column.empty()) throw ConfigError("this command needs --label-column");
  CsvTable t = load(o);
  return LabeledDataset(DataMatrix(std::move(t.data)), std::move(*t.labels));
}

inline std::vector<std::string> column_names(const std::string& prefix, Index count) {
  std::vector<std::string> names;
  for (Index i = 1; i <= count; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

inline void write_fit_outputs(const RunOptions& o, const FitResult& result) {
  const std::string tag = provenance(o.command);
  write_matrix_csv(out_path(o, "basis.csv"), result.basis.values(), tag,
                   column_names("u", result.basis.rank()));
  write_matrix_csv(out_path(o, "plan.csv"), result.plan.values(), tag);
  CsvWriter trace(out_path(o, "trace.csv"), tag);
  trace.header({"iteration", "objective", "transport_cost", "entropy", "sinkhorn_iterations",
                "marginal_error"});
  for (std::size_t t = 0; t < result.trace.size(); ++t) {
    const TraceEntry& e = result.trace[t];
    trace.row({std::to_string(t), format_double(e.objective), format_double(e.transport_cost),
               format_double(e.entropy), std::to_string(e.sinkhorn_iterations),
               format_double(e.marginal_error)});
  }
}

}  // namespace detail

inline int cmd_fit(const RunOptions& o, std::ostream& log) {
  CsvTable table = detail::load(o);
  const DataMatrix data(std::move(table.data));
  SolverConfig cfg = o.config;
  cfg.seed = o.seed;
  if (o.command == "pca") cfg.epsilon = 0.0;
  detail::prepare_output(o);
  const FitResult result = fit(data, cfg, o.algo);
  detail::write_fit_outputs(o, result);
  write_manifest(o, detail::out_path(o, "manifest.txt"));
  for (const std::string& w : result.warnings) log << "warning: " << w << '\n';
  log << o.command << ": d=" << data.dim() << " n=" << data.size() << " k=" << cfg.k
      << " iterations=" << result.iterations
      << " objective=" << format_double(result.trace.back().objective)
      << (result.converged ? "" : " (not converged)") << '\n';
  return kOk;
}

// U^T x for every sample of the input, one row per sample. The data is used
// as given (no centering).
inline int cmd_transform(const RunOptions& o, std::ostream& log) {
  if (o.basis.empty()) throw ConfigError("transform needs --basis");
  CsvTable basis_table = ingest_csv(o.basis, true);
  const StiefelBasis basis(std::move(basis_table.data).transpose(), 1e-8);
  CsvTable table = detail::load(o);
  if (table.data.rows() != basis.dim()) {
    throw DimensionError("basis has d=" + std::to_string(basis.dim()) + " but data has " +
                         std::to_string(table.data.rows()) + " features");
  }
  detail::prepare_output(o);
  const Matrix projected = (basis.values().transpose() * table.data).transpose();
  write_matrix_csv(detail::out_path(o, "projected.csv"), projected, provenance(o.command),
                   detail::column_names("z", basis.rank()));
  write_manifest(o, detail::out_path(o, "manifest.txt"));
  log << "transform: wrote " << projected.rows() << " x " << projected.cols() << '\n';
  return kOk;
}

// Rows method,k,epsilon,mean,q1,q3. Per k: the raw baseline, PCA, then EWCA
// with a fixed epsilon (--epsilon), one row per grid value (--grid), or
// nested selection on each outer train half (default; the epsilon column
// then holds the median selected value).
inline int cmd_evaluate(const RunOptions& o, std::ostream& log) {
  const LabeledDataset dataset = detail::load_labeled(o);
  const std::vector<int> ks = o.ks.empty() ? std::vector<int>{o.config.k} : o.ks;
  const SplitSpec outer{o.train_frac, o.splits, o.seed};
  const SplitSpec inner{o.train_frac, o.inner_splits, o.seed + 1};
  const std::vector<double> grid =
      o.eps_grid.empty() ? default_epsilon_grid(dataset.data()) : o.eps_grid;
  const EvalOptions eval_opts{o.refit, o.jobs};

  detail::prepare_output(o);
  write_manifest(o, detail::out_path(o, "manifest.txt"));
  CsvWriter out(detail::out_path(o, "results.csv"), provenance(o.command));
  out.header({"method", "k", "epsilon", "mean", "q1", "q3"});
  auto emit = [&](const std::string& method, int k, const std::string& eps, const EvalReport& r) {
    out.row({method, std::to_string(k), eps, format_double(r.mean), format_double(r.q1),
             format_double(r.q3)});
    log << method << " k=" << k << " eps=" << (eps.empty() ? "-" : eps) << " mean=" << r.mean
        << '\n';
  };

  const EvalReport raw = evaluate_embedding(dataset, std::nullopt, outer, o.jobs);
  for (int k : ks) {
    SolverConfig cfg = o.config;
    cfg.k = k;
    cfg.seed = o.seed;
    validate(dataset.data(), cfg);
    emit("raw", k, "", raw);
    emit("pca", k, "0", evaluate_method(dataset, pca_fitter(k, cfg.center_data), outer, eval_opts));

    if (o.epsilon_given) {
      emit("ewca", k, format_double(cfg.epsilon),
           evaluate_method(dataset, ewca_fitter(cfg, o.algo), outer, eval_opts));
    } else if (o.grid) {
      for (double eps : grid) {
        SolverConfig c = cfg;
        c.epsilon = eps;
        emit("ewca", k, format_double(eps),
             evaluate_method(dataset, ewca_fitter(c, o.algo), outer, eval_opts));
      }
    } else {
      const std::vector<Split> splits = stratified_splits(dataset.labels(), outer);
      std::vector<double> errors(splits.size());
      std::vector<double> chosen(splits.size());
      const Matrix& x = dataset.data().values();
      for (std::size_t s = 0; s < splits.size(); ++s) {
        const Split& split = splits[s];
        const LabeledDataset train(DataMatrix(select_columns(x, split.train)),
                                   select_labels(dataset.labels(), split.train));
        const EpsilonSelection sel =
            select_epsilon(train, grid, k, inner, cfg, o.algo, o.jobs);
        SolverConfig c = cfg;
        c.epsilon = sel.epsilon;
        chosen[s] = sel.epsilon;
        const StiefelBasis basis = fit(train.data(), c, o.algo).basis;
        errors[s] = ewca::detail::split_error(x, dataset.labels(), split, basis);
      }
      emit("ewca", k, format_double(quantile(chosen, 0.5)), make_report(std::move(errors)));
    }
  }
  return kOk;
}

inline DataMatrix benchmark_data(const RunOptions& o) {
  if (!o.input.empty()) {
    CsvTable t = detail::load(o);
    return DataMatrix(std::move(t.data));
  }
  const Index d_max = o.dims.empty() ? o.dim : *std::max_element(o.dims.begin(), o.dims.end());
  return make_synthetic_clusters(o.n_per_class, static_cast<int>(d_max), o.n_classes,
                                 o.separation, o.seed)
      .data();
}

inline int cmd_benchmark(const RunOptions& o, std::ostream& log) {
  const DataMatrix data = benchmark_data(o);
  std::vector<Index> dims = o.dims.empty() ? std::vector<Index>{data.dim()} : o.dims;
  SolverConfig cfg = o.config;
  cfg.seed = o.seed;
  detail::prepare_output(o);
  write_manifest(o, detail::out_path(o, "manifest.txt"));
  const std::vector<TimingRow> rows =
      timing_sweep(data, dims, cfg.k, cfg, {Algorithm::Bcd, Algorithm::Mm}, o.repeats, o.seed);
  CsvWriter out(detail::out_path(o, "timing.csv"), provenance(o.command));
  out.header({"algo", "d", "mean", "q1", "q3", "objective", "iterations"});
  for (const TimingRow& r : rows) {
    out.row({to_string(r.algo), std::to_string(r.dim), format_double(r.mean),
             format_double(r.q1), format_double(r.q3), format_double(r.objective),
             format_double(r.iterations)});
    log << to_string(r.algo) << " d=" << r.dim << " mean=" << r.mean << "s\n";
  }
  return kOk;
}

// Synthetic labeled clusters as data.csv (header x1..xd,label).
inline int cmd_synth(const RunOptions& o, std::ostream& log) {
  const LabeledDataset ds =
      make_synthetic_clusters(o.n_per_class, o.dim, o.n_classes, o.separation, o.seed);
  detail::prepare_output(o);
  CsvWriter out(detail::out_path(o, "data.csv"), provenance(o.command));
  std::vector<std::string> names = detail::column_names("x", ds.data().dim());
  names.push_back("label");
  out.header(names);
  const Matrix& x = ds.data().values();
  std::vector<std::string> cells(names.size());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) cells[static_cast<std::size_t>(i)] = format_double(x(i, j));
    cells.back() = std::to_string(ds.labels()[static_cast<std::size_t>(j)]);
    out.row(cells);
  }
  write_manifest(o, detail::out_path(o, "manifest.txt"));
  log << "synth: wrote " << x.cols() << " samples with " << x.rows() << " features\n";
  return kOk;
}

inline int run(const RunOptions& o, std::ostream& log) {
  if (o.command == "fit" || o.command == "pca") return cmd_fit(o, log);
  if (o.command == "transform") return cmd_transform(o, log);
  if (o.command == "evaluate") return cmd_evaluate(o, log);
  if (o.command == "benchmark") return cmd_benchmark(o, log);
  if (o.command == "synth") return cmd_synth(o, log);
  throw ConfigError("unknown command '" + o.command + "'");
}

// Maps an exception to the documented exit code and prints it.
inline int report(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e)) return kIoError;
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  return kDomainError;
}

}  // namespace ewca::cli
