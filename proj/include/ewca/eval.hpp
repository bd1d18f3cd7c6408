#pragma once

// Evaluation harness: stratified repeated holdout, 1-NN classification of
// projected samples, epsilon selection on train subsplits, class-mass
// summaries of transport plans, synthetic clusters and timing sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ewca/random.hpp"
#include "ewca/solver.hpp"
#include "ewca/subspace.hpp"
#include "ewca/types.hpp"

namespace ewca {

class LabeledDataset {
 public:
  LabeledDataset(DataMatrix data, std::vector<int> labels)
      : data_(std::move(data)), labels_(std::move(labels)) {
    if (static_cast<Index>(labels_.size()) != data_.size()) {
      throw DimensionError("label count " + std::to_string(labels_.size()) +
                           " does not match sample count " + std::to_string(data_.size()));
    }
    std::map<int, int> counts;
    for (int y : labels_) ++counts[y];
    for (const auto& [label, count] : counts) {
      if (count < 2) {
        throw ConfigError("class " + std::to_string(label) + " has fewer than 2 samples");
      }
    }
  }

  const DataMatrix& data() const { return data_; }
  const std::vector<int>& labels() const { return labels_; }
  Index size() const { return data_.size(); }

 private:
  DataMatrix data_;
  std::vector<int> labels_;
};

struct SplitSpec {
  double train_fraction = 0.5;
  int n_repeats = 100;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

inline void check_split_spec(const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
  if (spec.n_repeats < 1) {
    throw ConfigError("number of splits must be positive");
  }
}

// Per class, round(train_fraction * n_c) samples go to train, clamped so both
// sides keep at least one sample. Indices within each side are ascending.
inline std::vector<Split> stratified_splits(const std::vector<int>& labels, const SplitSpec& spec) {
  check_split_spec(spec);
  std::map<int, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(static_cast<Index>(i));
  }
  const CounterRng root(spec.seed, 0x73706c6974ULL);
  std::vector<Split> splits;
  splits.reserve(static_cast<std::size_t>(spec.n_repeats));
  for (int r = 0; r < spec.n_repeats; ++r) {
    CounterRng rng = root.substream(static_cast<std::uint64_t>(r));
    Split split;
    for (const auto& [label, members] : by_class) {
      std::vector<Index> shuffled = members;
      rng.shuffle(shuffled);
      const auto n_c = static_cast<double>(members.size());
      auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n_c));
      n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
      split.train.insert(split.train.end(), shuffled.begin(),
                         shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
      split.test.insert(split.test.end(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train),
                        shuffled.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

inline Matrix select_columns(const Matrix& x, const std::vector<Index>& idx) {
  Matrix out(x.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = x.col(idx[j]);
  return out;
}

inline std::vector<int> select_labels(const std::vector<int>& labels,
                                      const std::vector<Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

// Fraction of test columns whose nearest train column (Euclidean, ties to
// the lowest train index) carries a different label.
inline double one_nn_error(const Matrix& train_x, const std::vector<int>& train_y,
                           const Matrix& test_x, const std::vector<int>& test_y) {
  if (train_x.cols() == 0 || test_x.cols() == 0) {
    throw EmptySet("1-NN needs nonempty train and test sets");
  }
  if (train_x.rows() != test_x.rows()) {
    throw DimensionError("1-NN: train and test have different feature dimensions");
  }
  if (static_cast<Index>(train_y.size()) != train_x.cols() ||
      static_cast<Index>(test_y.size()) != test_x.cols()) {
    throw DimensionError("1-NN: label count does not match sample count");
  }
  std::size_t wrong = 0;
  for (Index t = 0; t < test_x.cols(); ++t) {
    Index best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < train_x.cols(); ++i) {
      const double dist = (train_x.col(i) - test_x.col(t)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    if (train_y[static_cast<std::size_t>(best)] != test_y[static_cast<std::size_t>(t)]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(test_x.cols());
}

inline double one_nn_error(const LabeledDataset& train, const LabeledDataset& test) {
  return one_nn_error(train.data().values(), train.labels(), test.data().values(), test.labels());
}

// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptySet("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  s.median = quantile(values, 0.5);
  s.q1 = quantile(values, 0.25);
  s.q3 = quantile(values, 0.75);
  return s;
}

struct EvalReport {
  std::vector<double> per_split_error;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

inline EvalReport make_report(std::vector<double> errors) {
  const Summary s = summarize(errors);
  return {std::move(errors), s.mean, s.median, s.q1, s.q3};
}

// Maps training samples to a basis. An empty Fitter means "no projection".
using Fitter = std::function<StiefelBasis(const DataMatrix& train)>;

struct EvalOptions {
  bool refit_per_split = true;
  int jobs = 1;
};

namespace detail {

// Runs body(i) for i in [0, count) on up to `jobs` threads; results are
// written by index so the reduction order does not depend on scheduling.
template <typename Body>
void parallel_for(int count, int jobs, const Body& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += jobs) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline double split_error(const Matrix& x, const std::vector<int>& labels, const Split& split,
                          const std::optional<StiefelBasis>& basis) {
  Matrix train = select_columns(x, split.train);
  Matrix test = select_columns(x, split.test);
  if (basis) {
    train = basis->values().transpose() * train;
    test = basis->values().transpose() * test;
  }
  return one_nn_error(train, select_labels(labels, split.train), test,
                      select_labels(labels, split.test));
}

}  // namespace detail

// 1-NN error of the fixed projection U^T x (or of the raw data when `basis`
// is empty) over stratified splits.
inline EvalReport evaluate_embedding(const LabeledDataset& dataset,
                                     const std::optional<StiefelBasis>& basis,
                                     const SplitSpec& spec, int jobs = 1) {
  if (basis && basis->dim() != dataset.data().dim()) {
    throw DimensionError("basis dimension does not match the dataset");
  }
  const std::vector<Split> splits = stratified_splits(dataset.labels(), spec);
  std::vector<double> errors(splits.size());
  detail::parallel_for(static_cast<int>(splits.size()), jobs, [&](int i) {
    errors[static_cast<std::size_t>(i)] = detail::split_error(
        dataset.data().values(), dataset.labels(), splits[static_cast<std::size_t>(i)], basis);
  });
  return make_report(std::move(errors));
}

// 1-NN error of a subspace method. With refit_per_split the basis is fitted
// on the train side of every split; otherwise once on the whole dataset.
inline EvalReport evaluate_method(const LabeledDataset& dataset, const Fitter& fitter,
                                  const SplitSpec& spec, const EvalOptions& options = {}) {
  if (!fitter) return evaluate_embedding(dataset, std::nullopt, spec, options.jobs);
  if (!options.refit_per_split) {
    return evaluate_embedding(dataset, fitter(dataset.data()), spec, options.jobs);
  }
  const std::vector<Split> splits = stratified_splits(dataset.labels(), spec);
  std::vector<double> errors(splits.size());
  const Matrix& x = dataset.data().values();
  detail::parallel_for(static_cast<int>(splits.size()), options.jobs, [&](int i) {
    const Split& split = splits[static_cast<std::size_t>(i)];
    const StiefelBasis basis = fitter(DataMatrix(select_columns(x, split.train)));
    errors[static_cast<std::size_t>(i)] = detail::split_error(x, dataset.labels(), split, basis);
  });
  return make_report(std::move(errors));
}

inline Fitter pca_fitter(int k, bool center_data = true) {
  return [k, center_data](const DataMatrix& train) {
    return pca(train, k, center_data).basis;
  };
}

inline Fitter ewca_fitter(const SolverConfig& config, Algorithm algo) {
  return [config, algo](const DataMatrix& train) { return fit(train, config, algo).basis; };
}

struct EpsilonSelection {
  double epsilon = 0.0;
  std::vector<double> mean_errors;  // aligned with the candidates
};

// Candidate with the lowest mean 1-NN error over inner splits of `train`,
// refitting EWCA per candidate and split. Ties go to the smaller epsilon,
// then to the earlier candidate.
inline EpsilonSelection select_epsilon(const LabeledDataset& train,
                                       const std::vector<double>& candidates, int k,
                                       const SplitSpec& inner_spec, SolverConfig base = {},
                                       Algorithm algo = Algorithm::Mm, int jobs = 1) {
  if (candidates.empty()) throw ConfigError("epsilon candidate list is empty");
  for (double eps : candidates) {
    if (!(eps > 0.0) || !std::isfinite(eps)) {
      throw ConfigError("epsilon candidates must be finite and positive");
    }
  }
  base.k = k;
  EpsilonSelection out;
  std::size_t best = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    SolverConfig cfg = base;
    cfg.epsilon = candidates[c];
    const EvalReport report =
        evaluate_method(train, ewca_fitter(cfg, algo), inner_spec, EvalOptions{true, jobs});
    out.mean_errors.push_back(report.mean);
    if (c == 0) continue;
    const double cur = report.mean;
    const double inc = out.mean_errors[best];
    if (cur < inc || (cur == inc && candidates[c] < candidates[best])) best = c;
  }
  out.epsilon = candidates[best];
  return out;
}

// `count` values log-spaced over [lo, hi] * scale.
inline std::vector<double> log_grid(double lo, double hi, int count, double scale = 1.0) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw ConfigError("invalid log grid");
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    grid.push_back(scale * std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
  }
  return grid;
}

// Eight log-spaced values over [1e-3, 1e2] times the mean pairwise cost.
inline std::vector<double> default_epsilon_grid(const DataMatrix& data) {
  const double scale = mean_pairwise_cost(data);
  return log_grid(1e-3, 1e2, 8, scale > 0.0 ? scale : 1.0);
}

struct ClassMass {
  double within = 0.0;
  double between = 0.0;
};

inline ClassMass plan_class_mass(const TransportPlan& plan, const std::vector<int>& labels) {
  if (plan.rows() != static_cast<Index>(labels.size()) ||
      plan.cols() != static_cast<Index>(labels.size())) {
    throw DimensionError("label count does not match the plan size");
  }
  const Matrix& p = plan.values();
  double within = 0.0;
  for (Index j = 0; j < p.cols(); ++j) {
    for (Index i = 0; i < p.rows(); ++i) {
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        within += p(i, j);
      }
    }
  }
  return {within, 1.0 - within};
}

// Isotropic unit-variance Gaussian blobs. Centers sit at separation / sqrt(2)
// times distinct coordinate axes (a regular simplex with edge `separation`)
// when n_classes <= d, otherwise at multiples of `separation` along the first
// axis. Samples are ordered by class.
inline LabeledDataset make_synthetic_clusters(int n_per_class, int d, int n_classes,
                                              double separation, std::uint64_t seed,
                                              double noise = 1.0) {
  if (n_per_class < 2 || d < 1 || n_classes < 1 || !(separation >= 0.0) || !(noise > 0.0)) {
    throw ConfigError("synthetic clusters need n_per_class >= 2, d >= 1, n_classes >= 1, "
                      "separation >= 0 and noise > 0");
  }
  CounterRng rng = CounterRng(seed, 0x73796e7468ULL);
  const Index n = static_cast<Index>(n_per_class) * n_classes;
  Matrix x(d, n);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (int c = 0; c < n_classes; ++c) {
    Vector mu = Vector::Zero(d);
    if (n_classes <= d) {
      mu(c) = separation / std::sqrt(2.0);
    } else {
      mu(0) = separation * c;
    }
    for (int s = 0; s < n_per_class; ++s) {
      const Index j = static_cast<Index>(c) * n_per_class + s;
      for (Index i = 0; i < d; ++i) x(i, j) = mu(i) + noise * rng.normal();
      labels.push_back(c);
    }
  }
  return LabeledDataset(DataMatrix(std::move(x)), std::move(labels));
}

struct TimingRow {
  Algorithm algo = Algorithm::Bcd;
  Index dim = 0;
  double mean = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double objective = 0.0;   // mean final objective over repeats
  double iterations = 0.0;  // mean outer iterations
  std::vector<double> times;
  std::vector<double> objectives;
};

// Sorted row indices of a uniform draw of `count` features without
// replacement.
inline std::vector<Index> subsample_features(Index available, Index count, CounterRng& rng) {
  std::vector<Index> all(static_cast<std::size_t>(available));
  for (Index i = 0; i < available; ++i) all[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(
        i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(available - i))));
    std::swap(all[static_cast<std::size_t>(i)], all[j]);
  }
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

// Wall time of each algorithm on feature-subsampled copies of `dataset`.
// Rows are grouped by algorithm (in the order given) with d ascending; every
// repeat uses the same subsample for all algorithms.
inline std::vector<TimingRow> timing_sweep(const DataMatrix& dataset, std::vector<Index> dims,
                                           int k, SolverConfig config,
                                           const std::vector<Algorithm>& algos, int repeats,
                                           std::uint64_t seed = 0) {
  if (dims.empty() || algos.empty() || repeats < 1) {
    throw ConfigError("timing sweep needs dimensions, algorithms and repeats >= 1");
  }
  for (Index dim : dims) {
    if (dim < 1 || dim > dataset.dim()) {
      throw ConfigError("requested dimension " + std::to_string(dim) + " exceeds the " +
                        std::to_string(dataset.dim()) + " available features");
    }
  }
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  config.k = k;

  const CounterRng root(seed, 0x74696d65ULL);
  std::vector<TimingRow> rows;
  for (Algorithm algo : algos) {
    for (Index dim : dims) {
      TimingRow row;
      row.algo = algo;
      row.dim = dim;
      rows.push_back(row);
    }
  }
  for (std::size_t di = 0; di < dims.size(); ++di) {
    const Index dim = dims[di];
    for (int r = 0; r < repeats; ++r) {
      CounterRng rng = root.substream(static_cast<std::uint64_t>(dim) * 1000003ULL +
                                      static_cast<std::uint64_t>(r));
      Matrix sub;
      if (dim == dataset.dim()) {
        sub = dataset.values();
      } else {
        const std::vector<Index> rows_idx = subsample_features(dataset.dim(), dim, rng);
        sub.resize(dim, dataset.size());
        for (std::size_t i = 0; i < rows_idx.size(); ++i) {
          sub.row(static_cast<Index>(i)) = dataset.values().row(rows_idx[i]);
        }
      }
      const DataMatrix data(std::move(sub));
      for (std::size_t a = 0; a < algos.size(); ++a) {
        const auto start = std::chrono::steady_clock::now();
        const FitResult result = fit(data, config, algos[a]);
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        TimingRow& row = rows[a * dims.size() + di];
        row.times.push_back(elapsed);
        row.objectives.push_back(result.trace.back().objective);
        row.iterations += static_cast<double>(result.iterations) / repeats;
      }
    }
  }
  for (TimingRow& row : rows) {
    const Summary s = summarize(row.times);
    row.mean = s.mean;
    row.q1 = s.q1;
    row.q3 = s.q3;
    row.objective = summarize(row.objectives).mean;
  }
  return rows;
}

}  // namespace ewca
