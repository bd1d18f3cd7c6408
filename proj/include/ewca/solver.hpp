#pragma once

// Entropic Wasserstein component analysis solvers.
//
// Both solvers minimize, jointly over couplings P with uniform marginals and
// bases U in St(d, k),
//
//   F(U, P) = sum_ij |x_i - U U^T x_j|^2 P_ij - eps H(P).
//
// They share the P-step (Sinkhorn on the projection cost) and differ in the
// U-step:
//   * fit_bcd maximizes tr(U^T M U) exactly through the top-k eigenvectors of
//     M = X (2 sym(P) - I/n) X^T, a d x d eigenproblem.
//   * fit_mm minimizes the equivalent tr(U^T Q U), Q negative semidefinite,
//     by repeated U <- qf(-Q U); products Q U are formed from n x k and d x k
//     intermediates only.

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ewca/random.hpp"
#include "ewca/sinkhorn.hpp"
#include "ewca/subspace.hpp"
#include "ewca/types.hpp"

namespace ewca {

inline constexpr Index kExactLambdaMinMaxN = 2000;

enum class Algorithm { Bcd, Mm };

inline std::string to_string(Algorithm algo) { return algo == Algorithm::Bcd ? "bcd" : "mm"; }

inline LambdaMinStrategy resolve_strategy(LambdaMinStrategy strategy, Index n) {
  if (strategy != LambdaMinStrategy::Auto) return strategy;
  return n <= kExactLambdaMinMaxN ? LambdaMinStrategy::Exact : LambdaMinStrategy::GershgorinBound;
}

// sym(P) V = (P V + P^T V) / 2
inline Matrix sym_plan_apply(const TransportPlan& plan, const Matrix& v) {
  return 0.5 * (plan.values() * v + plan.values().transpose() * v);
}

// Sigma V = (1/n) X (X^T V)
inline Matrix apply_sigma(const DataMatrix& data, const Matrix& v) {
  const Matrix& x = data.values();
  return (x * (x.transpose() * v)) / static_cast<double>(x.cols());
}

inline void check_plan_matches(const DataMatrix& data, const TransportPlan& plan) {
  if (plan.rows() != data.size() || plan.cols() != data.size()) {
    throw DimensionError("plan is " + std::to_string(plan.rows()) + "x" +
                         std::to_string(plan.cols()) + " but data has " +
                         std::to_string(data.size()) + " samples");
  }
}

// M = X (2 sym(P) - I/n) X^T, symmetrized.
inline Matrix build_m(const DataMatrix& data, const TransportPlan& plan) {
  check_plan_matches(data, plan);
  const Matrix& x = data.values();
  const Index n = x.cols();
  Matrix inner = plan.values() + plan.values().transpose();
  inner.diagonal().array() -= 1.0 / static_cast<double>(n);
  const Matrix m = (x * inner) * x.transpose();
  return 0.5 * (m + m.transpose());
}

// Constants of the majorization matrix
//   Q = alpha (Sigma - [alpha > 0] lambda_max I) - 2 X (sym(P) - lambda_min I) X^T
// with alpha = 1 - 2 n lambda_min.
struct MmContext {
  double lambda_max_sigma = 0.0;
  double lambda_min_sym_plan = 0.0;
  double alpha = 0.0;
  LambdaMinStrategy strategy = LambdaMinStrategy::Exact;
};

inline MmContext make_mm_context(const TransportPlan& plan, double lambda_max_sigma,
                                 LambdaMinStrategy strategy) {
  const Index n = plan.rows();
  if (plan.cols() != n) {
    throw DimensionError("MM context needs a square plan");
  }
  MmContext ctx;
  ctx.lambda_max_sigma = lambda_max_sigma;
  ctx.strategy = resolve_strategy(strategy, n);
  if (ctx.strategy == LambdaMinStrategy::GershgorinBound) {
    // every row of sym(P) sums to 1/n with nonnegative entries
    ctx.lambda_min_sym_plan = -1.0 / static_cast<double>(n);
  } else {
    const Matrix sym = 0.5 * (plan.values() + plan.values().transpose());
    ctx.lambda_min_sym_plan = smallest_eigenvalue(sym);
  }
  ctx.alpha = 1.0 - 2.0 * static_cast<double>(n) * ctx.lambda_min_sym_plan;
  return ctx;
}

// Q U without forming any d x d matrix.
inline Matrix apply_p(const MmContext& ctx, const DataMatrix& data, const TransportPlan& plan,
                      const Matrix& u) {
  check_plan_matches(data, plan);
  if (u.rows() != data.dim()) {
    throw DimensionError("apply_p: U has " + std::to_string(u.rows()) + " rows, data has " +
                         std::to_string(data.dim()) + " features");
  }
  const Matrix& x = data.values();
  const double n = static_cast<double>(x.cols());
  const Matrix xtu = x.transpose() * u;
  const Matrix shifted = sym_plan_apply(plan, xtu) - ctx.lambda_min_sym_plan * xtu;
  const Matrix inner = (ctx.alpha / n) * xtu - 2.0 * shifted;
  Matrix out = x * inner;
  if (ctx.alpha > 0.0) {
    out -= (ctx.alpha * ctx.lambda_max_sigma) * u;
  }
  return out;
}

inline Matrix apply_p(const MmContext& ctx, const DataMatrix& data, const TransportPlan& plan,
                      const StiefelBasis& u) {
  return apply_p(ctx, data, plan, u.values());
}

// tr(U^T Q U)
inline double surrogate_value(const MmContext& ctx, const DataMatrix& data,
                              const TransportPlan& plan, const Matrix& u) {
  return (u.transpose() * apply_p(ctx, data, plan, u)).trace();
}

// Linear majorizer of tr(U^T Q U) at the expansion point U_l:
//   2 tr(U^T Q U_l) - tr(U_l^T Q U_l).
inline double majorizer_value(const MmContext& ctx, const DataMatrix& data,
                              const TransportPlan& plan, const Matrix& u,
                              const Matrix& expansion_point) {
  const Matrix qul = apply_p(ctx, data, plan, expansion_point);
  return 2.0 * (u.transpose() * qul).trace() - (expansion_point.transpose() * qul).trace();
}

inline double ewca_objective(const DataMatrix& data, const StiefelBasis& basis,
                             const TransportPlan& plan, double epsilon) {
  check_plan_matches(data, plan);
  const CostMatrix cost = projection_cost(data, basis);
  const Histogram uniform = Histogram::uniform(data.size());
  return entropic_ot_value(plan, cost, uniform, uniform, epsilon);
}

// qf with recovery: a rank-deficient input is perturbed by a random matrix of
// relative size 1e-12 and orthonormalized again.
inline StiefelBasis qf_with_recovery(Matrix a, CounterRng& rng,
                                     std::vector<std::string>* warnings = nullptr) {
  constexpr int kAttempts = 5;
  for (int attempt = 0;; ++attempt) {
    try {
      return qf(a);
    } catch (const RankDeficient&) {
      if (attempt + 1 >= kAttempts) throw;
      Matrix noise(a.rows(), a.cols());
      for (Index j = 0; j < noise.cols(); ++j) {
        for (Index i = 0; i < noise.rows(); ++i) noise(i, j) = rng.normal();
      }
      const double scale = a.norm() > 0.0 ? a.norm() : 1.0;
      a += (1e-12 * scale / noise.norm()) * noise;
      if (warnings != nullptr) {
        warnings->push_back("rank-deficient MM step: re-orthonormalized after a 1e-12 perturbation");
      }
    }
  }
}

struct MmStepResult {
  StiefelBasis basis;
  // tr(U_l^T Q U_l) for l = 0..iterations when requested
  std::vector<double> surrogate_trace;
};

// Runs `iterations` MM updates U <- qf(-Q U) from `start`.
inline MmStepResult mm_u_step(const MmContext& ctx, const DataMatrix& data,
                              const TransportPlan& plan, const StiefelBasis& start,
                              int iterations, CounterRng& rng,
                              std::vector<std::string>* warnings = nullptr,
                              bool record_trace = false) {
  Matrix u = start.values();
  MmStepResult out{start, {}};
  for (int l = 0; l < iterations; ++l) {
    const Matrix qu = apply_p(ctx, data, plan, u);
    if (record_trace) out.surrogate_trace.push_back((u.transpose() * qu).trace());
    u = qf_with_recovery(-qu, rng, warnings).values();
  }
  if (record_trace) out.surrogate_trace.push_back(surrogate_value(ctx, data, plan, u));
  out.basis = StiefelBasis(std::move(u));
  return out;
}

// U-step of the block coordinate descent: top-k eigenvectors of M, with ties
// at position k resolved toward the previous basis.
inline TopKSelection bcd_u_step(const DataMatrix& data, const TransportPlan& plan,
                                const StiefelBasis& previous, Index k) {
  const Matrix m = build_m(data, plan);
  return select_top_k(m, k, &previous.values());
}

namespace detail {

struct OuterState {
  TransportPlan plan;
  SinkhornState sinkhorn;
  TraceEntry entry;
};

inline OuterState plan_step(const DataMatrix& x, const StiefelBasis& u, const SolverConfig& config,
                            const SinkhornState* warm) {
  const CostMatrix cost = projection_cost(x, u);
  const Histogram uniform = Histogram::uniform(x.size());
  SinkhornOptions options;
  options.tol = config.sinkhorn_tol;
  options.max_iter = config.sinkhorn_max_iter;
  options.mode = config.log_domain ? SinkhornMode::Log : SinkhornMode::Auto;
  options.warm_start = warm;
  SinkhornResult sk = sinkhorn_knopp(cost, uniform, uniform, config.epsilon, options);
  TraceEntry entry;
  entry.transport_cost = transport_cost(sk.plan, cost);
  entry.entropy = plan_entropy(sk.plan);
  entry.objective = entry.transport_cost - config.epsilon * entry.entropy;
  entry.sinkhorn_iterations = sk.state.iterations;
  entry.marginal_error = sk.state.marginal_error;
  return {std::move(sk.plan), std::move(sk.state), entry};
}

// U-step signature: (centered data, plan, current basis, lambda_max, warnings) -> basis
using UStep = std::function<StiefelBasis(const DataMatrix&, const TransportPlan&,
                                         const StiefelBasis&, double, std::vector<std::string>&)>;

inline FitResult run_alternating(const DataMatrix& data, const SolverConfig& config,
                                 const std::optional<StiefelBasis>& init, const UStep& u_step) {
  validate(data, config);
  if (!(config.epsilon > 0.0)) {
    throw ConfigError("EWCA solvers need epsilon > 0; epsilon = 0 is the PCA route");
  }
  if (data.size() < 2) {
    throw DimensionError("EWCA solvers need at least two samples");
  }
  const auto start = std::chrono::steady_clock::now();
  const DataMatrix x = config.center_data ? center(data) : data;
  const PcaResult init_pca = pca(x, config.k, false);
  if (init && (init->dim() != x.dim() || init->rank() != config.k)) {
    throw DimensionError("initial basis does not match (d, k)");
  }
  StiefelBasis u = init ? *init : init_pca.basis;
  const double lambda_max = init_pca.lambda_max;

  std::vector<std::string> warnings;
  std::vector<TraceEntry> trace;
  OuterState state = plan_step(x, u, config, nullptr);
  trace.push_back(state.entry);
  if (!state.sinkhorn.converged) {
    warnings.push_back("Sinkhorn did not converge at outer iteration 0");
  }

  bool converged = false;
  int iterations = 0;
  for (int t = 1; t <= config.outer_max_iter; ++t) {
    StiefelBasis next = u_step(x, state.plan, u, lambda_max, warnings);
    OuterState next_state = plan_step(x, next, config, &state.sinkhorn);
    if (!next_state.sinkhorn.converged) {
      warnings.push_back("Sinkhorn did not converge at outer iteration " + std::to_string(t));
    }
    const double prev = state.entry.objective;
    const double curr = next_state.entry.objective;
    u = std::move(next);
    state = std::move(next_state);
    trace.push_back(state.entry);
    iterations = t;
    const double denom = std::max(std::abs(prev), std::numeric_limits<double>::min());
    if (std::abs(curr - prev) <= config.outer_tol * denom) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    warnings.push_back("outer loop reached outer_max_iter without meeting outer_tol");
  }

  FitResult result{std::move(u), std::move(state.plan), std::move(trace), iterations, 0.0,
                   converged, std::move(warnings)};
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace detail

// Block coordinate descent: Sinkhorn P-step, exact eigenvector U-step.
inline FitResult fit_bcd(const DataMatrix& data, const SolverConfig& config,
                         const std::optional<StiefelBasis>& init = std::nullopt) {
  const Index k = config.k;
  return detail::run_alternating(
      data, config, init,
      [k](const DataMatrix& x, const TransportPlan& plan, const StiefelBasis& u, double,
          std::vector<std::string>& warnings) {
        TopKSelection sel = bcd_u_step(x, plan, u, k);
        if (sel.degenerate) {
          warnings.push_back("eigengap below tolerance at position k in BCD U-step");
        }
        return std::move(sel.basis);
      });
}

// Block majorization-minimization: Sinkhorn P-step, mm_inner_iter updates
// U <- qf(-Q U) per outer iteration.
inline FitResult fit_mm(const DataMatrix& data, const SolverConfig& config,
                        const std::optional<StiefelBasis>& init = std::nullopt) {
  auto rng = std::make_shared<CounterRng>(config.seed, 0x6d6d);
  const SolverConfig cfg = config;
  return detail::run_alternating(
      data, config, init,
      [cfg, rng](const DataMatrix& x, const TransportPlan& plan, const StiefelBasis& u,
                 double lambda_max, std::vector<std::string>& warnings) {
        const MmContext ctx = make_mm_context(plan, lambda_max, cfg.lambda_min_strategy);
        return mm_u_step(ctx, x, plan, u, cfg.mm_inner_iter, *rng, &warnings).basis;
      });
}

// PCA as the eps = 0 member of the family: the plan is I/n.
inline FitResult fit_pca(const DataMatrix& data, const SolverConfig& config) {
  validate(data, config);
  const auto start = std::chrono::steady_clock::now();
  const DataMatrix x = config.center_data ? center(data) : data;
  PcaResult res = pca(x, config.k, false);
  const Index n = x.size();
  const Histogram uniform = Histogram::uniform(n);
  TransportPlan plan(Matrix::Identity(n, n) / static_cast<double>(n), uniform, uniform);
  TraceEntry entry;
  entry.transport_cost = transport_cost(plan, projection_cost(x, res.basis));
  entry.entropy = plan_entropy(plan);
  entry.objective = entry.transport_cost;
  FitResult result{std::move(res.basis), std::move(plan), {entry}, 0, 0.0, true, {}};
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// Dispatches on epsilon: 0 runs PCA, otherwise the requested solver.
inline FitResult fit(const DataMatrix& data, const SolverConfig& config, Algorithm algo,
                     const std::optional<StiefelBasis>& init = std::nullopt) {
  validate(data, config);
  if (config.epsilon == 0.0) return fit_pca(data, config);
  return algo == Algorithm::Bcd ? fit_bcd(data, config, init) : fit_mm(data, config, init);
}

}  // namespace ewca
