#pragma once

// Entropic optimal transport: cost matrices and Sinkhorn-Knopp scaling in the
// standard domain (u, v scalings of K = exp(-C/eps)) and in the log domain
// (log-sum-exp updates of log u, log v).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ewca/types.hpp"

namespace ewca {

class CostMatrix {
 public:
  explicit CostMatrix(Matrix values) : values_(std::move(values)) {
    if (!values_.allFinite()) {
      throw NonFiniteError("cost matrix contains NaN or Inf entries");
    }
    if (values_.size() > 0 && values_.minCoeff() < 0.0) {
      throw ConfigError("cost matrix has negative entries");
    }
  }

  const Matrix& values() const { return values_; }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

 private:
  Matrix values_;
};

// entry (i, j) = |x_i - y_j|^2
inline CostMatrix squared_l2_cost(const DataMatrix& x_set, const DataMatrix& y_set) {
  if (x_set.dim() != y_set.dim()) {
    throw DimensionError("cost: point sets have different dimensions (" +
                         std::to_string(x_set.dim()) + " vs " + std::to_string(y_set.dim()) + ")");
  }
  const Matrix& x = x_set.values();
  const Matrix& y = y_set.values();
  Matrix cost(x.cols(), y.cols());
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < x.cols(); ++i) {
      cost(i, j) = (x.col(i) - y.col(j)).squaredNorm();
    }
  }
  return CostMatrix(std::move(cost));
}

// entry (i, j) = |x_i - U U^T x_j|^2.
//
// Uses the orthogonal split x_i - UU^T x_j = (x_i - UU^T x_i) + U(z_i - z_j)
// with z = U^T X, so the cost is r_i + |z_i - z_j|^2 and no d x d matrix is
// formed.
inline CostMatrix projection_cost(const DataMatrix& data, const StiefelBasis& basis) {
  if (data.dim() != basis.dim()) {
    throw DimensionError("projection cost: basis has " + std::to_string(basis.dim()) +
                         " rows but data has " + std::to_string(data.dim()) + " features");
  }
  const Matrix& x = data.values();
  const Matrix& u = basis.values();
  const Matrix z = u.transpose() * x;
  const Matrix residual = x - u * z;
  const Vector r = residual.colwise().squaredNorm().transpose();
  const Index n = x.cols();
  Matrix cost(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      cost(i, j) = r(i) + (z.col(i) - z.col(j)).squaredNorm();
    }
  }
  return CostMatrix(std::move(cost));
}

// Mean of |x_i - x_j|^2 over all ordered pairs, 2 (mean |x|^2 - |mean x|^2).
inline double mean_pairwise_cost(const DataMatrix& data) {
  const Matrix& x = data.values();
  const double mean_sq = x.colwise().squaredNorm().mean();
  const double sq_mean = x.rowwise().mean().squaredNorm();
  return std::max(0.0, 2.0 * (mean_sq - sq_mean));
}

inline double median_cost(const CostMatrix& cost) {
  std::vector<double> entries(cost.values().data(), cost.values().data() + cost.values().size());
  if (entries.empty()) return 0.0;
  const auto mid = entries.begin() + static_cast<std::ptrdiff_t>(entries.size() / 2);
  std::nth_element(entries.begin(), mid, entries.end());
  double med = *mid;
  if (entries.size() % 2 == 0) {
    med = 0.5 * (med + *std::max_element(entries.begin(), mid));
  }
  return med;
}

enum class SinkhornMode {
  Auto,  // log domain when eps < 1e-3 * median(cost), or on underflow
  Standard,
  Log,
};

// Scalings are stored as logarithms in both modes; the plan is
// exp(log_u_i + log_v_j - C_ij / eps).
struct SinkhornState {
  Vector log_u;
  Vector log_v;
  int iterations = 0;
  double marginal_error = 0.0;
  bool converged = false;
  bool log_domain = false;
  // max row-marginal violation after each iteration (when requested)
  std::vector<double> error_trace;
};

struct SinkhornOptions {
  double tol = 1e-9;
  int max_iter = 10000;
  SinkhornMode mode = SinkhornMode::Auto;
  bool record_trace = false;
  // Initial scalings, typically the state of a previous solve.
  const SinkhornState* warm_start = nullptr;
};

struct SinkhornResult {
  TransportPlan plan;
  SinkhornState state;
};

inline constexpr double kLogDomainRatio = 1e-3;

namespace detail {

inline void check_sinkhorn_inputs(const CostMatrix& cost, const Histogram& a, const Histogram& b,
                                  double epsilon, const SinkhornOptions& options) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("Sinkhorn requires a finite epsilon > 0");
  }
  if (a.size() != cost.rows() || b.size() != cost.cols()) {
    throw DimensionError("histogram lengths do not match the cost matrix");
  }
  if ((a.weights().array() <= 0.0).any() || (b.weights().array() <= 0.0).any()) {
    throw ConfigError("histograms with zero entries are not supported");
  }
  if (!(options.tol > 0.0) || options.max_iter < 1) {
    throw ConfigError("Sinkhorn tolerance and iteration cap must be positive");
  }
}

inline bool usable_warm_start(const SinkhornOptions& options, Index n, Index m) {
  return options.warm_start != nullptr && options.warm_start->log_u.size() == n &&
         options.warm_start->log_v.size() == m && options.warm_start->log_u.allFinite() &&
         options.warm_start->log_v.allFinite();
}

inline TransportPlan assemble_plan(const Matrix& log_kernel, const Vector& log_u,
                                   const Vector& log_v, const Histogram& a, const Histogram& b) {
  Matrix p(log_kernel.rows(), log_kernel.cols());
  for (Index j = 0; j < p.cols(); ++j) {
    for (Index i = 0; i < p.rows(); ++i) {
      p(i, j) = std::exp(log_u(i) + log_v(j) + log_kernel(i, j));
    }
  }
  return TransportPlan(std::move(p), a, b);
}

inline SinkhornResult sinkhorn_standard(const CostMatrix& cost, const Histogram& a,
                                        const Histogram& b, double epsilon,
                                        const SinkhornOptions& options) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  const Vector& wa = a.weights();
  const Vector& wb = b.weights();
  const Matrix log_kernel = -cost.values() / epsilon;
  // std::exp rather than Eigen's packet exp, which returns tiny nonzero
  // values instead of 0 far below the underflow threshold.
  const Matrix kernel = log_kernel.unaryExpr([](double v) { return std::exp(v); });

  Vector u = Vector::Ones(n);
  Vector v = Vector::Ones(m);
  if (usable_warm_start(options, n, m)) {
    const Vector wu = options.warm_start->log_u.unaryExpr([](double v) { return std::exp(v); });
    const Vector wv = options.warm_start->log_v.unaryExpr([](double v) { return std::exp(v); });
    if (wu.allFinite() && wv.allFinite() && (wu.array() > 0.0).all() &&
        (wv.array() > 0.0).all()) {
      u = wu;
      v = wv;
    }
  }

  auto underflow = [](const Vector& s) {
    return !s.allFinite() || (s.array() < std::numeric_limits<double>::min()).any();
  };

  SinkhornState state;
  Vector best_u = u;
  Vector best_v = v;
  double best_error = std::numeric_limits<double>::infinity();

  Vector kv = kernel * v;
  for (int it = 1; it <= options.max_iter; ++it) {
    if (underflow(kv)) {
      throw NumericalUnderflow("Gibbs kernel underflow in standard-domain Sinkhorn (eps=" +
                               std::to_string(epsilon) + ")");
    }
    u = wa.cwiseQuotient(kv);
    const Vector ktu = kernel.transpose() * u;
    if (underflow(ktu) || underflow(u)) {
      throw NumericalUnderflow("Gibbs kernel underflow in standard-domain Sinkhorn (eps=" +
                               std::to_string(epsilon) + ")");
    }
    v = wb.cwiseQuotient(ktu);
    if (underflow(v)) {
      throw NumericalUnderflow("scaling overflow in standard-domain Sinkhorn");
    }
    kv = kernel * v;
    const double err = (u.cwiseProduct(kv) - wa).cwiseAbs().maxCoeff();
    state.iterations = it;
    if (options.record_trace) state.error_trace.push_back(err);
    if (err < best_error) {
      best_error = err;
      best_u = u;
      best_v = v;
    }
    if (err <= options.tol) {
      state.converged = true;
      break;
    }
  }

  state.log_u = best_u.array().log().matrix();
  state.log_v = best_v.array().log().matrix();
  state.log_domain = false;
  TransportPlan plan = assemble_plan(log_kernel, state.log_u, state.log_v, a, b);
  state.marginal_error = check_plan(plan).max_violation();
  return {std::move(plan), std::move(state)};
}

inline SinkhornResult sinkhorn_log(const CostMatrix& cost, const Histogram& a, const Histogram& b,
                                   double epsilon, const SinkhornOptions& options) {
  const Index n = cost.rows();
  const Index m = cost.cols();
  const Vector log_a = a.weights().array().log().matrix();
  const Vector log_b = b.weights().array().log().matrix();
  // log_kernel is read column-wise and log_kernel_t row-wise, both contiguous.
  const Matrix log_kernel = -cost.values() / epsilon;
  const Matrix log_kernel_t = log_kernel.transpose();

  Vector log_u = Vector::Zero(n);
  Vector log_v = Vector::Zero(m);
  if (usable_warm_start(options, n, m)) {
    log_u = options.warm_start->log_u;
    log_v = options.warm_start->log_v;
  }

  // lse_row(i) = log sum_j exp(log_kernel(i, j) + log_v(j))
  auto row_lse = [&](const Vector& lv, Vector& out) {
    for (Index i = 0; i < n; ++i) {
      const auto col = log_kernel_t.col(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < m; ++j) mx = std::max(mx, col(j) + lv(j));
      double s = 0.0;
      for (Index j = 0; j < m; ++j) s += std::exp(col(j) + lv(j) - mx);
      out(i) = mx + std::log(s);
    }
  };
  auto col_lse = [&](const Vector& lu, Vector& out) {
    for (Index j = 0; j < m; ++j) {
      const auto col = log_kernel.col(j);
      double mx = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n; ++i) mx = std::max(mx, col(i) + lu(i));
      double s = 0.0;
      for (Index i = 0; i < n; ++i) s += std::exp(col(i) + lu(i) - mx);
      out(j) = mx + std::log(s);
    }
  };

  SinkhornState state;
  state.log_domain = true;
  Vector best_u = log_u;
  Vector best_v = log_v;
  double best_error = std::numeric_limits<double>::infinity();

  Vector lse_r(n);
  Vector lse_c(m);
  row_lse(log_v, lse_r);
  for (int it = 1; it <= options.max_iter; ++it) {
    log_u = log_a - lse_r;
    col_lse(log_u, lse_c);
    log_v = log_b - lse_c;
    row_lse(log_v, lse_r);
    double err = 0.0;
    for (Index i = 0; i < n; ++i) {
      err = std::max(err, std::abs(std::exp(log_u(i) + lse_r(i)) - a.weights()(i)));
    }
    state.iterations = it;
    if (options.record_trace) state.error_trace.push_back(err);
    if (err < best_error) {
      best_error = err;
      best_u = log_u;
      best_v = log_v;
    }
    if (err <= options.tol) {
      state.converged = true;
      break;
    }
  }

  state.log_u = best_u;
  state.log_v = best_v;
  TransportPlan plan = assemble_plan(log_kernel, state.log_u, state.log_v, a, b);
  state.marginal_error = check_plan(plan).max_violation();
  return {std::move(plan), std::move(state)};
}

}  // namespace detail

// Solves min <C, P> - eps H(P) over couplings of (a, b).
//
// A run that hits max_iter before the marginal violation drops below tol
// returns its best iterate with state.converged == false. SinkhornMode::Standard
// throws NumericalUnderflow when the Gibbs kernel cannot be scaled; Auto
// catches that and retries in the log domain.
inline SinkhornResult sinkhorn_knopp(const CostMatrix& cost, const Histogram& a,
                                     const Histogram& b, double epsilon,
                                     const SinkhornOptions& options = {}) {
  detail::check_sinkhorn_inputs(cost, a, b, epsilon, options);
  switch (options.mode) {
    case SinkhornMode::Standard:
      return detail::sinkhorn_standard(cost, a, b, epsilon, options);
    case SinkhornMode::Log:
      return detail::sinkhorn_log(cost, a, b, epsilon, options);
    case SinkhornMode::Auto:
      break;
  }
  if (epsilon < kLogDomainRatio * median_cost(cost)) {
    return detail::sinkhorn_log(cost, a, b, epsilon, options);
  }
  try {
    return detail::sinkhorn_standard(cost, a, b, epsilon, options);
  } catch (const NumericalUnderflow&) {
    return detail::sinkhorn_log(cost, a, b, epsilon, options);
  }
}

namespace detail {

inline double entropy(const Matrix& p, const Vector& a, const Vector& b) {
  double h = 0.0;
  for (Index j = 0; j < p.cols(); ++j) {
    for (Index i = 0; i < p.rows(); ++i) {
      const double pij = p(i, j);
      if (pij > 0.0) h -= pij * std::log(pij / (a(i) * b(j)));
    }
  }
  return h;
}

}  // namespace detail

// H(P) = -sum_ij P_ij log(P_ij / (a_i b_j)), with 0 log 0 = 0.
inline double plan_entropy(const TransportPlan& plan) {
  return detail::entropy(plan.values(), plan.row_marginal().weights(),
                         plan.col_marginal().weights());
}

inline double transport_cost(const TransportPlan& plan, const CostMatrix& cost) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
    throw DimensionError("plan and cost shapes differ");
  }
  return plan.values().cwiseProduct(cost.values()).sum();
}

// <C, P> - eps H(P), the entropy taken relative to a b^T.
inline double entropic_ot_value(const TransportPlan& plan, const CostMatrix& cost,
                                const Histogram& a, const Histogram& b, double epsilon) {
  if (a.size() != plan.rows() || b.size() != plan.cols()) {
    throw DimensionError("histogram lengths do not match the plan");
  }
  return transport_cost(plan, cost) -
         epsilon * detail::entropy(plan.values(), a.weights(), b.weights());
}

}  // namespace ewca
