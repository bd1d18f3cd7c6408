#pragma once

// Shared data model: sample matrices, orthonormal bases, histograms,
// transport plans and solver configuration.
//
// Samples are stored column-wise: a DataMatrix with d features and n samples
// is a d x n matrix, so X = [x_1, ..., x_n].

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ewca/errors.hpp"

namespace ewca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kOrthTol = 1e-10;
inline constexpr double kMarginalTol = 1e-9;
inline constexpr double kHistogramSumTol = 1e-12;

// Frobenius norm of U^T U - I.
inline double orthonormality_error(const Matrix& u) {
  const Index k = u.cols();
  return (u.transpose() * u - Matrix::Identity(k, k)).norm();
}

class DataMatrix {
 public:
  explicit DataMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
      throw DimensionError("data matrix must have at least one feature and one sample");
    }
    if (!values_.allFinite()) {
      throw NonFiniteError("data matrix contains NaN or Inf entries");
    }
  }

  const Matrix& values() const { return values_; }
  Index dim() const { return values_.rows(); }
  Index size() const { return values_.cols(); }

 private:
  Matrix values_;
};

// A d x k matrix with orthonormal columns.
class StiefelBasis {
 public:
  explicit StiefelBasis(Matrix values, double tol = kOrthTol) : values_(std::move(values)) {
    if (values_.cols() < 1 || values_.cols() > values_.rows()) {
      throw DimensionError("Stiefel basis needs 1 <= k <= d, got d=" +
                           std::to_string(values_.rows()) + " k=" +
                           std::to_string(values_.cols()));
    }
    if (!values_.allFinite()) {
      throw NonFiniteError("basis contains NaN or Inf entries");
    }
    const double err = orthonormality_error(values_);
    if (!(err <= tol)) {
      throw DimensionError("basis is not orthonormal: |U^T U - I|_F = " + std::to_string(err));
    }
  }

  const Matrix& values() const { return values_; }
  Index dim() const { return values_.rows(); }
  Index rank() const { return values_.cols(); }

 private:
  Matrix values_;
};

class Histogram {
 public:
  explicit Histogram(Vector weights) : weights_(std::move(weights)) {
    if (weights_.size() < 1) {
      throw DimensionError("histogram must have at least one bin");
    }
    if (!weights_.allFinite() || (weights_.array() < 0.0).any()) {
      throw ConfigError("histogram weights must be finite and nonnegative");
    }
    const double total = weights_.sum();
    if (std::abs(total - 1.0) > kHistogramSumTol) {
      throw ConfigError("histogram weights must sum to 1, got " + std::to_string(total));
    }
  }

  static Histogram uniform(Index n) {
    return Histogram(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  const Vector& weights() const { return weights_; }
  Index size() const { return weights_.size(); }

 private:
  Vector weights_;
};

// Coupling between two histograms. Construction checks shape, finiteness and
// nonnegativity only; marginal feasibility is reported by check_plan() so that
// non-converged solver iterates can still be represented.
class TransportPlan {
 public:
  TransportPlan(Matrix values, Histogram row_marginal, Histogram col_marginal)
      : values_(std::move(values)),
        row_marginal_(std::move(row_marginal)),
        col_marginal_(std::move(col_marginal)) {
    if (values_.rows() != row_marginal_.size() || values_.cols() != col_marginal_.size()) {
      throw DimensionError("plan shape does not match its marginals");
    }
    if (!values_.allFinite()) {
      throw NonFiniteError("transport plan contains NaN or Inf entries");
    }
    if ((values_.array() < 0.0).any()) {
      throw ConfigError("transport plan has negative entries");
    }
  }

  const Matrix& values() const { return values_; }
  const Histogram& row_marginal() const { return row_marginal_; }
  const Histogram& col_marginal() const { return col_marginal_; }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

 private:
  Matrix values_;
  Histogram row_marginal_;
  Histogram col_marginal_;
};

struct PlanCheck {
  double max_row_violation = 0.0;
  double max_col_violation = 0.0;
  double min_entry = 0.0;

  double max_violation() const { return std::max(max_row_violation, max_col_violation); }
};

inline PlanCheck check_plan(const TransportPlan& plan) {
  PlanCheck check;
  const Matrix& p = plan.values();
  check.max_row_violation =
      (p.rowwise().sum() - plan.row_marginal().weights()).cwiseAbs().maxCoeff();
  check.max_col_violation =
      (p.colwise().sum().transpose() - plan.col_marginal().weights()).cwiseAbs().maxCoeff();
  check.min_entry = p.minCoeff();
  return check;
}

inline bool is_valid_plan(const TransportPlan& plan, double tol = kMarginalTol) {
  const PlanCheck check = check_plan(plan);
  return check.min_entry >= 0.0 && check.max_violation() <= tol;
}

enum class LambdaMinStrategy {
  Auto,  // Exact for n <= 2000, GershgorinBound above
  Exact,
  GershgorinBound,
};

struct SolverConfig {
  double epsilon = 1.0;
  int k = 2;
  double sinkhorn_tol = 1e-9;
  int sinkhorn_max_iter = 10000;
  double outer_tol = 1e-7;
  int outer_max_iter = 100;
  int mm_inner_iter = 20;
  bool center_data = true;
  LambdaMinStrategy lambda_min_strategy = LambdaMinStrategy::Auto;
  // Forces log-domain Sinkhorn. When false the domain is chosen per call.
  bool log_domain = false;
  // Drives the random perturbation used to recover from rank-deficient
  // orthonormalization in the MM solver.
  std::uint64_t seed = 0;
};

// Per outer iteration record. objective = transport_cost - epsilon * entropy.
struct TraceEntry {
  double objective = 0.0;
  double transport_cost = 0.0;
  double entropy = 0.0;
  int sinkhorn_iterations = 0;
  double marginal_error = 0.0;
};

struct FitResult {
  StiefelBasis basis;
  TransportPlan plan;
  // trace[0] is evaluated at the initial basis; trace[t] after the t-th
  // basis update.
  std::vector<TraceEntry> trace;
  int iterations = 0;
  double wall_time = 0.0;
  bool converged = false;
  std::vector<std::string> warnings;

  std::vector<double> objective_trace() const {
    std::vector<double> out;
    out.reserve(trace.size());
    for (const auto& entry : trace) out.push_back(entry.objective);
    return out;
  }
};

// Checks that (values, config) describe a solvable problem. epsilon == 0 is
// accepted: it selects the PCA route.
inline void validate(const Matrix& values, const SolverConfig& config) {
  if (!values.allFinite()) {
    throw NonFiniteError("data matrix contains NaN or Inf entries");
  }
  const Index d = values.rows();
  const Index n = values.cols();
  if (d < 1 || n < 1) {
    throw DimensionError("data matrix is empty");
  }
  if (config.k < 1 || config.k >= d) {
    throw DimensionError("need 1 <= k < d, got k=" + std::to_string(config.k) +
                         " d=" + std::to_string(d));
  }
  if (!std::isfinite(config.epsilon) || config.epsilon < 0.0) {
    throw ConfigError("epsilon must be finite and nonnegative");
  }
  if (!(config.sinkhorn_tol > 0.0) || !(config.outer_tol > 0.0)) {
    throw ConfigError("tolerances must be positive");
  }
  if (config.sinkhorn_max_iter < 1 || config.outer_max_iter < 1 || config.mm_inner_iter < 1) {
    throw ConfigError("iteration caps must be positive");
  }
}

inline void validate(const DataMatrix& data, const SolverConfig& config) {
  validate(data.values(), config);
}

inline DataMatrix center(const DataMatrix& data) {
  const Vector mean = data.values().rowwise().mean();
  return DataMatrix(data.values().colwise() - mean);
}

}  // namespace ewca
