#pragma once

// Eigen and orthonormalization primitives: top-k symmetric eigenvectors,
// QR and polar orthonormal factors, PCA, principal angles.
//
// Dense symmetric eigenproblems go through LAPACK dsyevr (Householder
// tridiagonalization + MRRR), which computes only the requested part of the
// spectrum but keeps the O(d^3) reduction.

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ewca/types.hpp"

namespace ewca {

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kEigengapTol = 1e-10;
inline constexpr double kRankTol = 1e-13;

// Each column is scaled so that its largest-magnitude entry is positive; ties
// on magnitude go to the lowest row index.
inline void normalize_signs(Matrix& v) {
  for (Index j = 0; j < v.cols(); ++j) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < v.rows(); ++i) {
      const double a = std::abs(v(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (v(best, j) < 0.0) v.col(j) *= -1.0;
  }
}

inline void check_symmetric(const Matrix& a, double tol = kSymmetryTol) {
  if (a.rows() != a.cols()) {
    throw NotSymmetric("matrix is not square");
  }
  if (a.size() == 0) return;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= tol * scale)) {
    throw NotSymmetric("matrix is not symmetric: max |A - A^T| = " + std::to_string(asym));
  }
}

// Eigenvalues descending, eigenvectors aligned column-wise.
struct SymmetricEigenResult {
  Vector eigenvalues;
  Matrix eigenvectors;
};

namespace detail {

// Eigenpairs with 1-based ascending indices il..iu, descending, from Eigen's
// own solver. Slow for large d; used only when LAPACK fails its self-test.
inline SymmetricEigenResult eigen_range_fallback(const Matrix& a, Index il, Index iu,
                                                 bool vectors) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(
      a, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error("symmetric eigensolver did not converge");
  }
  const Index count = iu - il + 1;
  SymmetricEigenResult out;
  out.eigenvalues = solver.eigenvalues().segment(il - 1, count).reverse();
  if (vectors) {
    out.eigenvectors = solver.eigenvectors().middleCols(il - 1, count).rowwise().reverse();
    normalize_signs(out.eigenvectors);
  }
  return out;
}

inline SymmetricEigenResult syevr_raw(const Matrix& a, lapack_int il, lapack_int iu,
                                      bool vectors) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Matrix work = a;
  const lapack_int count = iu - il + 1;
  Vector w(n);
  Matrix z(n, vectors ? count : 1);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(std::max<lapack_int>(1, count)));
  lapack_int found = 0;
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'I', 'L', n, work.data(), n, 0.0,
                     0.0, il, iu, 0.0, &found, w.data(), z.data(), n, support.data());
  if (info != 0 || found != count) {
    throw Error("dsyevr failed (info=" + std::to_string(info) + ")");
  }
  SymmetricEigenResult out;
  out.eigenvalues = w.head(count).reverse();
  if (vectors) {
    out.eigenvectors = z.rowwise().reverse();
    normalize_signs(out.eigenvectors);
  }
  return out;
}

// Some BLAS builds select kernels at load time that return wrong products on
// certain CPUs (OpenBLAS 0.3.20 on AVX-512 BF16 hardware, for one). Solve a
// fixed 256 x 256 problem once and check residual and orthogonality.
inline bool lapack_eigensolver_ok() {
  static const bool ok = [] {
    constexpr Index n = 256;
    Matrix a(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        a(i, j) = 1.0 / (1.0 + static_cast<double>(std::abs(i - j))) + std::sin(static_cast<double>(i * j));
      }
    }
    a = (0.5 * (a + a.transpose())).eval();
    try {
      const SymmetricEigenResult r = syevr_raw(a, 1, static_cast<lapack_int>(n), true);
      const Matrix& v = r.eigenvectors;
      const double resid = (a * v - v * r.eigenvalues.asDiagonal()).norm();
      return resid <= 1e-9 * a.norm() && orthonormality_error(v) <= 1e-9;
    } catch (const Error&) {
      return false;
    }
  }();
  return ok;
}

// Eigenpairs with 1-based ascending indices il..iu of a symmetric matrix,
// returned in descending order.
inline SymmetricEigenResult syevr_range(const Matrix& a, lapack_int il, lapack_int iu,
                                        bool vectors) {
  if (!lapack_eigensolver_ok()) return eigen_range_fallback(a, il, iu, vectors);
  return syevr_raw(a, il, iu, vectors);
}

}  // namespace detail

inline SymmetricEigenResult symmetric_eigen(const Matrix& sym) {
  check_symmetric(sym);
  const auto n = static_cast<lapack_int>(sym.rows());
  return detail::syevr_range(sym, 1, n, true);
}

// The `count` largest eigenpairs.
inline SymmetricEigenResult top_k_eigen(const Matrix& sym, Index count) {
  check_symmetric(sym);
  if (count < 1 || count > sym.rows()) {
    throw DimensionError("top_k_eigen: need 1 <= k <= d");
  }
  const auto n = static_cast<lapack_int>(sym.rows());
  return detail::syevr_range(sym, n - static_cast<lapack_int>(count) + 1, n, true);
}

inline double smallest_eigenvalue(const Matrix& sym) {
  check_symmetric(sym);
  return detail::syevr_range(sym, 1, 1, false).eigenvalues(0);
}

inline StiefelBasis top_k_eigvecs(const Matrix& sym, Index k) {
  return StiefelBasis(top_k_eigen(sym, k).eigenvectors);
}

// Relative threshold used for eigengap tests.
inline double eigengap_scale(const Vector& eigenvalues) {
  return std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
}

// Top-k eigenvectors of `sym`. When the gap between the k-th and (k+1)-th
// eigenvalues is below kEigengapTol (relative), the ambiguous part of the
// eigenspace is filled with the directions closest to `previous`.
struct TopKSelection {
  StiefelBasis basis;
  bool degenerate = false;
};

inline TopKSelection select_top_k(const Matrix& sym, Index k, const Matrix* previous = nullptr) {
  const Index d = sym.rows();
  const Index count = std::min<Index>(k + 1, d);
  SymmetricEigenResult top = top_k_eigen(sym, count);
  if (count == k) {
    return {StiefelBasis(top.eigenvectors), false};
  }
  const double tol = kEigengapTol * eigengap_scale(top.eigenvalues);
  if (top.eigenvalues(k - 1) - top.eigenvalues(k) >= tol) {
    return {StiefelBasis(top.eigenvectors.leftCols(k)), false};
  }
  if (previous == nullptr || previous->rows() != d) {
    return {StiefelBasis(top.eigenvectors.leftCols(k)), true};
  }

  const SymmetricEigenResult full = symmetric_eigen(sym);
  const Vector& lam = full.eigenvalues;
  Index lo = k - 1;
  while (lo > 0 && lam(lo - 1) - lam(lo) < tol) --lo;
  Index hi = k;
  while (hi < d && lam(hi - 1) - lam(hi) < tol) ++hi;
  const Matrix block = full.eigenvectors.middleCols(lo, hi - lo);
  const Index need = k - lo;
  Eigen::JacobiSVD<Matrix> svd(block.transpose() * (*previous), Eigen::ComputeThinU);
  Matrix chosen(d, k);
  chosen.leftCols(lo) = full.eigenvectors.leftCols(lo);
  chosen.rightCols(need) = block * svd.matrixU().leftCols(need);
  // re-orthonormalize against rounding in the rotation
  Eigen::HouseholderQR<Matrix> qr(chosen);
  Matrix q = qr.householderQ() * Matrix::Identity(d, k);
  normalize_signs(q);
  return {StiefelBasis(std::move(q)), true};
}

// Orthonormal factor of the thin QR decomposition, with the diagonal of R
// made nonnegative.
inline StiefelBasis qf(const Matrix& a) {
  const Index d = a.rows();
  const Index k = a.cols();
  if (k < 1 || k > d) {
    throw DimensionError("qf: need 1 <= k <= d");
  }
  if (!a.allFinite()) {
    throw NonFiniteError("qf: input contains NaN or Inf");
  }
  const double scale = a.norm();
  Eigen::HouseholderQR<Matrix> qr(a);
  const Vector r_diag = qr.matrixQR().diagonal();
  if (!(scale > 0.0) || (r_diag.cwiseAbs().array() <= kRankTol * scale).any()) {
    throw RankDeficient("qf: input does not have full column rank");
  }
  Matrix q = qr.householderQ() * Matrix::Identity(d, k);
  for (Index j = 0; j < k; ++j) {
    if (r_diag(j) < 0.0) q.col(j) *= -1.0;
  }
  return StiefelBasis(std::move(q));
}

// Orthonormal factor of the polar decomposition: pf(A) = W Z^T for the thin
// SVD A = W S Z^T.
inline StiefelBasis pf(const Matrix& a) {
  const Index d = a.rows();
  const Index k = a.cols();
  if (k < 1 || k > d) {
    throw DimensionError("pf: need 1 <= k <= d");
  }
  if (!a.allFinite()) {
    throw NonFiniteError("pf: input contains NaN or Inf");
  }
  Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (!(s(0) > 0.0) || s(k - 1) <= kRankTol * s(0)) {
    throw RankDeficient("pf: input does not have full column rank");
  }
  return StiefelBasis(svd.matrixU() * svd.matrixV().transpose());
}

struct PcaResult {
  StiefelBasis basis;
  double lambda_max = 0.0;
  // top-k eigenvalues of the empirical covariance, descending
  Vector eigenvalues;
};

// Leading k eigenvectors of Sigma = (1/n) X X^T. For d > n (and k <= n) the
// same eigenpairs are read off the thin SVD of X in O(d n^2).
inline PcaResult pca(const DataMatrix& data, Index k, bool centered) {
  const Index d = data.dim();
  const Index n = data.size();
  if (k < 1 || k >= d) {
    throw DimensionError("pca: need 1 <= k < d, got k=" + std::to_string(k) +
                         " d=" + std::to_string(d));
  }
  const DataMatrix x = centered ? center(data) : data;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d <= n || k > n) {
    const Matrix sigma = inv_n * (x.values() * x.values().transpose());
    const Matrix sym = 0.5 * (sigma + sigma.transpose());
    SymmetricEigenResult top = top_k_eigen(sym, k);
    return {StiefelBasis(std::move(top.eigenvectors)), top.eigenvalues(0), top.eigenvalues};
  }
  Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd(x.values(),
                                                                          Eigen::ComputeThinU);
  Matrix u = svd.matrixU().leftCols(k);
  normalize_signs(u);
  const Vector lam = inv_n * svd.singularValues().head(k).array().square().matrix();
  const double lambda_max = inv_n * svd.singularValues()(0) * svd.singularValues()(0);
  return {StiefelBasis(std::move(u)), lambda_max, lam};
}

// Canonical angles between span(A) and span(B), ascending. Angles below pi/4
// come from the sines (singular values of B - A A^T B), the rest from the
// cosines (singular values of A^T B); the cosine route alone loses accuracy
// near zero.
inline Vector principal_angles(const StiefelBasis& a, const StiefelBasis& b) {
  if (a.dim() != b.dim() || a.rank() != b.rank()) {
    throw DimensionError("principal_angles: bases must share d and k");
  }
  const Matrix& ua = a.values();
  const Matrix& ub = b.values();
  const Index k = ua.cols();
  const Matrix cross = ua.transpose() * ub;
  Eigen::JacobiSVD<Matrix> cos_svd(cross);
  Vector cosines = cos_svd.singularValues();  // descending
  Eigen::JacobiSVD<Matrix> sin_svd(ub - ua * cross);
  Vector sines = sin_svd.singularValues().reverse();  // ascending
  Vector angles(k);
  for (Index i = 0; i < k; ++i) {
    const double c = std::clamp(cosines(i), 0.0, 1.0);
    const double s = std::clamp(sines(i), 0.0, 1.0);
    angles(i) = (c * c >= 0.5) ? std::asin(s) : std::acos(c);
  }
  std::sort(angles.data(), angles.data() + k);
  return angles;
}

// |A A^T - B B^T|_F = sqrt(2) |sin(theta)|_2
inline double projector_distance(const StiefelBasis& a, const StiefelBasis& b) {
  const Vector theta = principal_angles(a, b);
  return std::sqrt(2.0) * theta.array().sin().matrix().norm();
}

inline double max_principal_angle(const StiefelBasis& a, const StiefelBasis& b) {
  return principal_angles(a, b).maxCoeff();
}

}  // namespace ewca
