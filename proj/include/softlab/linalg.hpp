#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "softlab/matrix.hpp"

namespace softlab {

/// Singular values sorted non-increasing; length = min(rows, cols).
using SingularSpectrum = std::vector<double>;

namespace detail {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EigenRowMajor> as_eigen(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

}  // namespace detail

inline SingularSpectrum singular_values(const Matrix& a) {
  if (!a.all_finite())
    throw std::invalid_argument("singular_values: matrix has non-finite entries");
  if (a.rows() == 0 || a.cols() == 0) return {};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(detail::as_eigen(a));
  const auto& sv = svd.singularValues();
  return {sv.data(), sv.data() + sv.size()};
}

/// Count of singular values above tol.  Default tol is the usual
/// sigma_1 * max(rows, cols) * machine-epsilon convention.
inline std::size_t numerical_rank(const Matrix& a,
                                  std::optional<double> tol = std::nullopt) {
  const SingularSpectrum sv = singular_values(a);
  if (sv.empty()) return 0;
  const double tau =
      tol ? *tol
          : sv.front() * static_cast<double>(std::max(a.rows(), a.cols())) *
                std::numeric_limits<double>::epsilon();
  std::size_t r = 0;
  for (double s : sv)
    if (s > tau) ++r;
  return r;
}

/// sqrt(sum of squared singular values past index `rank`): the Frobenius
/// distance from a to its best rank-`rank` approximation.
inline double truncated_svd_residual(const Matrix& a, std::size_t rank) {
  const SingularSpectrum sv = singular_values(a);
  double acc = 0.0;
  for (std::size_t i = rank; i < sv.size(); ++i) acc += sv[i] * sv[i];
  return std::sqrt(acc);
}

/// Best rank-r factors of a: w (rows x r, scaled by the singular values)
/// and h (cols x r) with a ~ w h^T the truncated SVD.
struct TruncatedFactors {
  Matrix w;
  Matrix h;
};

inline TruncatedFactors truncated_svd_factors(const Matrix& a, std::size_t rank) {
  if (!a.all_finite())
    throw std::invalid_argument("truncated_svd_factors: matrix has non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(detail::as_eigen(a),
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const std::size_t r = std::min<std::size_t>(rank, svd.singularValues().size());
  TruncatedFactors out{Matrix(a.rows(), rank), Matrix(a.cols(), rank)};
  for (std::size_t k = 0; k < r; ++k) {
    const double s = svd.singularValues()(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < a.rows(); ++i)
      out.w(i, k) = s * svd.matrixU()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < a.cols(); ++j)
      out.h(j, k) = svd.matrixV()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }
  return out;
}

inline double determinant(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("determinant: matrix not square");
  if (a.rows() == 0) return 1.0;
  return detail::as_eigen(a).determinant();
}

/// Row and column indices of a well-conditioned k x k submatrix, chosen by
/// k steps of complete-pivoting Gaussian elimination.
struct SubmatrixPick {
  std::vector<std::size_t> row_indices;
  std::vector<std::size_t> col_indices;
};

inline SubmatrixPick pivot_submatrix(const Matrix& a, std::size_t k) {
  const std::size_t m = a.rows(), n = a.cols();
  if (k > std::min(m, n))
    throw std::invalid_argument("pivot_submatrix: k exceeds matrix dimensions");
  Matrix b = a;
  std::vector<bool> row_used(m, false), col_used(n, false);
  SubmatrixPick pick;
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t pi = m, pj = n;
    double best = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (row_used[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (col_used[j]) continue;
        const double v = std::abs(b(i, j));
        if (v > best) {
          best = v;
          pi = i;
          pj = j;
        }
      }
    }
    if (best <= 0.0)
      throw std::runtime_error("pivot_submatrix: matrix rank below requested size");
    pick.row_indices.push_back(pi);
    pick.col_indices.push_back(pj);
    row_used[pi] = true;
    col_used[pj] = true;
    const double pivot = b(pi, pj);
    for (std::size_t i = 0; i < m; ++i) {
      if (row_used[i]) continue;
      const double factor = b(i, pj) / pivot;
      if (factor == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j)
        if (!col_used[j]) b(i, j) -= factor * b(pi, j);
    }
  }
  return pick;
}

inline Matrix extract_submatrix(const Matrix& a, const std::vector<std::size_t>& rows,
                                const std::vector<std::size_t>& cols) {
  Matrix s(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) s(i, j) = a(rows[i], cols[j]);
  return s;
}

}  // namespace softlab
