#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "softlab/linalg.hpp"
#include "softlab/matrix.hpp"
#include "softlab/numeric.hpp"
#include "softlab/rng.hpp"

namespace softlab {

// ---------------------------------------------------------------------------
// Empirical checks of how pointwise functions move matrix rank around:
// Hadamard powers of low-rank products, elementwise squaring of nearly
// full-rank matrices, the distinct-dot-product indicator construction, and
// the increasing surrogate built from any rank-achieving value table.
// ---------------------------------------------------------------------------

struct ConstructionInapplicable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SurrogateNotFound : std::runtime_error {
  SurrogateNotFound(const std::string& msg, double best)
      : std::runtime_error(msg), best_det(best) {}
  double best_det;
};

inline Matrix hadamard_power(const Matrix& a, int p) {
  if (p < 1) throw std::invalid_argument("hadamard_power: exponent must be >= 1");
  Matrix b(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double acc = 1.0;
    for (int e = 0; e < p; ++e) acc *= a.flat()[i];
    b.flat()[i] = acc;
  }
  return b;
}

/// min{N, M, C(d+p-1, p)} - the rank cap for the p-th Hadamard power of a
/// rank-d matrix of size N x M.
inline std::size_t hadamard_rank_bound(std::size_t d, int p, std::size_t rows,
                                       std::size_t cols) {
  double binom = 1.0;
  for (int i = 1; i <= p; ++i)
    binom = binom * static_cast<double>(d - 1 + static_cast<std::size_t>(i)) /
            static_cast<double>(i);
  const double capped = std::min(binom, 1e18);
  return std::min({rows, cols, static_cast<std::size_t>(capped + 0.5)});
}

struct RankTrialSpec {
  std::size_t rows = 10;
  std::size_t cols = 10;
  std::size_t factor_rank = 2;  // d
  int power = 2;                // p
  std::size_t trials = 200;
  std::uint64_t seed = 0;

  void validate() const {
    if (factor_rank < 1 || factor_rank > std::min(rows, cols))
      throw std::invalid_argument("RankTrialSpec: factor rank out of range");
    if (power < 1) throw std::invalid_argument("RankTrialSpec: power must be >= 1");
  }
};

struct PowerRankReport {
  std::size_t bound = 0;
  std::size_t max_rank = 0;
  std::size_t violations = 0;
  std::vector<std::size_t> ranks;
};

/// Samples Gaussian factors W (rows x d), H (cols x d) and checks the rank
/// of (W H^T)^{Hadamard p} against the binomial bound in every trial.
inline PowerRankReport power_rank_trials(const RankTrialSpec& spec) {
  spec.validate();
  PowerRankReport report;
  report.bound = hadamard_rank_bound(spec.factor_rank, spec.power, spec.rows, spec.cols);
  report.ranks.reserve(spec.trials);
  for (std::size_t t = 0; t < spec.trials; ++t) {
    Rng rng = Rng::stream(spec.seed, t);
    const Matrix w = Matrix::gaussian(spec.rows, spec.factor_rank, rng);
    const Matrix h = Matrix::gaussian(spec.cols, spec.factor_rank, rng);
    const std::size_t r = numerical_rank(hadamard_power(multiply_abt(w, h), spec.power));
    report.ranks.push_back(r);
    report.max_rank = std::max(report.max_rank, r);
    if (r > report.bound) ++report.violations;
  }
  return report;
}

/// True when some column pair is proportional within tol (relative to the
/// column scales); such matrices stay rank-deficient under any pointwise map
/// of the two columns that preserves proportionality, x^2 included.
inline bool has_proportional_columns(const Matrix& a, double tol = 1e-12) {
  const std::size_t m = a.rows(), n = a.cols();
  for (std::size_t c1 = 0; c1 + 1 < n; ++c1) {
    for (std::size_t c2 = c1 + 1; c2 < n; ++c2) {
      double dot = 0.0, n1 = 0.0, n2 = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        dot += a(i, c1) * a(i, c2);
        n1 += a(i, c1) * a(i, c1);
        n2 += a(i, c2) * a(i, c2);
      }
      if (n1 == 0.0 || n2 == 0.0) return true;  // zero column
      if (n1 * n2 - dot * dot <= tol * n1 * n2) return true;
    }
  }
  return false;
}

struct SquareFullRankReport {
  std::size_t dim = 0;
  std::size_t trials = 0;
  std::size_t full_rank = 0;
  std::size_t flagged = 0;  // trials excluded for proportional columns
  double frequency = 0.0;
  std::vector<std::size_t> ranks;
};

/// Draws rank-(N-1) matrices as products of Gaussian N x (N-1) factors and
/// counts how often elementwise squaring reaches full numerical rank.
inline SquareFullRankReport square_fullrank_trials(std::size_t n, std::size_t trials,
                                                   std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("square_fullrank_trials: need dim > 1");
  SquareFullRankReport report;
  report.dim = n;
  report.trials = trials;
  report.ranks.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(seed, t);
    const Matrix x = Matrix::gaussian(n, n - 1, rng);
    const Matrix y = Matrix::gaussian(n, n - 1, rng);
    const Matrix a = multiply_abt(x, y);
    if (has_proportional_columns(a)) {
      ++report.flagged;
      report.ranks.push_back(0);
      continue;
    }
    const std::size_t r = numerical_rank(hadamard_power(a, 2));
    report.ranks.push_back(r);
    if (r == n) ++report.full_rank;
  }
  const std::size_t counted = trials - report.flagged;
  report.frequency =
      counted ? static_cast<double>(report.full_rank) / static_cast<double>(counted) : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Value tables: pointwise functions given by their values on finitely many
// inputs.  apply() looks values up exactly and is the identity off the
// table; interp() reads the table as anchors of a piecewise-linear function
// with slope-1 tails.
// ---------------------------------------------------------------------------

struct ValueTable {
  std::vector<double> inputs;   // strictly sorted
  std::vector<double> outputs;

  double apply(double x) const {
    const auto it = std::lower_bound(inputs.begin(), inputs.end(), x);
    if (it != inputs.end() && *it == x)
      return outputs[static_cast<std::size_t>(it - inputs.begin())];
    return x;
  }

  double interp(double x) const {
    if (inputs.empty()) return x;
    if (x <= inputs.front()) return outputs.front() - (inputs.front() - x);
    if (x >= inputs.back()) return outputs.back() + (x - inputs.back());
    const auto it = std::upper_bound(inputs.begin(), inputs.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - inputs.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - inputs[lo]) / (inputs[hi] - inputs[lo]);
    return outputs[lo] + t * (outputs[hi] - outputs[lo]);
  }

  bool strictly_increasing() const {
    for (std::size_t i = 1; i < outputs.size(); ++i)
      if (!(outputs[i] > outputs[i - 1])) return false;
    return true;
  }
};

inline Matrix apply_table(const ValueTable& table, const Matrix& a) {
  Matrix b(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) b.flat()[i] = table.apply(a.flat()[i]);
  return b;
}

inline Matrix apply_interp(const ValueTable& table, const Matrix& a) {
  Matrix b(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) b.flat()[i] = table.interp(a.flat()[i]);
  return b;
}

inline std::vector<double> distinct_sorted(const Matrix& a) {
  std::vector<double> vals(a.flat().begin(), a.flat().end());
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  return vals;
}

struct Lemma4Result {
  ValueTable table;
  std::size_t achieved_rank = 0;
};

/// Indicator construction over A = W H^T: given one column choice j_i per
/// row i with all <w_i, h_{j_i}> distinct from every other entry of A, the
/// table sending those dot products to 1 and everything else in A to 0
/// turns the chosen M x M submatrix into the identity, so f(A) has rank M.
/// Distinctness is checked with a gap of 1e-9 times the entry scale.
inline Lemma4Result lemma4_construct(const Matrix& w, const Matrix& h,
                                     const std::vector<std::size_t>& column_choice) {
  if (w.cols() != h.cols())
    throw std::invalid_argument("lemma4_construct: factor dims differ");
  const std::size_t m = w.rows();
  if (column_choice.size() != m)
    throw std::invalid_argument("lemma4_construct: need one column per row");
  for (std::size_t i = 0; i < m; ++i)
    if (column_choice[i] >= h.rows())
      throw std::invalid_argument("lemma4_construct: column index out of range");
  {
    auto sorted = column_choice;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("lemma4_construct: column choice must be distinct");
  }
  const Matrix a = multiply_abt(w, h);
  const double gap_tol = 1e-9 * std::max(1.0, a.max_abs());

  std::vector<double> chosen(m);
  for (std::size_t i = 0; i < m; ++i) chosen[i] = a(i, column_choice[i]);
  std::vector<double> chosen_sorted = chosen;
  std::sort(chosen_sorted.begin(), chosen_sorted.end());
  for (std::size_t i = 1; i < m; ++i)
    if (chosen_sorted[i] - chosen_sorted[i - 1] <= gap_tol)
      throw ConstructionInapplicable(
          "lemma4_construct: chosen dot products are not pairwise distinct");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (column_choice[i] == j) continue;
      for (double c : chosen)
        if (std::abs(a(i, j) - c) <= gap_tol)
          throw ConstructionInapplicable(
              "lemma4_construct: a chosen dot product collides with another entry");
    }
  }

  Lemma4Result result;
  result.table.inputs = distinct_sorted(a);
  result.table.outputs.assign(result.table.inputs.size(), 0.0);
  for (double c : chosen) {
    const auto it =
        std::lower_bound(result.table.inputs.begin(), result.table.inputs.end(), c);
    result.table.outputs[static_cast<std::size_t>(it - result.table.inputs.begin())] = 1.0;
  }
  result.achieved_rank = numerical_rank(apply_table(result.table, a));
  return result;
}

/// Exhaustive max |det| over all k x k submatrices; exponential, intended
/// as the oracle for pivot_submatrix on dims <= 6.
inline double max_det_submatrix_exhaustive(const Matrix& a, std::size_t k,
                                           std::vector<std::size_t>* best_rows = nullptr,
                                           std::vector<std::size_t>* best_cols = nullptr) {
  const std::size_t m = a.rows(), n = a.cols();
  if (k > std::min(m, n))
    throw std::invalid_argument("max_det_submatrix_exhaustive: k too large");
  std::vector<std::size_t> rows(k), cols(k);
  double best = -1.0;
  auto next_combination = [](std::vector<std::size_t>& c, std::size_t limit) {
    std::size_t i = c.size();
    while (i-- > 0) {
      if (c[i] + 1 <= limit - (c.size() - 1 - i)) {
        ++c[i];
        for (std::size_t j = i + 1; j < c.size(); ++j) c[j] = c[j - 1] + 1;
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < k; ++i) rows[i] = i;
  do {
    for (std::size_t i = 0; i < k; ++i) cols[i] = i;
    do {
      const double det = std::abs(determinant(extract_submatrix(a, rows, cols)));
      if (det > best) {
        best = det;
        if (best_rows) *best_rows = rows;
        if (best_cols) *best_cols = cols;
      }
    } while (next_combination(cols, n - 1));
  } while (next_combination(rows, m - 1));
  return best;
}

/// 0/1 table alternating with the position of each value among the sorted
/// distinct entries.  (Parity of the raw integer values cannot raise the
/// rank of a rank-2 integer product past 3: over GF(2) its columns come
/// from {0, u, v, u xor v}, which span at most three real directions.)
inline ValueTable index_parity_table(const Matrix& a) {
  ValueTable out;
  out.inputs = distinct_sorted(a);
  out.outputs.reserve(out.inputs.size());
  for (std::size_t i = 0; i < out.inputs.size(); ++i)
    out.outputs.push_back(static_cast<double>(i % 2));
  return out;
}

struct IndicatorPair {
  Matrix a;      // small-integer rank-2 matrix
  ValueTable f;  // index-parity table with rank(f(a)) = a.rows()
};

/// Searches small-integer rank-2 products W H^T (4 x 4) until the
/// index-parity table lifts them to full rank; the inputs for the
/// monotone-surrogate experiments.
inline IndicatorPair make_indicator_pair(std::uint64_t seed, std::size_t attempts = 20000) {
  for (std::uint64_t attempt = 0; attempt < attempts; ++attempt) {
    Rng rng = Rng::stream(seed, attempt);
    Matrix w(4, 2), h(4, 2);
    for (double& x : w.flat()) x = std::floor(rng.uniform(-3.0, 4.0));
    for (double& x : h.flat()) x = std::floor(rng.uniform(-3.0, 4.0));
    Matrix a = multiply_abt(w, h);
    if (numerical_rank(a) != 2) continue;
    ValueTable f = index_parity_table(a);
    if (numerical_rank(apply_table(f, a)) == 4) return {std::move(a), std::move(f)};
  }
  throw std::runtime_error("make_indicator_pair: no instance found in the attempt budget");
}

struct SurrogateResult {
  ValueTable table;
  std::size_t achieved_rank = 0;
  std::size_t draws_used = 0;
};

/// Builds a strictly increasing table g with rank(g(A)) >= target_rank from
/// any value table f with rank(f(A)) >= target_rank.  A well-pivoted K x K
/// submatrix of f(A) is located, then outputs c_i are sampled uniformly in
/// [b_i - eps, b_i + eps] (eps = quarter of the minimal gap between the
/// submatrix's distinct values, so the intervals are disjoint and any
/// choice is increasing) until the candidate determinant clears a
/// scale-aware threshold.  Identity anchors at b_i + 2 eps and slope-1
/// tails make the interpolated g bijective on R.
inline SurrogateResult monotone_surrogate(const Matrix& a, const ValueTable& f,
                                          std::size_t target_rank, std::uint64_t seed,
                                          std::size_t budget = 10000) {
  const Matrix fa = apply_table(f, a);
  if (numerical_rank(fa) < target_rank)
    throw std::invalid_argument("monotone_surrogate: rank(f(A)) below target rank");

  const SubmatrixPick pick = pivot_submatrix(fa, target_rank);
  const Matrix sub = extract_submatrix(a, pick.row_indices, pick.col_indices);
  const std::vector<double> values = distinct_sorted(sub);
  const std::size_t t = values.size();

  double min_gap = kInf;
  for (std::size_t i = 1; i < t; ++i) min_gap = std::min(min_gap, values[i] - values[i - 1]);
  if (t == 1) min_gap = 1.0;  // single value: any interval width works
  const double eps = 0.25 * min_gap;

  double scale = 1.0;
  for (double v : values) scale = std::max(scale, std::abs(v) + eps);
  double det_tol = 1e-12;
  for (std::size_t i = 0; i < target_rank; ++i) det_tol *= scale;

  Rng rng(seed);
  std::vector<double> candidate(t);
  Matrix candidate_sub(sub.rows(), sub.cols());
  double best_det = -1.0;
  for (std::size_t draw = 0; draw < budget; ++draw) {
    for (std::size_t i = 0; i < t; ++i)
      candidate[i] = values[i] + eps * (2.0 * rng.uniform() - 1.0);
    for (std::size_t i = 0; i < sub.size(); ++i) {
      const auto it = std::lower_bound(values.begin(), values.end(), sub.flat()[i]);
      candidate_sub.flat()[i] = candidate[static_cast<std::size_t>(it - values.begin())];
    }
    const double det = std::abs(determinant(candidate_sub));
    if (det > best_det) best_det = det;
    if (det <= det_tol) continue;

    SurrogateResult result;
    result.draws_used = draw + 1;
    auto& in = result.table.inputs;
    auto& out = result.table.outputs;
    in.reserve(2 * t + 1);
    out.reserve(2 * t + 1);
    in.push_back(values.front() - 2.0 * eps);
    out.push_back(values.front() - 2.0 * eps);
    for (std::size_t i = 0; i < t; ++i) {
      in.push_back(values[i]);
      out.push_back(candidate[i]);
      in.push_back(values[i] + 2.0 * eps);
      out.push_back(values[i] + 2.0 * eps);
    }
    if (!result.table.strictly_increasing())
      throw std::logic_error("monotone_surrogate: anchor table not increasing");
    result.achieved_rank = numerical_rank(apply_interp(result.table, a));
    if (result.achieved_rank >= target_rank) return result;
    // determinant cleared the threshold but the full matrix fell short of
    // the target numerical rank; keep sampling
  }
  throw SurrogateNotFound("monotone_surrogate: sampling budget exhausted (best |det| " +
                              format_double(best_det) + ")",
                          best_det);
}

}  // namespace softlab
