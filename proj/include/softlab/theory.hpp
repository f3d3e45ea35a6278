#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "softlab/heads.hpp"
#include "softlab/linalg.hpp"
#include "softlab/matrix.hpp"
#include "softlab/numeric.hpp"
#include "softlab/rng.hpp"

namespace softlab {

// ---------------------------------------------------------------------------
// Cross-entropy minimum vs. constrained maximum entropy.  The dual side
// minimizes H(p*, Q_h) = -<mu, h> + log Z(h) over h by gradient descent with
// backtracking; the primal side maximizes entropy over the moment polytope
// {R >= 0, sum R = 1, W^T R = mu} by an augmented-Lagrangian exponentiated-
// gradient method.  The two share no code path, so agreement of their
// values is a genuine cross-check.
// ---------------------------------------------------------------------------

struct MaxEntInstance {
  ProbVector p_star;  // length M
  Matrix w;           // M x d word embeddings

  void validate() const {
    if (p_star.size() != w.rows())
      throw std::invalid_argument("MaxEntInstance: p_star length must match rows of W");
    if (!w.all_finite())
      throw std::invalid_argument("MaxEntInstance: W has non-finite entries");
    double sum = 0.0;
    for (double p : p_star) {
      if (p < 0.0) throw std::invalid_argument("MaxEntInstance: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("MaxEntInstance: p_star must sum to 1");
  }

  /// Moment target mu = E_{p*}[w].
  std::vector<double> moment_target() const { return w.tmatvec(p_star); }
};

struct SolveOptions {
  double grad_tol = 1e-8;      // dual stopping criterion, inf-norm
  double residual_tol = 1e-6;  // primal moment-constraint residual
  std::size_t max_iters = 200000;
};

struct DualSolution {
  std::vector<double> h;
  double value = 0.0;
  bool attained = true;  // false when the infimum drifts off to infinity
  std::size_t iterations = 0;
};

/// min_h H(p*, Q_h).  Convex and smooth; plain descent with a backtracking
/// line search (step recycled between iterations).  When the moment target
/// sits on the boundary of the feasible set the minimum is an infimum only;
/// see the detection note at the end, reported via attained = false with the
/// best value found.
inline DualSolution min_cross_entropy(const MaxEntInstance& inst,
                                      const SolveOptions& opts = {}) {
  inst.validate();
  const std::size_t d = inst.w.cols();
  const std::vector<double> mu = inst.moment_target();

  std::vector<double> h(d, 0.0);
  auto objective = [&](const std::vector<double>& hv) {
    const std::vector<double> z = inst.w.matvec(hv);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += mu[j] * hv[j];
    return log_sum_exp(z) - dot;
  };
  auto gradient = [&](const std::vector<double>& hv) {
    const std::vector<double> z = inst.w.matvec(hv);
    const std::vector<double> q = softmax(z);
    std::vector<double> g = inst.w.tmatvec(q);
    for (std::size_t j = 0; j < d; ++j) g[j] -= mu[j];
    return g;
  };

  DualSolution sol;
  double value = objective(h);
  double step = 1.0;
  constexpr double kArmijo = 1e-4;
  constexpr double kNormRunaway = 1e6;
  std::size_t it = 0;
  for (; it < opts.max_iters; ++it) {
    const std::vector<double> g = gradient(h);
    double gnorm_inf = 0.0, gnorm2 = 0.0;
    for (double x : g) {
      gnorm_inf = std::max(gnorm_inf, std::abs(x));
      gnorm2 += x * x;
    }
    if (gnorm_inf <= opts.grad_tol) break;
    std::vector<double> trial(d);
    double trial_value = 0.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t j = 0; j < d; ++j) trial[j] = h[j] - step * g[j];
      trial_value = objective(trial);
      if (trial_value <= value - kArmijo * step * gnorm2) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // at float resolution
    h = trial;
    value = trial_value;
    step = std::min(step * 2.0, 1e6);
    double hnorm = 0.0;
    for (double x : h) hnorm = std::max(hnorm, std::abs(x));
    if (hnorm > kNormRunaway) {
      sol.attained = false;
      break;
    }
  }
  // A boundary moment target (mu outside the relative interior of the
  // feasible set) sends the optimizing sequence off to infinity while some
  // model probabilities collapse toward zero.  Entries that end below the
  // gradient resolution cannot be told apart from an exact zero, which is
  // the numerical signature of a non-attained infimum.
  {
    const std::vector<double> z = inst.w.matvec(h);
    const std::vector<double> q = softmax(z);
    double q_min = 1.0;
    for (double x : q) q_min = std::min(q_min, x);
    if (q_min <= 10.0 * opts.grad_tol) sol.attained = false;
  }
  sol.h = std::move(h);
  sol.value = value;
  sol.iterations = it;
  return sol;
}

struct PrimalSolution {
  ProbVector r;
  double value = 0.0;
  double residual = 0.0;  // ||W^T r - mu||_inf at return
  std::size_t iterations = 0;
};

/// max H(R) over the moment polytope, by the method of multipliers with an
/// exponentiated-gradient inner loop on the simplex.  Aims an order of
/// magnitude below residual_tol so downstream gap checks have headroom.
inline PrimalSolution max_entropy_primal(const MaxEntInstance& inst,
                                         const SolveOptions& opts = {}) {
  inst.validate();
  const std::size_t m = inst.w.rows(), d = inst.w.cols();
  const std::vector<double> mu = inst.moment_target();

  ProbVector r(m, 1.0 / static_cast<double>(m));
  std::vector<double> nu(d, 0.0);  // multipliers
  double rho = 10.0;
  const double target_residual = opts.residual_tol * 0.01;

  auto constraint_gap = [&](const ProbVector& rv) {
    std::vector<double> c = inst.w.tmatvec(rv);
    for (std::size_t j = 0; j < d; ++j) c[j] -= mu[j];
    return c;
  };

  auto augmented_objective = [&](const ProbVector& rv) {
    const std::vector<double> c = constraint_gap(rv);
    double val = entropy(rv);
    for (std::size_t j = 0; j < d; ++j) val -= nu[j] * c[j] + 0.5 * rho * c[j] * c[j];
    return val;
  };

  std::size_t total_iters = 0;
  double residual_inf = 0.0;
  const std::size_t outer_max = 300;
  for (std::size_t outer = 0; outer < outer_max; ++outer) {
    // Inner ascent on H(R) - <nu, c(R)> - rho/2 ||c(R)||^2 by guarded
    // exponentiated-gradient steps.
    double eta = 0.25;
    double obj = augmented_objective(r);
    for (std::size_t inner = 0; inner < 4000; ++inner) {
      ++total_iters;
      std::vector<double> c = constraint_gap(r);
      std::vector<double> lin(d);
      for (std::size_t j = 0; j < d; ++j) lin[j] = nu[j] + rho * c[j];
      // grad_i = -log r_i - 1 - <w_i, lin>
      std::vector<double> g(m);
      double gmax = -kInf, gmin = kInf;
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        const auto wrow = inst.w.row(i);
        for (std::size_t j = 0; j < d; ++j) dot += wrow[j] * lin[j];
        g[i] = -std::log(std::max(r[i], 1e-300)) - 1.0 - dot;
        gmax = std::max(gmax, g[i]);
        gmin = std::min(gmin, g[i]);
      }
      if (gmax - gmin <= 1e-13 * std::max(1.0, std::abs(gmax))) break;
      // Multiplicative step in the log domain, shrinking until it ascends.
      ProbVector trial(m);
      std::vector<double> log_r(m);
      bool moved = false;
      for (int bt = 0; bt < 40; ++bt) {
        for (std::size_t i = 0; i < m; ++i)
          log_r[i] = std::log(std::max(r[i], 1e-300)) + eta * g[i];
        const double lz = log_sum_exp(log_r);
        for (std::size_t i = 0; i < m; ++i) trial[i] = std::exp(log_r[i] - lz);
        const double trial_obj = augmented_objective(trial);
        if (trial_obj >= obj) {
          obj = trial_obj;
          r = trial;
          moved = true;
          break;
        }
        eta *= 0.5;
      }
      if (!moved) break;
      eta = std::min(eta * 1.3, 4.0);
    }
    std::vector<double> c = constraint_gap(r);
    residual_inf = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      nu[j] += rho * c[j];
      residual_inf = std::max(residual_inf, std::abs(c[j]));
    }
    if (residual_inf <= target_residual) break;
    rho = std::min(rho * 1.5, 1e8);
  }
  if (residual_inf > opts.residual_tol)
    throw std::runtime_error("max_entropy_primal: constraint residual " +
                             format_double(residual_inf) + " above tolerance");
  PrimalSolution sol;
  sol.value = entropy(r);
  sol.r = std::move(r);
  sol.residual = residual_inf;
  sol.iterations = total_iters;
  return sol;
}

struct DualityReport {
  double min_ce = 0.0;
  double max_ent = 0.0;
  double gap = 0.0;
  std::vector<double> argmin_h;
  ProbVector argmax_r;
  bool attained = true;
};

inline DualityReport duality_gap(const MaxEntInstance& inst, const SolveOptions& opts = {}) {
  DualSolution dual = min_cross_entropy(inst, opts);
  PrimalSolution primal = max_entropy_primal(inst, opts);
  DualityReport report;
  report.min_ce = dual.value;
  report.max_ent = primal.value;
  report.gap = std::abs(dual.value - primal.value);
  report.argmin_h = std::move(dual.h);
  report.argmax_r = std::move(primal.r);
  report.attained = dual.attained;
  return report;
}

// ---------------------------------------------------------------------------
// Rank-constrained MSE fitting of log-prob matrices.
// ---------------------------------------------------------------------------

/// sqrt(sigma_{d+2}^2 + ... + sigma_min^2): no matrix of the form
/// W H^T - ones logZ^T (rank <= d+1) gets closer to the target in Frobenius
/// norm.  Returns 0 when d+1 reaches the spectrum length.
inline double eckart_young_bound(const Matrix& target, std::size_t dim) {
  return truncated_svd_residual(target, dim + 1);
}

struct RankFitConfig {
  std::size_t sweeps = 500;  // alternating update rounds
  double rel_tol = 1e-14;    // early stop on relative error decrease
};

struct RankFitResult {
  Matrix w;                   // M x d
  Matrix h;                   // N x d
  std::vector<double> log_z;  // N, the rank-1 correction
  double frobenius_error = 0.0;
  double mse = 0.0;  // ||target - model||_F^2 / N
  std::size_t sweeps_used = 0;
};

namespace detail {

inline Matrix rank_fit_model(const Matrix& w, const Matrix& h,
                             const std::vector<double>& log_z) {
  Matrix model = multiply_abt(w, h);
  for (std::size_t i = 0; i < model.rows(); ++i)
    for (std::size_t j = 0; j < model.cols(); ++j) model(i, j) -= log_z[j];
  return model;
}

}  // namespace detail

/// Fits target ~ W H^T - ones logZ^T by alternating the two exact block
/// minimizers: given the factors, the optimal logZ is minus the column
/// means of the residual; given logZ, the optimal rank-d part is the
/// truncated SVD of target + ones logZ^T.  Both steps are global in their
/// block, so the error is non-increasing and settles at the structured
/// optimum.
inline RankFitResult mse_rank_fit(const Matrix& target, std::size_t dim,
                                  const RankFitConfig& cfg = {}) {
  const std::size_t m = target.rows(), n = target.cols();
  if (dim < 1) throw std::invalid_argument("mse_rank_fit: dim must be >= 1");
  if (dim + 1 > std::min(m, n))
    throw std::invalid_argument("mse_rank_fit: dim + 1 exceeds the matrix dimensions");
  RankFitResult fit;
  fit.w = Matrix(m, dim);
  fit.h = Matrix(n, dim);
  fit.log_z.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += target(i, j);
    fit.log_z[j] = -mean / static_cast<double>(m);
  }

  double previous_error = kInf;
  Matrix shifted(m, n);
  for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
    fit.sweeps_used = sweep + 1;
    // factor step: best rank-d approximation of target + ones logZ^T
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) shifted(i, j) = target(i, j) + fit.log_z[j];
    TruncatedFactors factors = truncated_svd_factors(shifted, dim);
    fit.w = std::move(factors.w);
    fit.h = std::move(factors.h);
    // logZ step: column means of W H^T - target
    const Matrix product = multiply_abt(fit.w, fit.h);
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) mean += product(i, j) - target(i, j);
      fit.log_z[j] = mean / static_cast<double>(m);
    }
    Matrix resid = detail::rank_fit_model(fit.w, fit.h, fit.log_z);
    resid -= target;
    const double err = resid.frobenius_norm();
    if (!std::isfinite(err)) throw std::runtime_error("mse_rank_fit: diverged");
    const bool stalled = previous_error - err <= cfg.rel_tol * std::max(1.0, err);
    previous_error = err;
    if (stalled) break;
  }

  fit.frobenius_error = previous_error;
  fit.mse = previous_error * previous_error / static_cast<double>(n);
  return fit;
}

}  // namespace softlab
