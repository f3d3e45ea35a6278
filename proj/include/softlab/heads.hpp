#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "softlab/matrix.hpp"
#include "softlab/monotone.hpp"
#include "softlab/numeric.hpp"

namespace softlab {

using ProbVector = std::vector<double>;

/// Word matrix W (vocab x dim) and context matrix H (contexts x dim) whose
/// product W H^T is the logits matrix.
struct EmbeddingSet {
  Matrix word;     // M x d
  Matrix context;  // N x d
};

/// Logits matrix W H^T (vocab x contexts).
inline Matrix logits_matrix(const EmbeddingSet& emb) {
  if (emb.word.cols() != emb.context.cols())
    throw std::invalid_argument("logits_matrix: embedding dimensions differ");
  return multiply_abt(emb.word, emb.context);
}

struct LinearSoftmaxHead {};

/// Softmax over f(W h) for a pointwise increasing f.
struct LmsHead {
  MonotoneFn fn;
};

/// Mixture of softmaxes: K components with context-dependent priors
/// pi = softmax_k(v_k . h) and component embeddings g_k = tanh(U_k h).
/// Flat parameter layout: [v row-major (K x d) | U_1 row-major | ... | U_K].
struct MosParams {
  Matrix prior_directions;         // K x d
  std::vector<Matrix> projections; // K matrices, each d x d

  std::size_t components() const { return projections.size(); }
  std::size_t dim() const { return prior_directions.cols(); }

  std::size_t param_count() const {
    const std::size_t d = dim();
    return components() * d + components() * d * d;
  }

  std::vector<double> params_flat() const {
    std::vector<double> p;
    p.reserve(param_count());
    p.insert(p.end(), prior_directions.flat().begin(), prior_directions.flat().end());
    for (const auto& u : projections)
      p.insert(p.end(), u.flat().begin(), u.flat().end());
    return p;
  }

  void set_params_flat(std::span<const double> p) {
    if (p.size() != param_count())
      throw std::invalid_argument("MosParams: wrong parameter count");
    std::size_t off = 0;
    for (double& x : prior_directions.flat()) x = p[off++];
    for (auto& u : projections)
      for (double& x : u.flat()) x = p[off++];
  }
};

struct MosHead {
  MosParams params;
};

/// A probability head: word embeddings plus the output-layer variant.
struct HeadModel {
  Matrix word;  // M x d
  std::variant<LinearSoftmaxHead, LmsHead, MosHead> kind;

  std::size_t vocab() const { return word.rows(); }
  std::size_t dim() const { return word.cols(); }
};

inline std::string head_name(const HeadModel& head) {
  if (std::holds_alternative<LinearSoftmaxHead>(head.kind)) return "linear";
  if (const auto* lms = std::get_if<LmsHead>(&head.kind))
    return "lms-" + fn_name(lms->fn);
  return "mos";
}

namespace detail {

inline void check_context_dim(const HeadModel& head, std::span<const double> h) {
  if (h.size() != head.dim())
    throw std::invalid_argument("head: context vector dimension mismatch");
}

/// Log-probabilities for the single-softmax heads; returns log Z.
inline double single_softmax_log_probs(const HeadModel& head, std::span<const double> h,
                                       std::span<double> out) {
  const Matrix& w = head.word;
  std::vector<double> z = w.matvec(h);
  if (const auto* lms = std::get_if<LmsHead>(&head.kind))
    apply(lms->fn, z, std::span<double>(z));
  const double log_z = log_sum_exp(z);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - log_z;
  return log_z;
}

struct MosForward {
  std::vector<double> priors;               // K
  std::vector<std::vector<double>> g;       // K x d, tanh(U_k h)
  std::vector<std::vector<double>> comp;    // K x M, component probabilities
  ProbVector mixture;                       // M
};

inline MosForward mos_forward(const Matrix& w, const MosParams& params,
                              std::span<const double> h) {
  const std::size_t k = params.components();
  const std::size_t m = w.rows();
  MosForward fwd;
  std::vector<double> prior_logits = params.prior_directions.matvec(h);
  fwd.priors = softmax(prior_logits);
  fwd.g.resize(k);
  fwd.comp.resize(k);
  fwd.mixture.assign(m, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    fwd.g[c] = params.projections[c].matvec(h);
    for (double& x : fwd.g[c]) x = std::tanh(x);
    const std::vector<double> comp_logits = w.matvec(fwd.g[c]);
    fwd.comp[c] = softmax(comp_logits);
    for (std::size_t i = 0; i < m; ++i) fwd.mixture[i] += fwd.priors[c] * fwd.comp[c][i];
  }
  return fwd;
}

}  // namespace detail

/// Conditional distribution over the vocabulary for one context vector.
inline ProbVector probs(const HeadModel& head, std::span<const double> h) {
  detail::check_context_dim(head, h);
  if (const auto* mos = std::get_if<MosHead>(&head.kind))
    return detail::mos_forward(head.word, mos->params, h).mixture;
  ProbVector out(head.vocab());
  detail::single_softmax_log_probs(head, h, out);
  for (double& x : out) x = std::exp(x);
  return out;
}

/// -sum p* log q.  Returns +inf when q puts zero mass where p* does not.
inline double cross_entropy(std::span<const double> p_star, std::span<const double> q) {
  if (p_star.size() != q.size())
    throw std::invalid_argument("cross_entropy: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (p_star[i] == 0.0) continue;
    if (q[i] <= 0.0) return kInf;
    acc -= p_star[i] * std::log(q[i]);
  }
  return acc;
}

/// Cross-entropy of one context computed in the log domain.
inline double context_loss(const HeadModel& head, std::span<const double> h,
                           std::span<const double> p_star) {
  detail::check_context_dim(head, h);
  if (p_star.size() != head.vocab())
    throw std::invalid_argument("context_loss: target length mismatch");
  if (const auto* mos = std::get_if<MosHead>(&head.kind)) {
    const auto fwd = detail::mos_forward(head.word, mos->params, h);
    return cross_entropy(p_star, fwd.mixture);
  }
  std::vector<double> log_q(head.vocab());
  detail::single_softmax_log_probs(head, h, log_q);
  double acc = 0.0;
  for (std::size_t i = 0; i < log_q.size(); ++i) acc -= p_star[i] * log_q[i];
  return acc;
}

/// Gradient of context_loss with respect to the context vector, the word
/// matrix, and the head's own parameters (monotone-fn params for LMS, the
/// MoS flat layout for MoS; empty otherwise).
struct ContextGrad {
  std::vector<double> context;      // d
  Matrix word;                      // M x d
  std::vector<double> head_params;  // flat, variant-specific
};

inline ContextGrad grad_context(const HeadModel& head, std::span<const double> h,
                                std::span<const double> p_star) {
  detail::check_context_dim(head, h);
  const std::size_t m = head.vocab(), d = head.dim();
  if (p_star.size() != m) throw std::invalid_argument("grad_context: target length mismatch");
  ContextGrad grad;
  grad.context.assign(d, 0.0);
  grad.word = Matrix(m, d);

  if (const auto* mos = std::get_if<MosHead>(&head.kind)) {
    const MosParams& params = mos->params;
    const std::size_t k = params.components();
    const auto fwd = detail::mos_forward(head.word, params, h);
    grad.head_params.assign(params.param_count(), 0.0);
    std::span<double> grad_v(grad.head_params.data(), k * d);
    // r_c = sum_i p*_i comp_ci / q_i; prior logit gradient is pi_c (1 - r_c).
    std::vector<double> ratio(m);
    for (std::size_t i = 0; i < m; ++i) ratio[i] = p_star[i] / fwd.mixture[i];
    for (std::size_t c = 0; c < k; ++c) {
      double r = 0.0;
      for (std::size_t i = 0; i < m; ++i) r += fwd.comp[c][i] * ratio[i];
      const double da = fwd.priors[c] * (1.0 - r);
      for (std::size_t j = 0; j < d; ++j) {
        grad_v[c * d + j] += da * h[j];
        grad.context[j] += da * params.prior_directions(c, j);
      }
      std::vector<double> dz(m);
      for (std::size_t i = 0; i < m; ++i)
        dz[i] = fwd.priors[c] * fwd.comp[c][i] * (r - ratio[i]);
      std::vector<double> dg = head.word.tmatvec(dz);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) grad.word(i, j) += dz[i] * fwd.g[c][j];
      std::span<double> grad_u(grad.head_params.data() + k * d + c * d * d, d * d);
      for (std::size_t a = 0; a < d; ++a) {
        const double t = (1.0 - fwd.g[c][a] * fwd.g[c][a]) * dg[a];
        for (std::size_t j = 0; j < d; ++j) {
          grad_u[a * d + j] += t * h[j];
          grad.context[j] += t * params.projections[c](a, j);
        }
      }
    }
    return grad;
  }

  // Single-softmax heads: dL/dz_i = f'(z_i) (q_i - p*_i).
  std::vector<double> z = head.word.matvec(h);
  std::vector<double> a = z;
  const LmsHead* lms = std::get_if<LmsHead>(&head.kind);
  if (lms) apply(lms->fn, z, std::span<double>(a));
  std::vector<double> q = softmax(a);
  std::vector<double> upstream(m);  // dL/da_i
  for (std::size_t i = 0; i < m; ++i) upstream[i] = q[i] - p_star[i];
  std::vector<double> dz = upstream;
  if (lms)
    for (std::size_t i = 0; i < m; ++i) dz[i] *= deriv(lms->fn, z[i]);
  grad.context = head.word.tmatvec(dz);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) grad.word(i, j) = dz[i] * h[j];
  if (lms && has_params(lms->fn)) {
    if (const auto* plif = std::get_if<Plif>(&lms->fn)) {
      Plif::GradAccumulator acc(plif->segments());
      for (std::size_t i = 0; i < m; ++i) acc.add(*plif, z[i], upstream[i]);
      grad.head_params = acc.finalize(*plif);
    } else {
      const auto& mlp = std::get<MonotonicMlp>(lms->fn);
      grad.head_params.assign(mlp.param_count(), 0.0);
      for (std::size_t i = 0; i < m; ++i)
        mlp.accumulate_grad(z[i], upstream[i], grad.head_params);
    }
  }
  return grad;
}

/// Log-probability matrix A with A_ij = log Q(x_i | c_j) over all words i
/// and context rows j of H, plus the log-partition vector for the
/// single-softmax heads (A = f(W H^T) - ones * logZ^T).  MoS mixtures have
/// no single partition vector, so log_z is empty for them.
struct LogProbMatrix {
  Matrix log_probs;           // M x N
  std::vector<double> log_z;  // N (empty for MoS)
};

inline LogProbMatrix log_prob_matrix(const HeadModel& head, const Matrix& contexts) {
  if (contexts.cols() != head.dim())
    throw std::invalid_argument("log_prob_matrix: context dimension mismatch");
  const std::size_t m = head.vocab(), n = contexts.rows();
  LogProbMatrix out;
  out.log_probs = Matrix(m, n);
  const bool mixture = std::holds_alternative<MosHead>(head.kind);
  if (!mixture) out.log_z.resize(n);
  std::vector<double> col(m);
  for (std::size_t j = 0; j < n; ++j) {
    if (mixture) {
      const auto q = probs(head, contexts.row(j));
      for (std::size_t i = 0; i < m; ++i) col[i] = std::log(q[i]);
    } else {
      out.log_z[j] = detail::single_softmax_log_probs(head, contexts.row(j), col);
    }
    for (std::size_t i = 0; i < m; ++i) out.log_probs(i, j) = col[i];
  }
  return out;
}

/// Mean squared error over contexts: ||target - model||_F^2 / N, where N is
/// the number of columns (contexts) of the M x N log-prob matrices.
///
/// A caution for interpreting this metric: since d/dx log(x) = 1/x blows up
/// as x -> 0, a fixed mismatch on a tiny probability moves its log entry far
/// more than the same mismatch on a large one.  MSE on log-probabilities
/// therefore over-weights the distribution tails relative to the modes,
/// which is why cross-entropy remains the fitting loss and this distance is
/// only used for the spectral lower-bound experiments.
inline double mse_logprob(const Matrix& target, const Matrix& model) {
  if (target.rows() != model.rows() || target.cols() != model.cols())
    throw std::invalid_argument("mse_logprob: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double diff = target.flat()[i] - model.flat()[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(target.cols());
}

}  // namespace softlab
