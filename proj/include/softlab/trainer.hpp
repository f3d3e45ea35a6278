#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "softlab/heads.hpp"
#include "softlab/matrix.hpp"
#include "softlab/parallel.hpp"
#include "softlab/synth.hpp"

namespace softlab {

enum class OptimizerKind { Sgd, Momentum, Adam };

struct TrainConfig {
  std::size_t steps = 3000;
  double lr = 1e-2;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;      // Momentum only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch = 0;      // contexts per step; 0 = full batch
  double init_scale = 0.1;
  std::uint64_t seed = 0;
  bool train_word = true;     // freeze W when false

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
  }
};

struct HeadConfig {
  enum class Kind { Linear, Lms, Mos };
  enum class Fn { Identity, Sigsoftmax, Power, Mlp, Plif };

  Kind kind = Kind::Linear;
  Fn fn = Fn::Mlp;  // LMS only
  int power = 3;
  std::size_t mlp_hidden = 32;
  std::size_t plif_segments = 1000;
  double plif_half_range = 10.0;
  std::size_t mos_components = 3;
};

struct MetricsReport {
  double mean_kl = 0.0;
  double mode_match = 0.0;
  double final_ce = 0.0;
  std::vector<double> loss_series;
};

struct FitResult {
  HeadModel model;
  Matrix contexts;  // trained H, N x D
  MetricsReport metrics;
};

struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(std::size_t at_step)
      : std::runtime_error("training diverged at step " + std::to_string(at_step)),
        step(at_step) {}
  std::size_t step;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Fraction of rows whose argmax indices coincide (ties -> lowest index).
inline double mode_match(const Matrix& p_star, const Matrix& q) {
  if (p_star.rows() != q.rows() || p_star.cols() != q.cols())
    throw std::invalid_argument("mode_match: shape mismatch");
  std::size_t hits = 0;
  for (std::size_t j = 0; j < p_star.rows(); ++j)
    if (argmax(p_star.row(j)) == argmax(q.row(j))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(p_star.rows());
}

/// (1/N) sum_j KL(p*_j || q_j).
inline double mean_kl(const Matrix& p_star, const Matrix& q) {
  if (p_star.rows() != q.rows() || p_star.cols() != q.cols())
    throw std::invalid_argument("mean_kl: shape mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < p_star.rows(); ++j) {
    const auto p = p_star.row(j);
    const double ce = cross_entropy(p, q.row(j));
    if (ce == kInf) return kInf;
    acc += ce - entropy(p);
  }
  return acc / static_cast<double>(p_star.rows());
}

/// Materialized N x M probability table, one row per context.
inline Matrix prob_table(const HeadModel& head, const Matrix& contexts) {
  Matrix q(contexts.rows(), head.vocab());
  for (std::size_t j = 0; j < contexts.rows(); ++j) {
    const auto row = probs(head, contexts.row(j));
    for (std::size_t i = 0; i < row.size(); ++i) q(j, i) = row[i];
  }
  return q;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

namespace detail {

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  void update(std::size_t group, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("Optimizer: parameter/gradient size mismatch");
    if (group >= states_.size()) states_.resize(group + 1);
    State& st = states_[group];
    if (st.m.empty() && cfg_.optimizer != OptimizerKind::Sgd)
      st.m.assign(params.size(), 0.0);
    if (st.v.empty() && cfg_.optimizer == OptimizerKind::Adam)
      st.v.assign(params.size(), 0.0);
    ++st.t;
    switch (cfg_.optimizer) {
      case OptimizerKind::Sgd:
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.lr * grads[i];
        break;
      case OptimizerKind::Momentum:
        for (std::size_t i = 0; i < params.size(); ++i) {
          st.m[i] = cfg_.momentum * st.m[i] + grads[i];
          params[i] -= cfg_.lr * st.m[i];
        }
        break;
      case OptimizerKind::Adam: {
        const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(st.t));
        const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(st.t));
        for (std::size_t i = 0; i < params.size(); ++i) {
          st.m[i] = cfg_.adam_beta1 * st.m[i] + (1.0 - cfg_.adam_beta1) * grads[i];
          st.v[i] = cfg_.adam_beta2 * st.v[i] + (1.0 - cfg_.adam_beta2) * grads[i] * grads[i];
          const double mhat = st.m[i] / bc1;
          const double vhat = st.v[i] / bc2;
          params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
        }
        break;
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
    std::uint64_t t = 0;
  };
  TrainConfig cfg_;
  std::vector<State> states_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Head construction and fitting
// ---------------------------------------------------------------------------

inline HeadModel make_head(const HeadConfig& hcfg, std::size_t vocab, std::size_t dim,
                           double init_scale, Rng& rng) {
  HeadModel head;
  head.word = Matrix::gaussian(vocab, dim, rng, init_scale);
  switch (hcfg.kind) {
    case HeadConfig::Kind::Linear:
      head.kind = LinearSoftmaxHead{};
      break;
    case HeadConfig::Kind::Lms: {
      LmsHead lms;
      switch (hcfg.fn) {
        case HeadConfig::Fn::Identity: lms.fn = Identity{}; break;
        case HeadConfig::Fn::Sigsoftmax: lms.fn = Sigsoftmax{}; break;
        case HeadConfig::Fn::Power:
          if (hcfg.power < 1)
            throw std::invalid_argument("make_head: power exponent must be >= 1");
          lms.fn = Power{hcfg.power};
          break;
        case HeadConfig::Fn::Mlp: {
          // Near-identity start; biases spread so hidden units separate.
          MonotonicMlp mlp(hcfg.mlp_hidden);
          auto p = mlp.params_flat();
          for (std::size_t k = 0; k < hcfg.mlp_hidden; ++k)
            p[2 * hcfg.mlp_hidden + k] = rng.normal();
          mlp.set_params_flat(p);
          lms.fn = std::move(mlp);
          break;
        }
        case HeadConfig::Fn::Plif:
          lms.fn = Plif(hcfg.plif_half_range, hcfg.plif_segments);
          break;
      }
      head.kind = std::move(lms);
      break;
    }
    case HeadConfig::Kind::Mos: {
      MosParams params;
      params.prior_directions = Matrix::gaussian(hcfg.mos_components, dim, rng, init_scale);
      params.projections.reserve(hcfg.mos_components);
      for (std::size_t c = 0; c < hcfg.mos_components; ++c)
        params.projections.push_back(Matrix::gaussian(dim, dim, rng, init_scale));
      head.kind = MosHead{std::move(params)};
      break;
    }
  }
  return head;
}

namespace detail {

/// Per-block gradient partials; merged in block order so the reduction is
/// bitwise identical for any thread count.
struct BlockGrad {
  Matrix word;
  std::vector<double> head_params;
  double loss = 0.0;

  void reset(std::size_t vocab, std::size_t dim, std::size_t n_head_params) {
    if (word.rows() != vocab || word.cols() != dim) word = Matrix(vocab, dim);
    else for (double& x : word.flat()) x = 0.0;
    head_params.assign(n_head_params, 0.0);
    loss = 0.0;
  }
};

inline bool span_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

constexpr double kDiverged = std::numeric_limits<double>::quiet_NaN();

/// Forward/backward for one single-softmax context; MoS handled separately.
/// Returns NaN when the optimization has produced non-finite values, which
/// the step loop reports as divergence.
inline double lms_context_pass(const HeadModel& head, const LmsHead* lms,
                               std::span<const double> h, std::span<const double> p_star,
                               std::span<double> grad_h, BlockGrad& blk,
                               Plif::GradAccumulator* plif_acc,
                               std::vector<double>& z, std::vector<double>& a,
                               std::vector<double>& dz) {
  const std::size_t m = head.vocab(), d = head.dim();
  const Matrix& w = head.word;
  z.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto wrow = w.row(i);
    double acc = 0.0;
    for (std::size_t jd = 0; jd < d; ++jd) acc += wrow[jd] * h[jd];
    z[i] = acc;
  }
  if (!span_finite(z)) return kDiverged;
  a = z;
  if (lms) apply(lms->fn, z, std::span<double>(a));
  if (!span_finite(a)) return kDiverged;
  const double log_z = log_sum_exp(a);
  double loss = log_z;
  dz.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    loss -= p_star[i] * a[i];
    dz[i] = std::exp(a[i] - log_z) - p_star[i];  // dL/da = q - p*
  }
  // Chain dL/da through f' and park the per-sample parameter gradients.
  if (lms) {
    if (plif_acc) {
      const Plif& plif = std::get<Plif>(lms->fn);
      for (std::size_t i = 0; i < m; ++i) {
        plif_acc->add(plif, z[i], dz[i]);
        dz[i] *= plif.slope(z[i]);
      }
    } else if (const auto* mlp = std::get_if<MonotonicMlp>(&lms->fn)) {
      for (std::size_t i = 0; i < m; ++i)
        dz[i] *= mlp->backward(z[i], dz[i], blk.head_params);
    } else {
      apply_deriv(lms->fn, z, std::span<double>(a));
      for (std::size_t i = 0; i < m; ++i) dz[i] *= a[i];
    }
  }
  for (std::size_t jd = 0; jd < d; ++jd) grad_h[jd] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double g = dz[i];
    const auto wrow = w.row(i);
    auto grow = blk.word.row(i);
    for (std::size_t jd = 0; jd < d; ++jd) {
      grad_h[jd] += wrow[jd] * g;
      grow[jd] += g * h[jd];
    }
  }
  return loss;
}

inline double mos_context_pass(const HeadModel& head, const MosParams& params,
                               std::span<const double> h, std::span<const double> p_star,
                               std::span<double> grad_h, BlockGrad& blk) {
  const std::size_t m = head.vocab(), d = head.dim(), k = params.components();
  MosForward fwd;
  try {
    fwd = mos_forward(head.word, params, h);
  } catch (const std::invalid_argument&) {
    return kDiverged;  // softmax rejected overflowed logits
  }
  if (!span_finite(fwd.mixture)) return kDiverged;
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) loss -= p_star[i] * std::log(fwd.mixture[i]);
  std::vector<double> ratio(m);
  for (std::size_t i = 0; i < m; ++i) ratio[i] = p_star[i] / fwd.mixture[i];
  for (std::size_t jd = 0; jd < d; ++jd) grad_h[jd] = 0.0;
  std::span<double> grad_v(blk.head_params.data(), k * d);
  std::vector<double> dz(m);
  for (std::size_t c = 0; c < k; ++c) {
    double r = 0.0;
    for (std::size_t i = 0; i < m; ++i) r += fwd.comp[c][i] * ratio[i];
    const double da = fwd.priors[c] * (1.0 - r);
    for (std::size_t jd = 0; jd < d; ++jd) {
      grad_v[c * d + jd] += da * h[jd];
      grad_h[jd] += da * params.prior_directions(c, jd);
    }
    for (std::size_t i = 0; i < m; ++i)
      dz[i] = fwd.priors[c] * fwd.comp[c][i] * (r - ratio[i]);
    const std::vector<double> dg = head.word.tmatvec(dz);
    for (std::size_t i = 0; i < m; ++i) {
      auto grow = blk.word.row(i);
      for (std::size_t jd = 0; jd < d; ++jd) grow[jd] += dz[i] * fwd.g[c][jd];
    }
    std::span<double> grad_u(blk.head_params.data() + k * d + c * d * d, d * d);
    for (std::size_t aa = 0; aa < d; ++aa) {
      const double t = (1.0 - fwd.g[c][aa] * fwd.g[c][aa]) * dg[aa];
      for (std::size_t jd = 0; jd < d; ++jd) {
        grad_u[aa * d + jd] += t * h[jd];
        grad_h[jd] += t * params.projections[c](aa, jd);
      }
    }
  }
  return loss;
}

}  // namespace detail

/// Fits an already-constructed head and context matrix to the task by
/// minimizing mean cross-entropy.  Metric evaluation always runs over the
/// full task regardless of the batch setting.
inline FitResult fit_with(HeadModel head, Matrix contexts, const SyntheticTask& task,
                          const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = task.spec.contexts, m = task.spec.vocab, d = task.spec.dim;
  if (contexts.rows() != n || contexts.cols() != d)
    throw std::invalid_argument("fit_with: context matrix shape mismatch");
  if (head.vocab() != m || head.dim() != d)
    throw std::invalid_argument("fit_with: head shape inconsistent with task");

  LmsHead* lms = std::get_if<LmsHead>(&head.kind);
  MosHead* mos = std::get_if<MosHead>(&head.kind);
  Plif* plif = lms ? std::get_if<Plif>(&lms->fn) : nullptr;
  std::size_t n_head_params = 0;
  if (lms && has_params(lms->fn)) n_head_params = param_count(lms->fn);
  if (mos) n_head_params = mos->params.param_count();

  const std::size_t batch = (cfg.batch == 0 || cfg.batch > n) ? n : cfg.batch;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const std::size_t n_blocks = (batch + kContextBlock - 1) / kContextBlock;

  std::vector<detail::BlockGrad> blocks(n_blocks);
  std::vector<Plif::GradAccumulator> plif_accs;
  Matrix grad_contexts(n, d);
  detail::Optimizer opt(cfg);
  std::vector<double> head_grad(n_head_params);
  MetricsReport metrics;
  metrics.loss_series.reserve(cfg.steps);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::size_t batch_start = (batch == n) ? 0 : (step * batch) % n;
    for (std::size_t b = 0; b < n_blocks; ++b)
      blocks[b].reset(m, d, (plif != nullptr) ? 0 : n_head_params);
    if (plif) {
      plif_accs.clear();
      plif_accs.resize(n_blocks, Plif::GradAccumulator(plif->segments()));
    }
    if (batch != n)
      for (double& x : grad_contexts.flat()) x = 0.0;

    parallel_blocks(batch, kContextBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
      std::vector<double> z, a, dz;
      detail::BlockGrad& blk = blocks[b];
      for (std::size_t idx = begin; idx < end; ++idx) {
        const std::size_t j = (batch_start + idx) % n;
        const auto h = contexts.row(j);
        const auto p = task.p_star.row(j);
        auto gh = grad_contexts.row(j);
        double loss;
        if (mos) {
          loss = detail::mos_context_pass(head, mos->params, h, p, gh, blk);
        } else {
          loss = detail::lms_context_pass(head, lms, h, p, gh, blk,
                                          plif ? &plif_accs[b] : nullptr, z, a, dz);
        }
        for (double& x : gh) x *= inv_batch;
        blk.loss += loss;
      }
    });

    Matrix grad_word(m, d);
    double loss_sum = 0.0;
    if (!head_grad.empty()) head_grad.assign(n_head_params, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      grad_word += blocks[b].word;
      loss_sum += blocks[b].loss;
      for (std::size_t i = 0; i < blocks[b].head_params.size(); ++i)
        head_grad[i] += blocks[b].head_params[i];
    }
    if (plif) {
      Plif::GradAccumulator total(plif->segments());
      for (const auto& acc : plif_accs) total.merge(acc);
      head_grad = total.finalize(*plif);
    }
    grad_word *= inv_batch;
    for (double& x : head_grad) x *= inv_batch;

    const double loss = loss_sum * inv_batch;
    if (!std::isfinite(loss)) throw TrainingDiverged(step);
    metrics.loss_series.push_back(loss);

    if (cfg.train_word) opt.update(0, head.word.flat(), grad_word.flat());
    opt.update(1, contexts.flat(), grad_contexts.flat());
    if (n_head_params > 0) {
      if (mos) {
        auto p = mos->params.params_flat();
        opt.update(2, p, head_grad);
        mos->params.set_params_flat(p);
      } else {
        auto p = params_flat(lms->fn);
        opt.update(2, p, head_grad);
        set_params_flat(lms->fn, p);
        plif = std::get_if<Plif>(&lms->fn);
      }
    }
  }

  const Matrix q = prob_table(head, contexts);
  metrics.mode_match = mode_match(task.p_star, q);
  metrics.mean_kl = mean_kl(task.p_star, q);
  double ce = 0.0;
  for (std::size_t j = 0; j < n; ++j) ce += cross_entropy(task.p_star.row(j), q.row(j));
  metrics.final_ce = ce / static_cast<double>(n);
  return FitResult{std::move(head), std::move(contexts), std::move(metrics)};
}

/// Builds the head and free context vectors from the config seed, then fits.
inline FitResult fit_task(const SyntheticTask& task, const HeadConfig& hcfg,
                          const TrainConfig& cfg) {
  Rng init_rng = Rng::stream(cfg.seed, 0x5eedu);
  HeadModel head = make_head(hcfg, task.spec.vocab, task.spec.dim, cfg.init_scale, init_rng);
  Matrix contexts =
      Matrix::gaussian(task.spec.contexts, task.spec.dim, init_rng, cfg.init_scale);
  return fit_with(std::move(head), std::move(contexts), task, cfg);
}

}  // namespace softlab
