#pragma once

#include <cstdint>
#include <stdexcept>

#include "softlab/matrix.hpp"
#include "softlab/numeric.hpp"
#include "softlab/rng.hpp"

namespace softlab {

/// N independent "true" categorical distributions over an M-word vocabulary,
/// each drawn from a symmetric Dirichlet with concentration alpha.
struct SyntheticTaskSpec {
  double alpha = 0.1;
  std::size_t vocab = 100;     // M
  std::size_t contexts = 2000; // N
  std::size_t dim = 5;         // D, used by the trainer
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("SyntheticTaskSpec: alpha must be > 0");
    if (vocab < 2) throw std::invalid_argument("SyntheticTaskSpec: vocab must be >= 2");
    if (contexts < 1) throw std::invalid_argument("SyntheticTaskSpec: contexts must be >= 1");
    if (dim < 1) throw std::invalid_argument("SyntheticTaskSpec: dim must be >= 1");
  }
};

struct SyntheticTask {
  SyntheticTaskSpec spec;
  Matrix p_star;  // N x M, strictly positive rows summing to 1
};

/// One draw from Dir(alpha, ..., alpha): M Gamma(alpha, 1) variates
/// normalized to sum 1.  Normalization runs through the log domain so that
/// small-alpha draws keep strictly positive entries.
inline std::vector<double> sample_dirichlet(double alpha, std::size_t m, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sample_dirichlet: alpha must be > 0");
  if (m < 2) throw std::invalid_argument("sample_dirichlet: need at least 2 categories");
  std::vector<double> log_g(m);
  for (double& x : log_g) x = std::log(rng.gamma(alpha));
  const double log_norm = log_sum_exp(log_g);
  std::vector<double> p(m);
  for (std::size_t i = 0; i < m; ++i) p[i] = std::exp(log_g[i] - log_norm);
  return p;
}

/// Row j comes from the substream (seed, j), so the same seed reproduces the
/// task bitwise and growing N appends rows without changing earlier ones.
inline SyntheticTask build_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  SyntheticTask task{spec, Matrix(spec.contexts, spec.vocab)};
  for (std::size_t j = 0; j < spec.contexts; ++j) {
    Rng row_rng = Rng::stream(spec.seed, j);
    const auto row = sample_dirichlet(spec.alpha, spec.vocab, row_rng);
    for (std::size_t i = 0; i < spec.vocab; ++i) task.p_star(j, i) = row[i];
  }
  return task;
}

}  // namespace softlab
