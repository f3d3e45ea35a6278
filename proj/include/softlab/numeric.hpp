#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace softlab {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// log(1 + exp(x)) without overflow on either side.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Inverse of softplus; y must be positive.
inline double softplus_inv(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("softplus_inv: argument must be > 0");
  if (y > 30.0) return y;  // softplus(y) - y underflows past here
  return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log sum_i exp(v_i), max-shifted.  Entries may be -inf (empty mass) but
/// not all of them, and nothing may be +inf or NaN.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  double m = -kInf;
  for (double x : v) {
    if (std::isnan(x) || x == kInf)
      throw std::invalid_argument("log_sum_exp: entries must be finite or -inf");
    m = std::max(m, x);
  }
  if (m == -kInf) throw std::invalid_argument("log_sum_exp: all entries are -inf");
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline void softmax_into(std::span<const double> v, std::span<double> out) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  if (out.size() != v.size()) throw std::invalid_argument("softmax: size mismatch");
  double m = -kInf;
  for (double x : v) {
    if (std::isnan(x) || x == kInf)
      throw std::invalid_argument("softmax: entries must be finite or -inf");
    m = std::max(m, x);
  }
  if (m == -kInf) throw std::invalid_argument("softmax: all entries are -inf");
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (double& x : out) x *= inv;
}

inline std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out(v.size());
  softmax_into(v, out);
  return out;
}

/// Shannon entropy -sum p log p with the 0 log 0 = 0 convention.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // ties keep the lowest index
  return best;
}

}  // namespace softlab
