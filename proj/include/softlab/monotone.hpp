#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "softlab/numeric.hpp"

namespace softlab {

// ---------------------------------------------------------------------------
// Pointwise monotone functions applied to logits before the softmax.
// Identity and Sigsoftmax are fixed; Power is for rank experiments (only odd
// exponents are increasing); MonotonicMlp and Plif carry learnable
// parameters exposed as flat vectors for optimizers and gradient checks.
// ---------------------------------------------------------------------------

struct Identity {};

/// ss(x) = 2x - log(1 + exp(x)); equivalent to multiplying the softmax
/// exponential by a sigmoid.  Strictly increasing, ss'(x) = 2 - sigmoid(x).
struct Sigsoftmax {};

struct Power {
  int exponent = 3;  // increasing on all of R only when odd
};

inline double sigsoftmax_value(double x) {
  // 2x - softplus(x); the x > 0 branch rewrites to x - log1p(exp(-x)), which
  // degrades gracefully to x - exp(-x) for large x.
  if (x > 0.0) return x - std::log1p(std::exp(-x));
  return 2.0 * x - std::log1p(std::exp(x));
}

inline double integer_power(double x, int p) {
  double acc = 1.0;
  for (int i = 0; i < p; ++i) acc *= x;
  return acc;
}

/// One-hidden-layer monotone network: f(x) = sum_k v_k sigmoid(u_k x + b_k) + b,
/// with u_k, v_k kept positive by storing raw parameters mapped through
/// softplus.  The effective weights and the softplus chain factors only
/// change with the parameters, so they are cached; per-sample work is one
/// sigmoid per hidden unit.  Flat layout: [u_raw | v_raw | b_hidden | b_out].
class MonotonicMlp {
 public:
  explicit MonotonicMlp(std::size_t hidden)
      : u_raw_(hidden, softplus_inv(1.0)),
        v_raw_(hidden, softplus_inv(4.0 / static_cast<double>(hidden))),
        b_hidden_(hidden, 0.0) {
    refresh_cache();
  }

  MonotonicMlp(std::vector<double> u_raw, std::vector<double> v_raw,
               std::vector<double> b_hidden, double b_out)
      : u_raw_(std::move(u_raw)),
        v_raw_(std::move(v_raw)),
        b_hidden_(std::move(b_hidden)),
        b_out_(b_out) {
    if (u_raw_.size() != v_raw_.size() || u_raw_.size() != b_hidden_.size())
      throw std::invalid_argument("MonotonicMlp: parameter arrays must have equal length");
    refresh_cache();
  }

  std::size_t hidden() const { return u_raw_.size(); }

  double value(double x) const {
    double acc = b_out_;
    for (std::size_t k = 0; k < u_raw_.size(); ++k)
      acc += v_eff_[k] * sigmoid(u_eff_[k] * x + b_hidden_[k]);
    return acc;
  }

  double slope(double x) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < u_raw_.size(); ++k) {
      const double s = sigmoid(u_eff_[k] * x + b_hidden_[k]);
      acc += v_eff_[k] * u_eff_[k] * s * (1.0 - s);
    }
    return acc;
  }

  std::size_t param_count() const { return 3 * u_raw_.size() + 1; }

  std::vector<double> params_flat() const {
    std::vector<double> p;
    p.reserve(param_count());
    p.insert(p.end(), u_raw_.begin(), u_raw_.end());
    p.insert(p.end(), v_raw_.begin(), v_raw_.end());
    p.insert(p.end(), b_hidden_.begin(), b_hidden_.end());
    p.push_back(b_out_);
    return p;
  }

  void set_params_flat(std::span<const double> p) {
    const std::size_t k = u_raw_.size();
    if (p.size() != param_count())
      throw std::invalid_argument("MonotonicMlp: wrong parameter count");
    std::copy(p.begin(), p.begin() + k, u_raw_.begin());
    std::copy(p.begin() + k, p.begin() + 2 * k, v_raw_.begin());
    std::copy(p.begin() + 2 * k, p.begin() + 3 * k, b_hidden_.begin());
    b_out_ = p[3 * k];
    refresh_cache();
  }

  /// Adds d(loss)/d(raw params) for a single sample into grad (flat layout).
  void accumulate_grad(double x, double upstream, std::span<double> grad) const {
    backward(x, upstream, grad);
  }

  /// Fused backward: accumulates the raw-parameter gradient and returns
  /// f'(x), sharing one sigmoid pass per hidden unit.
  double backward(double x, double upstream, std::span<double> grad) const {
    const std::size_t k = u_raw_.size();
    if (grad.size() != param_count())
      throw std::invalid_argument("MonotonicMlp: gradient buffer size mismatch");
    double slope_acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double u = u_eff_[i];
      const double v = v_eff_[i];
      const double s = sigmoid(u * x + b_hidden_[i]);
      const double ds = s * (1.0 - s);
      grad[i] += upstream * v * ds * x * du_raw_[i];   // u_raw
      grad[k + i] += upstream * s * dv_raw_[i];        // v_raw
      grad[2 * k + i] += upstream * v * ds;            // b_hidden
      slope_acc += v * u * ds;
    }
    grad[3 * k] += upstream;  // b_out
    return slope_acc;
  }

 private:
  void refresh_cache() {
    const std::size_t k = u_raw_.size();
    u_eff_.resize(k);
    v_eff_.resize(k);
    du_raw_.resize(k);
    dv_raw_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      u_eff_[i] = softplus(u_raw_[i]);
      v_eff_[i] = softplus(v_raw_[i]);
      du_raw_[i] = sigmoid(u_raw_[i]);
      dv_raw_[i] = sigmoid(v_raw_[i]);
    }
  }

  std::vector<double> u_raw_;
  std::vector<double> v_raw_;
  std::vector<double> b_hidden_;
  double b_out_ = 0.0;
  std::vector<double> u_eff_;   // softplus(u_raw)
  std::vector<double> v_eff_;   // softplus(v_raw)
  std::vector<double> du_raw_;  // d u_eff / d u_raw
  std::vector<double> dv_raw_;  // d v_eff / d v_raw
};

/// Piecewise Linear Increasing Function on K equal segments of [-T, T].
/// Knots l_i = -T + 2Ti/K are implicit.  Slopes are softplus(v_raw), so the
/// function is strictly increasing for any raw values; continuity chains the
/// per-segment bias from b0 and the running slope sum.  Inputs outside
/// [-T, T] extrapolate linearly with the boundary segment's slope.
/// Flat parameter layout: [v_raw | b0].
class Plif {
 public:
  /// Identity-initialized: every slope 1, b0 = 0.
  Plif(double half_range, std::size_t segments)
      : half_range_(half_range), v_raw_(segments, softplus_inv(1.0)) {
    if (!(half_range > 0.0)) throw std::invalid_argument("Plif: half_range must be > 0");
    if (segments == 0) throw std::invalid_argument("Plif: need at least one segment");
    refresh_cache();
  }

  Plif(double half_range, std::vector<double> v_raw, double b0)
      : half_range_(half_range), v_raw_(std::move(v_raw)), b0_(b0) {
    if (!(half_range > 0.0)) throw std::invalid_argument("Plif: half_range must be > 0");
    if (v_raw_.empty()) throw std::invalid_argument("Plif: need at least one segment");
    refresh_cache();
  }

  /// Builds the PLIF interpolating strictly increasing samples y_i at the
  /// K+1 knots of [-T, T]; sample x's must sit on the knots.
  static Plif interpolate(std::span<const std::pair<double, double>> samples,
                          double half_range, std::size_t segments) {
    if (samples.size() != segments + 1)
      throw std::invalid_argument("Plif::interpolate: need one sample per knot");
    const double step = 2.0 * half_range / static_cast<double>(segments);
    std::vector<double> v_raw(segments);
    for (std::size_t i = 0; i <= segments; ++i) {
      const double knot = -half_range + step * static_cast<double>(i);
      if (std::abs(samples[i].first - knot) > 1e-9 * std::max(1.0, half_range))
        throw std::invalid_argument("Plif::interpolate: sample abscissae must be the knots");
    }
    for (std::size_t i = 0; i < segments; ++i) {
      const double rise = samples[i + 1].second - samples[i].second;
      if (!(rise > 0.0))
        throw std::invalid_argument("Plif::interpolate: samples must be strictly increasing");
      v_raw[i] = softplus_inv(rise / step);
    }
    const double s0 = softplus(v_raw[0]);
    // f(l_0) = s0 * l_0 + b0  =>  b0 = y_0 + s0 * T
    const double b0 = samples[0].second - s0 * (-half_range);
    return Plif(half_range, std::move(v_raw), b0);
  }

  std::size_t segments() const { return v_raw_.size(); }
  double half_range() const { return half_range_; }
  double b0() const { return b0_; }
  const std::vector<double>& v_raw() const { return v_raw_; }
  const std::vector<double>& slopes() const { return s_; }

  double knot(std::size_t i) const {
    return -half_range_ + segment_width() * static_cast<double>(i);
  }

  double segment_width() const {
    return 2.0 * half_range_ / static_cast<double>(v_raw_.size());
  }

  /// Segment holding x: floor((x + T) K / 2T), clamped so x <= -T uses the
  /// first segment and x >= T the last.
  std::size_t segment_index(double x) const {
    const double t = (x + half_range_) / segment_width();
    if (t <= 0.0) return 0;
    const std::size_t k = v_raw_.size();
    const std::size_t i = static_cast<std::size_t>(t);
    return i >= k ? k - 1 : i;
  }

  double value(double x) const {
    if (!std::isfinite(x)) throw std::invalid_argument("Plif::value: non-finite input");
    const std::size_t i = segment_index(x);
    return s_[i] * (x - knot(i)) + base_[i];
  }

  double slope(double x) const {
    if (!std::isfinite(x)) throw std::invalid_argument("Plif::slope: non-finite input");
    return s_[segment_index(x)];
  }

  std::size_t param_count() const { return v_raw_.size() + 1; }

  std::vector<double> params_flat() const {
    std::vector<double> p(v_raw_);
    p.push_back(b0_);
    return p;
  }

  void set_params_flat(std::span<const double> p) {
    if (p.size() != param_count()) throw std::invalid_argument("Plif: wrong parameter count");
    std::copy(p.begin(), p.end() - 1, v_raw_.begin());
    b0_ = p.back();
    refresh_cache();
  }

  /// O(1)-per-sample gradient accumulator.  Each sample touches the slot of
  /// its own segment plus one prefix slot; finalize() resolves the prefix
  /// slots with a single reverse suffix sum and chains through softplus.
  class GradAccumulator {
   public:
    explicit GradAccumulator(std::size_t segments)
        : slope_acc_(segments, 0.0), prefix_acc_(segments, 0.0) {}

    void add(const Plif& f, double x, double upstream) {
      const std::size_t i = f.segment_index(x);
      slope_acc_[i] += upstream * (x - f.knot(i));
      if (i > 0) prefix_acc_[i - 1] += upstream;
      upstream_sum_ += upstream;
    }

    void merge(const GradAccumulator& other) {
      for (std::size_t i = 0; i < slope_acc_.size(); ++i) {
        slope_acc_[i] += other.slope_acc_[i];
        prefix_acc_[i] += other.prefix_acc_[i];
      }
      upstream_sum_ += other.upstream_sum_;
    }

    /// Gradient in the flat layout [v_raw | b0].
    std::vector<double> finalize(const Plif& f) const {
      const std::size_t k = slope_acc_.size();
      std::vector<double> grad(k + 1, 0.0);
      const double width = f.segment_width();
      double suffix = 0.0;
      for (std::size_t ri = k; ri-- > 0;) {
        suffix += prefix_acc_[ri];
        grad[ri] = slope_acc_[ri] + width * suffix;
      }
      grad[0] += f.knot(0) * upstream_sum_;  // the s_0 * l_0 continuity term
      for (std::size_t i = 0; i < k; ++i) grad[i] *= sigmoid(f.v_raw_[i]);
      grad[k] = upstream_sum_;  // b0
      return grad;
    }

   private:
    std::vector<double> slope_acc_;
    std::vector<double> prefix_acc_;
    double upstream_sum_ = 0.0;
  };

 private:
  void refresh_cache() {
    const std::size_t k = v_raw_.size();
    s_.resize(k);
    base_.resize(k);
    for (std::size_t i = 0; i < k; ++i) s_[i] = softplus(v_raw_[i]);
    // f(x) = s_i (x - l_i) + b0 + s_0 l_0 + (2T/K) sum_{j<i} s_j
    const double width = segment_width();
    double prefix = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      base_[i] = b0_ + s_[0] * knot(0) + prefix;
      prefix += width * s_[i];
    }
  }

  double half_range_;
  std::vector<double> v_raw_;
  double b0_ = 0.0;
  std::vector<double> s_;     // softplus(v_raw), cached
  std::vector<double> base_;  // value at the left knot of each segment
};

using MonotoneFn = std::variant<Identity, Sigsoftmax, Power, MonotonicMlp, Plif>;

inline double eval(const MonotoneFn& f, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("eval: non-finite input");
  return std::visit(
      [x](const auto& fn) -> double {
        using T = std::decay_t<decltype(fn)>;
        if constexpr (std::is_same_v<T, Identity>) return x;
        else if constexpr (std::is_same_v<T, Sigsoftmax>) return sigsoftmax_value(x);
        else if constexpr (std::is_same_v<T, Power>) return integer_power(x, fn.exponent);
        else return fn.value(x);
      },
      f);
}

inline double deriv(const MonotoneFn& f, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("deriv: non-finite input");
  return std::visit(
      [x](const auto& fn) -> double {
        using T = std::decay_t<decltype(fn)>;
        if constexpr (std::is_same_v<T, Identity>) return 1.0;
        else if constexpr (std::is_same_v<T, Sigsoftmax>) return 2.0 - sigmoid(x);
        else if constexpr (std::is_same_v<T, Power>)
          return fn.exponent * integer_power(x, fn.exponent - 1);
        else return fn.slope(x);
      },
      f);
}

inline bool has_params(const MonotoneFn& f) {
  return std::holds_alternative<MonotonicMlp>(f) || std::holds_alternative<Plif>(f);
}

inline std::size_t param_count(const MonotoneFn& f) {
  if (const auto* mlp = std::get_if<MonotonicMlp>(&f)) return mlp->param_count();
  if (const auto* plif = std::get_if<Plif>(&f)) return plif->param_count();
  return 0;
}

inline std::vector<double> params_flat(const MonotoneFn& f) {
  if (const auto* mlp = std::get_if<MonotonicMlp>(&f)) return mlp->params_flat();
  if (const auto* plif = std::get_if<Plif>(&f)) return plif->params_flat();
  throw std::invalid_argument("params_flat: function has no parameters");
}

inline void set_params_flat(MonotoneFn& f, std::span<const double> p) {
  if (auto* mlp = std::get_if<MonotonicMlp>(&f)) return mlp->set_params_flat(p);
  if (auto* plif = std::get_if<Plif>(&f)) return plif->set_params_flat(p);
  throw std::invalid_argument("set_params_flat: function has no parameters");
}

/// Single-sample parameter gradient in the variant's flat layout.
inline std::vector<double> param_grad(const MonotoneFn& f, double x, double upstream) {
  if (!std::isfinite(x)) throw std::invalid_argument("param_grad: non-finite input");
  if (const auto* mlp = std::get_if<MonotonicMlp>(&f)) {
    std::vector<double> grad(mlp->param_count(), 0.0);
    mlp->accumulate_grad(x, upstream, grad);
    return grad;
  }
  if (const auto* plif = std::get_if<Plif>(&f)) {
    Plif::GradAccumulator acc(plif->segments());
    acc.add(*plif, x, upstream);
    return acc.finalize(*plif);
  }
  throw std::invalid_argument("param_grad: function has no parameters");
}

inline void apply(const MonotoneFn& f, std::span<const double> in, std::span<double> out) {
  if (in.size() != out.size()) throw std::invalid_argument("apply: size mismatch");
  std::visit(
      [&](const auto& fn) {
        using T = std::decay_t<decltype(fn)>;
        for (std::size_t i = 0; i < in.size(); ++i) {
          if constexpr (std::is_same_v<T, Identity>) out[i] = in[i];
          else if constexpr (std::is_same_v<T, Sigsoftmax>) out[i] = sigsoftmax_value(in[i]);
          else if constexpr (std::is_same_v<T, Power>) out[i] = integer_power(in[i], fn.exponent);
          else out[i] = fn.value(in[i]);
        }
      },
      f);
}

inline void apply_deriv(const MonotoneFn& f, std::span<const double> in,
                        std::span<double> out) {
  if (in.size() != out.size()) throw std::invalid_argument("apply_deriv: size mismatch");
  std::visit(
      [&](const auto& fn) {
        using T = std::decay_t<decltype(fn)>;
        for (std::size_t i = 0; i < in.size(); ++i) {
          if constexpr (std::is_same_v<T, Identity>) out[i] = 1.0;
          else if constexpr (std::is_same_v<T, Sigsoftmax>) out[i] = 2.0 - sigmoid(in[i]);
          else if constexpr (std::is_same_v<T, Power>)
            out[i] = fn.exponent * integer_power(in[i], fn.exponent - 1);
          else out[i] = fn.slope(in[i]);
        }
      },
      f);
}

inline std::string fn_name(const MonotoneFn& f) {
  return std::visit(
      [](const auto& fn) -> std::string {
        using T = std::decay_t<decltype(fn)>;
        if constexpr (std::is_same_v<T, Identity>) return "identity";
        else if constexpr (std::is_same_v<T, Sigsoftmax>) return "sigsoftmax";
        else if constexpr (std::is_same_v<T, Power>)
          return "power" + std::to_string(fn.exponent);
        else if constexpr (std::is_same_v<T, MonotonicMlp>) return "mlp";
        else return "plif";
      },
      f);
}

}  // namespace softlab
