#pragma once

#include <json.hpp>
#include <stdexcept>
#include <string>

#include "softlab/heads.hpp"
#include "softlab/monotone.hpp"
#include "softlab/trainer.hpp"

// JSON forms for the pieces that cross the process boundary.  Matrices
// travel as the plain CSV interchange; JSON carries parameters and metrics.

namespace softlab {

using json = nlohmann::json;

/// PLIF wire format: {"T": .., "K": .., "v_raw": [..], "b0": ..}.
inline json plif_to_json(const Plif& plif) {
  return json{{"T", plif.half_range()},
              {"K", plif.segments()},
              {"v_raw", plif.v_raw()},
              {"b0", plif.b0()}};
}

inline Plif plif_from_json(const json& j) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "T" && key != "K" && key != "v_raw" && key != "b0")
      throw std::invalid_argument("plif_from_json: unknown key '" + key + "'");
  }
  const double t = j.at("T").get<double>();
  const std::size_t k = j.at("K").get<std::size_t>();
  auto v_raw = j.at("v_raw").get<std::vector<double>>();
  const double b0 = j.at("b0").get<double>();
  if (v_raw.size() != k)
    throw std::invalid_argument("plif_from_json: v_raw length does not match K");
  return Plif(t, std::move(v_raw), b0);
}

inline json monotone_fn_to_json(const MonotoneFn& fn) {
  return std::visit(
      [](const auto& f) -> json {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Identity>) return json{{"type", "identity"}};
        else if constexpr (std::is_same_v<T, Sigsoftmax>) return json{{"type", "sigsoftmax"}};
        else if constexpr (std::is_same_v<T, Power>)
          return json{{"type", "power"}, {"p", f.exponent}};
        else if constexpr (std::is_same_v<T, MonotonicMlp>)
          return json{{"type", "mlp"}, {"hidden", f.hidden()}, {"params", f.params_flat()}};
        else {
          json j = plif_to_json(f);
          j["type"] = "plif";
          return j;
        }
      },
      fn);
}

/// Head parameters with a variant tag; the embedding matrices travel
/// separately as CSV.
inline json head_params_to_json(const HeadModel& head) {
  json j{{"head", head_name(head)}, {"vocab", head.vocab()}, {"dim", head.dim()}};
  if (const auto* lms = std::get_if<LmsHead>(&head.kind)) {
    j["fn"] = monotone_fn_to_json(lms->fn);
  } else if (const auto* mos = std::get_if<MosHead>(&head.kind)) {
    j["components"] = mos->params.components();
    j["params"] = mos->params.params_flat();
  }
  return j;
}

inline json metrics_to_json(const MetricsReport& metrics, bool with_loss_series = false) {
  json j{{"mean_kl", metrics.mean_kl},
         {"mode_match", metrics.mode_match},
         {"final_ce", metrics.final_ce},
         {"steps", metrics.loss_series.size()}};
  if (with_loss_series) j["loss"] = metrics.loss_series;
  return j;
}

}  // namespace softlab
