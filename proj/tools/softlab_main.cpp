// softlab: softmax output-layer laboratory.
//
// Subcommands cover the synthetic Dirichlet experiments (synth, sweep), the
// rank experiments (ranklab power|square|lemma4|surrogate), the entropy-
// duality and low-rank-fit verifiers (theory maxent|eckart-young), and the
// PLIF utilities (plif-approx, plif-dump).
//
// Configuration precedence: built-in defaults < --config JSON < flags.
// All file output is byte-stable for a fixed config and seed; wall-clock
// timing is only emitted when --timing is passed.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "softlab/ranklab.hpp"
#include "softlab/serialize.hpp"
#include "softlab/theory.hpp"
#include "softlab/trainer.hpp"

namespace {

using softlab::json;

constexpr const char* kVersion = "softlab 0.1.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// -----------------------------------------------------------------------------
// Config layering: defaults < JSON file < explicit flags.
// -----------------------------------------------------------------------------

class OptionSet {
 public:
  explicit OptionSet(CLI::App* cmd) : cmd_(cmd) {
    cmd->add_option("--config", config_path_,
                    "JSON config file; explicit flags override its values");
  }

  template <class T>
  CLI::Option* add(const std::string& flag, T& target, const std::string& help) {
    CLI::Option* opt = cmd_->add_option(flag, target, help);
    const std::string key = json_key(flag);
    known_keys_.insert(key);
    appliers_.push_back([this, flag, key, &target](const json& j) {
      if (!j.contains(key) || cmd_->count(flag) > 0) return;
      try {
        target = j.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    });
    return opt;
  }

  /// Loads the JSON layer after CLI11 has parsed; unknown keys are errors.
  void apply_config() const {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) throw ConfigError("cannot open config file: " + config_path_);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_path_ + ": " + e.what());
    }
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (!known_keys_.count(key))
        throw ConfigError("unknown config key '" + key + "' in " + config_path_);
    }
    for (const auto& apply : appliers_) apply(j);
  }

 private:
  static std::string json_key(std::string flag) {
    while (!flag.empty() && flag.front() == '-') flag.erase(flag.begin());
    for (char& c : flag)
      if (c == '-') c = '_';
    return flag;
  }

  CLI::App* cmd_;
  std::string config_path_;
  std::set<std::string> known_keys_;
  std::vector<std::function<void(const json&)>> appliers_;
};

// -----------------------------------------------------------------------------
// Output helpers
// -----------------------------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << text;
}

void write_report(const std::string& path, const std::string& subcommand, json config,
                  json body, std::optional<double> timing_ms) {
  json report{{"tool", "softlab"},
              {"version", kVersion},
              {"subcommand", subcommand},
              {"config", std::move(config)},
              {"report", std::move(body)}};
  if (timing_ms) report["timing_ms"] = *timing_ms;
  write_text(path, report.dump(2) + "\n");
}

std::string fmt(double x) { return softlab::format_double(x); }

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_ = clock::now();
};

// -----------------------------------------------------------------------------
// synth / sweep
// -----------------------------------------------------------------------------

struct SynthOptions {
  double alpha = 0.1;
  std::size_t vocab = 100;
  std::size_t contexts = 2000;
  std::size_t dim = 5;
  std::string head = "linear";
  std::uint64_t seed = 0;
  std::size_t steps = 3000;
  double lr = 1e-2;
  std::string optimizer = "adam";
  double momentum = 0.9;
  std::size_t batch = 0;
  double init_scale = 0.1;
  std::size_t mlp_hidden = 32;
  std::size_t knots = 1000;
  double plif_range = 10.0;
  int power = 3;
  std::size_t mos_k = 3;
};

void register_synth_options(OptionSet& opts, SynthOptions& o) {
  opts.add("--alpha", o.alpha, "Dirichlet concentration");
  opts.add("--vocab", o.vocab, "vocabulary size M");
  opts.add("--contexts", o.contexts, "context count N");
  opts.add("--dim", o.dim, "embedding dimension D");
  opts.add("--seed", o.seed, "experiment seed");
  opts.add("--steps", o.steps, "optimization steps");
  opts.add("--lr", o.lr, "learning rate");
  opts.add("--optimizer", o.optimizer, "sgd | momentum | adam");
  opts.add("--momentum", o.momentum, "momentum coefficient");
  opts.add("--batch", o.batch, "context batch size (0 = full batch)");
  opts.add("--init-scale", o.init_scale, "Gaussian init scale");
  opts.add("--mlp-hidden", o.mlp_hidden, "hidden units for lms-mlp");
  opts.add("--knots", o.knots, "PLIF segment count for lms-plif");
  opts.add("--plif-range", o.plif_range, "PLIF half range T");
  opts.add("--power", o.power, "exponent for lms-power");
  opts.add("--mos-k", o.mos_k, "mixture components for mos");
}

softlab::HeadConfig parse_head(const SynthOptions& o) {
  using softlab::HeadConfig;
  static const std::map<std::string, std::pair<HeadConfig::Kind, HeadConfig::Fn>> kHeads = {
      {"linear", {HeadConfig::Kind::Linear, HeadConfig::Fn::Identity}},
      {"lms-identity", {HeadConfig::Kind::Lms, HeadConfig::Fn::Identity}},
      {"lms-sigsoftmax", {HeadConfig::Kind::Lms, HeadConfig::Fn::Sigsoftmax}},
      {"lms-power", {HeadConfig::Kind::Lms, HeadConfig::Fn::Power}},
      {"lms-mlp", {HeadConfig::Kind::Lms, HeadConfig::Fn::Mlp}},
      {"lms-plif", {HeadConfig::Kind::Lms, HeadConfig::Fn::Plif}},
      {"mos", {HeadConfig::Kind::Mos, HeadConfig::Fn::Identity}},
  };
  const auto it = kHeads.find(o.head);
  if (it == kHeads.end()) {
    std::string valid;
    for (const auto& [name, unused] : kHeads) {
      (void)unused;
      valid += valid.empty() ? name : (", " + name);
    }
    throw ConfigError("unknown head '" + o.head + "'; valid heads: " + valid);
  }
  HeadConfig cfg;
  cfg.kind = it->second.first;
  cfg.fn = it->second.second;
  cfg.power = o.power;
  cfg.mlp_hidden = o.mlp_hidden;
  cfg.plif_segments = o.knots;
  cfg.plif_half_range = o.plif_range;
  cfg.mos_components = o.mos_k;
  return cfg;
}

softlab::TrainConfig parse_train(const SynthOptions& o) {
  softlab::TrainConfig cfg;
  cfg.steps = o.steps;
  cfg.lr = o.lr;
  if (o.optimizer == "sgd") cfg.optimizer = softlab::OptimizerKind::Sgd;
  else if (o.optimizer == "momentum") cfg.optimizer = softlab::OptimizerKind::Momentum;
  else if (o.optimizer == "adam") cfg.optimizer = softlab::OptimizerKind::Adam;
  else throw ConfigError("unknown optimizer '" + o.optimizer + "'; valid: sgd, momentum, adam");
  cfg.momentum = o.momentum;
  cfg.batch = o.batch;
  cfg.init_scale = o.init_scale;
  cfg.seed = o.seed;
  return cfg;
}

std::string head_param_string(const SynthOptions& o) {
  if (o.head == "lms-mlp") return "hidden=" + std::to_string(o.mlp_hidden);
  if (o.head == "lms-plif")
    return "knots=" + std::to_string(o.knots) + ";range=" + fmt(o.plif_range);
  if (o.head == "lms-power") return "p=" + std::to_string(o.power);
  if (o.head == "mos") return "components=" + std::to_string(o.mos_k);
  return "";
}

json synth_config_json(const SynthOptions& o) {
  return json{{"alpha", o.alpha},         {"vocab", o.vocab},
              {"contexts", o.contexts},   {"dim", o.dim},
              {"head", o.head},           {"seed", o.seed},
              {"steps", o.steps},         {"lr", o.lr},
              {"optimizer", o.optimizer}, {"momentum", o.momentum},
              {"batch", o.batch},         {"init_scale", o.init_scale},
              {"mlp_hidden", o.mlp_hidden}, {"knots", o.knots},
              {"plif_range", o.plif_range}, {"power", o.power},
              {"mos_k", o.mos_k}};
}

constexpr const char* kSweepHeader =
    "alpha,vocab,contexts,dim,head,head_params,mean_kl,mode_match,final_ce,seed,"
    "runtime_ms\n";

std::string sweep_row(const SynthOptions& o, const softlab::MetricsReport& metrics,
                      std::optional<double> timing_ms) {
  std::string row = fmt(o.alpha) + "," + std::to_string(o.vocab) + "," +
                    std::to_string(o.contexts) + "," + std::to_string(o.dim) + "," +
                    o.head + "," + head_param_string(o) + "," + fmt(metrics.mean_kl) +
                    "," + fmt(metrics.mode_match) + "," + fmt(metrics.final_ce) + "," +
                    std::to_string(o.seed) + ",";
  if (timing_ms) row += fmt(*timing_ms);
  return row + "\n";
}

struct SynthRun {
  softlab::FitResult fit;
  double elapsed_ms = 0.0;
};

SynthRun run_one_synth(const SynthOptions& o) {
  const softlab::SyntheticTaskSpec spec{o.alpha, o.vocab, o.contexts, o.dim, o.seed};
  const softlab::SyntheticTask task = softlab::build_task(spec);
  const softlab::HeadConfig head = parse_head(o);
  const softlab::TrainConfig train = parse_train(o);
  Stopwatch watch;
  SynthRun run{softlab::fit_task(task, head, train), 0.0};
  run.elapsed_ms = watch.ms();
  return run;
}

struct SynthOutputs {
  std::string csv;
  std::string report;
  std::string loss_csv;
  std::string save_plif;
  std::string save_task;    // prefix: <prefix>.csv + <prefix>.json sidecar
  std::string save_model;   // prefix: <prefix>_head.json + _W.csv + _H.csv
  std::string save_logprobs;
  bool timing = false;
};

int cmd_synth(const SynthOptions& o, const SynthOutputs& out) {
  const SynthRun run = run_one_synth(o);
  const auto& metrics = run.fit.metrics;
  const std::optional<double> elapsed =
      out.timing ? std::optional<double>(run.elapsed_ms) : std::nullopt;

  if (!out.csv.empty()) write_text(out.csv, kSweepHeader + sweep_row(o, metrics, elapsed));
  if (!out.loss_csv.empty()) {
    std::string text = "step,loss\n";
    for (std::size_t i = 0; i < metrics.loss_series.size(); ++i)
      text += std::to_string(i) + "," + fmt(metrics.loss_series[i]) + "\n";
    write_text(out.loss_csv, text);
  }
  if (!out.save_plif.empty()) {
    const auto* lms = std::get_if<softlab::LmsHead>(&run.fit.model.kind);
    const auto* plif = lms ? std::get_if<softlab::Plif>(&lms->fn) : nullptr;
    if (!plif) throw ConfigError("--save-plif requires --head lms-plif");
    write_text(out.save_plif, softlab::plif_to_json(*plif).dump(2) + "\n");
  }
  if (!out.save_task.empty()) {
    const softlab::SyntheticTaskSpec spec{o.alpha, o.vocab, o.contexts, o.dim, o.seed};
    softlab::save_matrix_csv(out.save_task + ".csv", softlab::build_task(spec).p_star);
    write_text(out.save_task + ".json",
               json{{"alpha", spec.alpha},
                    {"vocab", spec.vocab},
                    {"contexts", spec.contexts},
                    {"dim", spec.dim},
                    {"seed", spec.seed}}
                       .dump(2) +
                   "\n");
  }
  if (!out.save_model.empty()) {
    write_text(out.save_model + "_head.json",
               softlab::head_params_to_json(run.fit.model).dump(2) + "\n");
    softlab::save_matrix_csv(out.save_model + "_W.csv", run.fit.model.word);
    softlab::save_matrix_csv(out.save_model + "_H.csv", run.fit.contexts);
  }
  if (!out.save_logprobs.empty())
    softlab::save_matrix_csv(out.save_logprobs,
                             softlab::log_prob_matrix(run.fit.model, run.fit.contexts).log_probs);
  if (!out.report.empty())
    write_report(out.report, "synth", synth_config_json(o),
                 softlab::metrics_to_json(metrics), elapsed);
  std::cout << "synth head=" << o.head << " mean_kl=" << fmt(metrics.mean_kl)
            << " mode_match=" << fmt(metrics.mode_match);
  if (out.timing) std::cout << " runtime_ms=" << fmt(run.elapsed_ms);
  std::cout << "\n";
  return 0;
}

int cmd_sweep(const SynthOptions& base, const std::vector<double>& alphas,
              const std::vector<std::size_t>& vocabs, const std::vector<std::size_t>& dims,
              const std::vector<std::string>& heads, const std::vector<std::uint64_t>& seeds,
              const std::string& csv_path, const std::string& report_path, bool timing) {
  for (const std::string& head : heads) {
    SynthOptions probe = base;
    probe.head = head;
    parse_head(probe);  // validate every head before any run starts
  }
  std::string csv = kSweepHeader;
  std::size_t rows = 0;
  for (double alpha : alphas)
    for (std::size_t vocab : vocabs)
      for (std::size_t dim : dims)
        for (const std::string& head : heads)
          for (std::uint64_t seed : seeds) {
            SynthOptions o = base;
            o.alpha = alpha;
            o.vocab = vocab;
            o.dim = dim;
            o.head = head;
            o.seed = seed;
            const SynthRun run = run_one_synth(o);
            csv += sweep_row(o, run.fit.metrics,
                             timing ? std::optional<double>(run.elapsed_ms) : std::nullopt);
            ++rows;
            std::cout << "sweep alpha=" << fmt(alpha) << " vocab=" << vocab
                      << " dim=" << dim << " head=" << head << " seed=" << seed
                      << " mean_kl=" << fmt(run.fit.metrics.mean_kl) << "\n";
          }
  write_text(csv_path, csv);
  if (!report_path.empty()) {
    json config = synth_config_json(base);
    config["alphas"] = alphas;
    config["vocabs"] = vocabs;
    config["dims"] = dims;
    config["heads"] = heads;
    config["seeds"] = seeds;
    write_report(report_path, "sweep", std::move(config), json{{"rows", rows}},
                 std::nullopt);
  }
  return 0;
}

// -----------------------------------------------------------------------------
// ranklab
// -----------------------------------------------------------------------------

int cmd_ranklab_power(const softlab::RankTrialSpec& spec, const std::string& report_path,
                      const std::string& csv_path) {
  const auto report = softlab::power_rank_trials(spec);
  json body{{"bound", report.bound},
            {"max_rank", report.max_rank},
            {"violations", report.violations},
            {"trials", spec.trials}};
  write_report(report_path, "ranklab power",
               json{{"rows", spec.rows},
                    {"cols", spec.cols},
                    {"factor_rank", spec.factor_rank},
                    {"power", spec.power},
                    {"trials", spec.trials},
                    {"seed", spec.seed}},
               std::move(body), std::nullopt);
  if (!csv_path.empty()) {
    std::string csv = "trial,rank\n";
    for (std::size_t t = 0; t < report.ranks.size(); ++t)
      csv += std::to_string(t) + "," + std::to_string(report.ranks[t]) + "\n";
    write_text(csv_path, csv);
  }
  std::cout << "ranklab power bound=" << report.bound << " max_rank=" << report.max_rank
            << " violations=" << report.violations << "\n";
  return 0;
}

int cmd_ranklab_square(std::size_t n, std::size_t trials, std::uint64_t seed,
                       const std::string& report_path, const std::string& csv_path) {
  const auto report = softlab::square_fullrank_trials(n, trials, seed);
  write_report(report_path, "ranklab square",
               json{{"n", n}, {"trials", trials}, {"seed", seed}},
               json{{"full_rank", report.full_rank},
                    {"flagged", report.flagged},
                    {"frequency", report.frequency}},
               std::nullopt);
  if (!csv_path.empty()) {
    std::string csv = "trial,rank\n";
    for (std::size_t t = 0; t < report.ranks.size(); ++t)
      csv += std::to_string(t) + "," + std::to_string(report.ranks[t]) + "\n";
    write_text(csv_path, csv);
  }
  std::cout << "ranklab square frequency=" << fmt(report.frequency) << "\n";
  return 0;
}

int cmd_ranklab_lemma4(std::size_t vocab, std::size_t contexts, std::size_t factor_rank,
                       std::size_t instances, std::uint64_t seed,
                       const std::string& report_path, const std::string& csv_path) {
  std::size_t applicable = 0, full_rank = 0;
  std::string csv = "instance,applicable,rank\n";
  for (std::size_t i = 0; i < instances; ++i) {
    softlab::Rng rng = softlab::Rng::stream(seed, i);
    const auto w = softlab::Matrix::gaussian(vocab, factor_rank, rng);
    const auto h = softlab::Matrix::gaussian(contexts, factor_rank, rng);
    std::vector<std::size_t> choice(vocab);
    for (std::size_t r = 0; r < vocab; ++r) choice[r] = r;
    try {
      const auto result = softlab::lemma4_construct(w, h, choice);
      ++applicable;
      if (result.achieved_rank == vocab) ++full_rank;
      csv += std::to_string(i) + ",1," + std::to_string(result.achieved_rank) + "\n";
    } catch (const softlab::ConstructionInapplicable&) {
      csv += std::to_string(i) + ",0,0\n";
    }
  }
  write_report(report_path, "ranklab lemma4",
               json{{"vocab", vocab},
                    {"contexts", contexts},
                    {"factor_rank", factor_rank},
                    {"instances", instances},
                    {"seed", seed}},
               json{{"applicable", applicable}, {"full_rank", full_rank}}, std::nullopt);
  if (!csv_path.empty()) write_text(csv_path, csv);
  std::cout << "ranklab lemma4 applicable=" << applicable << "/" << instances
            << " full_rank=" << full_rank << "\n";
  return 0;
}

int cmd_ranklab_surrogate(std::size_t pairs, std::uint64_t seed, std::size_t budget,
                          const std::string& report_path, const std::string& csv_path) {
  std::size_t found = 0, verified = 0;
  std::string csv = "pair,found,rank,draws\n";
  double worst_best_det = softlab::kInf;
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto pair = softlab::make_indicator_pair(seed + 1000 * (i + 1));
    try {
      const auto result = softlab::monotone_surrogate(pair.a, pair.f, 4, seed + i, budget);
      ++found;
      if (result.achieved_rank >= 4 && result.table.strictly_increasing()) ++verified;
      csv += std::to_string(i) + ",1," + std::to_string(result.achieved_rank) + "," +
             std::to_string(result.draws_used) + "\n";
    } catch (const softlab::SurrogateNotFound& e) {
      worst_best_det = std::min(worst_best_det, e.best_det);
      csv += std::to_string(i) + ",0,0,0\n";
    }
  }
  json body{{"pairs", pairs}, {"found", found}, {"verified", verified}};
  if (found < pairs) body["worst_best_det"] = worst_best_det;
  write_report(report_path, "ranklab surrogate",
               json{{"pairs", pairs}, {"seed", seed}, {"budget", budget}}, std::move(body),
               std::nullopt);
  if (!csv_path.empty()) write_text(csv_path, csv);
  std::cout << "ranklab surrogate found=" << found << "/" << pairs
            << " verified=" << verified << "\n";
  return 0;
}

// -----------------------------------------------------------------------------
// theory
// -----------------------------------------------------------------------------

int cmd_theory_maxent(std::size_t vocab, std::size_t dim, std::size_t instances,
                      std::uint64_t seed, const std::string& report_path,
                      const std::string& csv_path) {
  double max_gap = 0.0;
  std::size_t attained = 0;
  std::string csv = "instance,min_ce,max_ent,gap,entropy_p_star,attained\n";
  for (std::size_t i = 0; i < instances; ++i) {
    softlab::Rng rng = softlab::Rng::stream(seed, i);
    softlab::MaxEntInstance inst;
    inst.w = softlab::Matrix::gaussian(vocab, dim, rng);
    inst.p_star = softlab::sample_dirichlet(1.0, vocab, rng);
    const auto report = softlab::duality_gap(inst);
    max_gap = std::max(max_gap, report.gap);
    if (report.attained) ++attained;
    csv += std::to_string(i) + "," + fmt(report.min_ce) + "," + fmt(report.max_ent) + "," +
           fmt(report.gap) + "," + fmt(softlab::entropy(inst.p_star)) + "," +
           (report.attained ? "1" : "0") + "\n";
  }
  write_report(report_path, "theory maxent",
               json{{"vocab", vocab}, {"dim", dim}, {"instances", instances}, {"seed", seed}},
               json{{"max_gap", max_gap}, {"attained", attained}}, std::nullopt);
  if (!csv_path.empty()) write_text(csv_path, csv);
  std::cout << "theory maxent max_gap=" << fmt(max_gap) << " attained=" << attained << "/"
            << instances << "\n";
  return 0;
}

int cmd_theory_eckart_young(std::size_t vocab, std::size_t contexts, std::size_t dim,
                            double alpha, std::size_t instances, std::uint64_t seed,
                            const std::string& report_path, const std::string& csv_path) {
  std::string csv = "instance,bound,achieved,ratio\n";
  double worst_margin = softlab::kInf, worst_ratio = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const softlab::SyntheticTask task =
        softlab::build_task({alpha, vocab, contexts, dim, seed + i});
    softlab::Matrix target(vocab, contexts);
    for (std::size_t j = 0; j < contexts; ++j)
      for (std::size_t w = 0; w < vocab; ++w) target(w, j) = std::log(task.p_star(j, w));
    const double bound = softlab::eckart_young_bound(target, dim);
    const auto fit = softlab::mse_rank_fit(target, dim);
    const double ratio = bound > 0.0 ? fit.frobenius_error / bound : 1.0;
    worst_margin = std::min(worst_margin, fit.frobenius_error - bound);
    worst_ratio = std::max(worst_ratio, ratio);
    csv += std::to_string(i) + "," + fmt(bound) + "," + fmt(fit.frobenius_error) + "," +
           fmt(ratio) + "\n";
  }
  write_report(report_path, "theory eckart-young",
               json{{"vocab", vocab},
                    {"contexts", contexts},
                    {"dim", dim},
                    {"alpha", alpha},
                    {"instances", instances},
                    {"seed", seed}},
               json{{"worst_margin", worst_margin}, {"worst_ratio", worst_ratio}},
               std::nullopt);
  if (!csv_path.empty()) write_text(csv_path, csv);
  std::cout << "theory eckart-young worst_margin=" << fmt(worst_margin)
            << " worst_ratio=" << fmt(worst_ratio) << "\n";
  return 0;
}

// -----------------------------------------------------------------------------
// plif utilities
// -----------------------------------------------------------------------------

struct ApproxTarget {
  std::function<double(double)> fn;
  std::function<double(double)> deriv_bound;  // sup |h'| over [-T, T]
};

const std::map<std::string, ApproxTarget>& approx_targets() {
  static const std::map<std::string, ApproxTarget> kTargets = {
      {"tanh-plus-linear",
       {[](double x) { return std::tanh(x) + 0.1 * x; }, [](double) { return 1.1; }}},
      {"exp", {[](double x) { return std::exp(x); }, [](double t) { return std::exp(t); }}},
      {"softplus", {[](double x) { return softlab::softplus(x); }, [](double) { return 1.0; }}},
      {"sinh", {[](double x) { return std::sinh(x); }, [](double t) { return std::cosh(t); }}},
  };
  return kTargets;
}

int cmd_plif_approx(const std::string& target_name, double range, std::size_t knots,
                    std::size_t grid, const std::string& report_path) {
  const auto it = approx_targets().find(target_name);
  if (it == approx_targets().end()) {
    std::string valid;
    for (const auto& [name, unused] : approx_targets()) {
      (void)unused;
      valid += valid.empty() ? name : (", " + name);
    }
    throw ConfigError("unknown target '" + target_name + "'; valid targets: " + valid);
  }
  const auto& target = it->second;
  std::vector<std::pair<double, double>> samples;
  samples.reserve(knots + 1);
  for (std::size_t i = 0; i <= knots; ++i) {
    const double x = -range + 2.0 * range * static_cast<double>(i) / static_cast<double>(knots);
    samples.emplace_back(x, target.fn(x));
  }
  const softlab::Plif plif = softlab::Plif::interpolate(samples, range, knots);
  double max_error = 0.0;
  for (std::size_t g = 0; g <= grid; ++g) {
    const double x = -range + 2.0 * range * static_cast<double>(g) / static_cast<double>(grid);
    max_error = std::max(max_error, std::abs(plif.value(x) - target.fn(x)));
  }
  const double bound = 4.0 * target.deriv_bound(range) * range / static_cast<double>(knots);
  write_report(report_path, "plif-approx",
               json{{"target", target_name}, {"range", range}, {"knots", knots}, {"grid", grid}},
               json{{"max_error", max_error}, {"bound", bound}}, std::nullopt);
  std::cout << "plif-approx target=" << target_name << " max_error=" << fmt(max_error)
            << " bound=" << fmt(bound) << "\n";
  return max_error <= bound ? 0 : 3;
}

int cmd_plif_dump(const std::string& params_path, double range, std::size_t knots,
                  std::size_t points, const std::string& csv_path) {
  softlab::Plif plif = [&] {
    if (params_path.empty()) return softlab::Plif(range, knots);
    std::ifstream in(params_path);
    if (!in) throw ConfigError("cannot open PLIF parameter file: " + params_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("PLIF parameter file: ") + e.what());
    }
    return softlab::plif_from_json(j);
  }();
  std::string csv = "x,f\n";
  const double t = plif.half_range();
  for (std::size_t i = 0; i < points; ++i) {
    const double x =
        points == 1 ? -t : -t + 2.0 * t * static_cast<double>(i) / static_cast<double>(points - 1);
    csv += fmt(x) + "," + fmt(plif.value(x)) + "\n";
  }
  write_text(csv_path, csv);
  std::cout << "plif-dump segments=" << plif.segments() << " points=" << points << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kVersion) +
               " - softmax bottleneck experiments\n"
               "Thread count is read from SOFTLAB_THREADS (default: hardware)."};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "fit one head to one Dirichlet task");
  OptionSet synth_opts(synth);
  SynthOptions so;
  register_synth_options(synth_opts, so);
  synth_opts.add("--head", so.head,
                 "linear | lms-identity | lms-sigsoftmax | lms-power | lms-mlp | "
                 "lms-plif | mos");
  SynthOutputs synth_out;
  synth_out.csv = "synth.csv";
  synth_out.report = "synth_report.json";
  synth_opts.add("--csv", synth_out.csv, "sweep-format CSV output");
  synth_opts.add("--report", synth_out.report, "JSON report output");
  synth_opts.add("--loss-csv", synth_out.loss_csv, "per-step loss CSV output");
  synth_opts.add("--save-plif", synth_out.save_plif,
                 "write trained PLIF parameters (lms-plif)");
  synth_opts.add("--save-task", synth_out.save_task,
                 "dump the task: <prefix>.csv P* table + <prefix>.json spec sidecar");
  synth_opts.add("--save-model", synth_out.save_model,
                 "dump the trained model: <prefix>_head.json, _W.csv, _H.csv");
  synth_opts.add("--save-logprobs", synth_out.save_logprobs,
                 "dump the trained M x N log-prob matrix as CSV");
  synth->add_flag("--timing", synth_out.timing, "include wall-clock timing in outputs");

  // sweep -------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "cartesian product of synth runs");
  OptionSet sweep_opts(sweep);
  SynthOptions sw;
  register_synth_options(sweep_opts, sw);
  std::vector<double> sweep_alphas = {0.1};
  std::vector<std::size_t> sweep_vocabs = {100}, sweep_dims = {5};
  std::vector<std::string> sweep_heads = {"linear"};
  std::vector<std::uint64_t> sweep_seeds = {0};
  sweep_opts.add("--alphas", sweep_alphas, "alpha values")->delimiter(',');
  sweep_opts.add("--vocabs", sweep_vocabs, "vocabulary sizes")->delimiter(',');
  sweep_opts.add("--dims", sweep_dims, "embedding dimensions")->delimiter(',');
  sweep_opts.add("--heads", sweep_heads, "head names")->delimiter(',');
  sweep_opts.add("--seeds", sweep_seeds, "seeds")->delimiter(',');
  std::string sweep_csv = "sweep.csv", sweep_report;
  bool sweep_timing = false;
  sweep_opts.add("--csv", sweep_csv, "long-format CSV output");
  sweep_opts.add("--report", sweep_report, "JSON summary output");
  sweep->add_flag("--timing", sweep_timing, "include wall-clock timing in outputs");

  // ranklab -----------------------------------------------------------------
  auto* ranklab = app.add_subcommand("ranklab", "pointwise-function rank experiments");
  ranklab->require_subcommand(1);

  auto* rk_power = ranklab->add_subcommand("power", "Hadamard-power rank bound trials");
  OptionSet rk_power_opts(rk_power);
  softlab::RankTrialSpec power_spec;
  rk_power_opts.add("--rows", power_spec.rows, "matrix rows");
  rk_power_opts.add("--cols", power_spec.cols, "matrix cols");
  rk_power_opts.add("--factor-rank", power_spec.factor_rank, "factor rank d");
  rk_power_opts.add("--power", power_spec.power, "Hadamard exponent p");
  rk_power_opts.add("--trials", power_spec.trials, "trial count");
  rk_power_opts.add("--seed", power_spec.seed, "seed");
  std::string rk_power_report = "ranklab_power.json", rk_power_csv;
  rk_power_opts.add("--report", rk_power_report, "JSON report output");
  rk_power_opts.add("--csv", rk_power_csv, "per-trial CSV output");

  auto* rk_square = ranklab->add_subcommand("square", "elementwise-square full-rank trials");
  OptionSet rk_square_opts(rk_square);
  std::size_t sq_n = 5, sq_trials = 500;
  std::uint64_t sq_seed = 0;
  rk_square_opts.add("--n", sq_n, "matrix dimension");
  rk_square_opts.add("--trials", sq_trials, "trial count");
  rk_square_opts.add("--seed", sq_seed, "seed");
  std::string rk_square_report = "ranklab_square.json", rk_square_csv;
  rk_square_opts.add("--report", rk_square_report, "JSON report output");
  rk_square_opts.add("--csv", rk_square_csv, "per-trial CSV output");

  auto* rk_lemma4 = ranklab->add_subcommand("lemma4", "distinct-dot-product construction");
  OptionSet rk_lemma4_opts(rk_lemma4);
  std::size_t l4_vocab = 6, l4_contexts = 8, l4_rank = 2, l4_instances = 50;
  std::uint64_t l4_seed = 0;
  rk_lemma4_opts.add("--vocab", l4_vocab, "rows M of the factor W");
  rk_lemma4_opts.add("--contexts", l4_contexts, "rows N of the factor H");
  rk_lemma4_opts.add("--factor-rank", l4_rank, "factor rank d");
  rk_lemma4_opts.add("--instances", l4_instances, "instance count");
  rk_lemma4_opts.add("--seed", l4_seed, "seed");
  std::string rk_lemma4_report = "ranklab_lemma4.json", rk_lemma4_csv;
  rk_lemma4_opts.add("--report", rk_lemma4_report, "JSON report output");
  rk_lemma4_opts.add("--csv", rk_lemma4_csv, "per-instance CSV output");

  auto* rk_surrogate = ranklab->add_subcommand("surrogate", "monotone surrogate search");
  OptionSet rk_surrogate_opts(rk_surrogate);
  std::size_t su_pairs = 20, su_budget = 10000;
  std::uint64_t su_seed = 0;
  rk_surrogate_opts.add("--pairs", su_pairs, "handcrafted (A, f) pair count");
  rk_surrogate_opts.add("--seed", su_seed, "seed");
  rk_surrogate_opts.add("--budget", su_budget, "sampling budget per pair");
  std::string rk_surrogate_report = "ranklab_surrogate.json", rk_surrogate_csv;
  rk_surrogate_opts.add("--report", rk_surrogate_report, "JSON report output");
  rk_surrogate_opts.add("--csv", rk_surrogate_csv, "per-pair CSV output");

  // theory ------------------------------------------------------------------
  auto* theory = app.add_subcommand("theory", "duality and low-rank bound verifiers");
  theory->require_subcommand(1);

  auto* th_maxent = theory->add_subcommand("maxent", "cross-entropy vs maximum entropy");
  OptionSet th_maxent_opts(th_maxent);
  std::size_t me_vocab = 6, me_dim = 2, me_instances = 50;
  std::uint64_t me_seed = 0;
  th_maxent_opts.add("--vocab", me_vocab, "vocabulary size M");
  th_maxent_opts.add("--dim", me_dim, "embedding dimension d");
  th_maxent_opts.add("--instances", me_instances, "instance count");
  th_maxent_opts.add("--seed", me_seed, "seed");
  std::string th_maxent_report = "theory_maxent.json", th_maxent_csv;
  th_maxent_opts.add("--report", th_maxent_report, "JSON report output");
  th_maxent_opts.add("--csv", th_maxent_csv, "per-instance CSV output");

  auto* th_ey = theory->add_subcommand("eckart-young", "MSE fit against the spectral bound");
  OptionSet th_ey_opts(th_ey);
  std::size_t ey_vocab = 20, ey_contexts = 30, ey_dim = 3, ey_instances = 50;
  double ey_alpha = 1.0;
  std::uint64_t ey_seed = 0;
  th_ey_opts.add("--vocab", ey_vocab, "vocabulary size M");
  th_ey_opts.add("--contexts", ey_contexts, "context count N");
  th_ey_opts.add("--dim", ey_dim, "embedding dimension d");
  th_ey_opts.add("--alpha", ey_alpha, "Dirichlet concentration for the targets");
  th_ey_opts.add("--instances", ey_instances, "instance count");
  th_ey_opts.add("--seed", ey_seed, "seed");
  std::string th_ey_report = "theory_eckart_young.json", th_ey_csv;
  th_ey_opts.add("--report", th_ey_report, "JSON report output");
  th_ey_opts.add("--csv", th_ey_csv, "per-instance CSV output");

  // plif utilities ------------------------------------------------------------
  auto* plif_approx = app.add_subcommand("plif-approx", "interpolation error vs 4RT/K bound");
  OptionSet plif_approx_opts(plif_approx);
  std::string pa_target = "tanh-plus-linear";
  double pa_range = 5.0;
  std::size_t pa_knots = 1000, pa_grid = 100000;
  plif_approx_opts.add("--target", pa_target, "tanh-plus-linear | exp | softplus | sinh");
  plif_approx_opts.add("--range", pa_range, "half range T");
  plif_approx_opts.add("--knots", pa_knots, "segment count K");
  plif_approx_opts.add("--grid", pa_grid, "evaluation grid points");
  std::string pa_report = "plif_approx.json";
  plif_approx_opts.add("--report", pa_report, "JSON report output");

  auto* plif_dump = app.add_subcommand("plif-dump", "tabulate a PLIF on a uniform grid");
  OptionSet plif_dump_opts(plif_dump);
  std::string pd_params;
  double pd_range = 10.0;
  std::size_t pd_knots = 1000, pd_points = 201;
  plif_dump_opts.add("--params", pd_params, "PLIF parameter JSON ({T, K, v_raw, b0})");
  plif_dump_opts.add("--range", pd_range, "half range for the identity default");
  plif_dump_opts.add("--knots", pd_knots, "segments for the identity default");
  plif_dump_opts.add("--points", pd_points, "grid points");
  std::string pd_csv = "plif_dump.csv";
  plif_dump_opts.add("--csv", pd_csv, "CSV output (x, f)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      synth_opts.apply_config();
      return cmd_synth(so, synth_out);
    }
    if (sweep->parsed()) {
      sweep_opts.apply_config();
      return cmd_sweep(sw, sweep_alphas, sweep_vocabs, sweep_dims, sweep_heads, sweep_seeds,
                       sweep_csv, sweep_report, sweep_timing);
    }
    if (rk_power->parsed()) {
      rk_power_opts.apply_config();
      power_spec.validate();
      return cmd_ranklab_power(power_spec, rk_power_report, rk_power_csv);
    }
    if (rk_square->parsed()) {
      rk_square_opts.apply_config();
      return cmd_ranklab_square(sq_n, sq_trials, sq_seed, rk_square_report, rk_square_csv);
    }
    if (rk_lemma4->parsed()) {
      rk_lemma4_opts.apply_config();
      return cmd_ranklab_lemma4(l4_vocab, l4_contexts, l4_rank, l4_instances, l4_seed,
                                rk_lemma4_report, rk_lemma4_csv);
    }
    if (rk_surrogate->parsed()) {
      rk_surrogate_opts.apply_config();
      return cmd_ranklab_surrogate(su_pairs, su_seed, su_budget, rk_surrogate_report,
                                   rk_surrogate_csv);
    }
    if (th_maxent->parsed()) {
      th_maxent_opts.apply_config();
      return cmd_theory_maxent(me_vocab, me_dim, me_instances, me_seed, th_maxent_report,
                               th_maxent_csv);
    }
    if (th_ey->parsed()) {
      th_ey_opts.apply_config();
      return cmd_theory_eckart_young(ey_vocab, ey_contexts, ey_dim, ey_alpha, ey_instances,
                                     ey_seed, th_ey_report, th_ey_csv);
    }
    if (plif_approx->parsed()) {
      plif_approx_opts.apply_config();
      return cmd_plif_approx(pa_target, pa_range, pa_knots, pa_grid, pa_report);
    }
    if (plif_dump->parsed()) {
      plif_dump_opts.apply_config();
      return cmd_plif_dump(pd_params, pd_range, pd_knots, pd_points, pd_csv);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
