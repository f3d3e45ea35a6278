// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria.  argv[1] = path to the softlab CLI binary (used by the
// determinism criterion), argv[2] = scratch directory for CLI outputs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "softlab/ranklab.hpp"
#include "softlab/theory.hpp"
#include "softlab/trainer.hpp"
#include "support.hpp"

using namespace softlab;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  std::string label;
  std::function<bool(std::string&)> run;
};

std::vector<Criterion>& registry() {
  static std::vector<Criterion> criteria;
  return criteria;
}

void add_criterion(int number, std::string label, std::function<bool(std::string&)> run) {
  registry().push_back({number, std::move(label), std::move(run)});
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// ---------------------------------------------------------------------------
// shared generators
// ---------------------------------------------------------------------------

std::vector<double> random_simplex(std::size_t m, Rng& rng) {
  std::vector<double> p(m);
  double sum = 0.0;
  for (double& x : p) {
    x = rng.gamma(1.0);
    sum += x;
  }
  for (double& x : p) x /= sum;
  return p;
}

std::vector<double> random_context(std::size_t d, Rng& rng) {
  std::vector<double> h(d);
  for (double& x : h) x = rng.normal();
  return h;
}

HeadModel build_combo(std::size_t combo, std::size_t m, std::size_t d, Rng& rng) {
  HeadModel head;
  head.word = Matrix::gaussian(m, d, rng);
  switch (combo) {
    case 0: head.kind = LinearSoftmaxHead{}; break;
    case 1: head.kind = LmsHead{Identity{}}; break;
    case 2: head.kind = LmsHead{Sigsoftmax{}}; break;
    case 3: head.kind = LmsHead{Power{3}}; break;
    case 4: {
      std::vector<double> u(3), v(3), b(3);
      for (double& x : u) x = rng.normal();
      for (double& x : v) x = rng.normal();
      for (double& x : b) x = rng.normal();
      head.kind = LmsHead{MonotonicMlp(u, v, b, rng.normal())};
      break;
    }
    case 5: {
      std::vector<double> v_raw(12);
      for (double& x : v_raw) x = rng.normal(0.0, 1.5);
      head.kind = LmsHead{Plif(8.0, std::move(v_raw), rng.normal())};
      break;
    }
    case 6:
    case 7: {
      const std::size_t k = combo == 6 ? 1 : 3;
      MosParams params;
      params.prior_directions = Matrix::gaussian(k, d, rng, 0.7);
      for (std::size_t c = 0; c < k; ++c)
        params.projections.push_back(Matrix::gaussian(d, d, rng, 0.7));
      head.kind = MosHead{std::move(params)};
      break;
    }
    default: throw std::logic_error("unknown combo");
  }
  return head;
}

// ---------------------------------------------------------------------------
// CLI plumbing for the determinism criterion
// ---------------------------------------------------------------------------

std::string g_cli_path;
fs::path g_work_dir;

int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" + g_cli_path + "' " + args +
                          " > cli_stdout.log 2> cli_stderr.log";
  return std::system(cmd.c_str());
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2) g_cli_path = fs::absolute(fs::path(argv[1])).string();
  g_work_dir = argc >= 3 ? fs::absolute(fs::path(argv[2]))
                         : fs::temp_directory_path() / "softlab_acceptance";

  // 1 -------------------------------------------------------------------------
  add_criterion(1, "gradient fidelity across 8 head/function combos", [](std::string& note) {
    const double t0 = now_seconds();
    const std::size_t m = 7, d = 4;
    double worst = 0.0;
    for (std::size_t combo = 0; combo < 8; ++combo) {
      for (std::uint64_t cfg = 0; cfg < 100; ++cfg) {
        Rng rng = Rng::stream(10000 + combo, cfg);
        HeadModel head = build_combo(combo, m, d, rng);
        const auto h = random_context(d, rng);
        const auto p_star = random_simplex(m, rng);
        const auto grad = grad_context(head, h, p_star);

        const auto fd_h = test_support::finite_diff(
            [&](std::span<const double> hv) { return context_loss(head, hv, p_star); }, h);
        worst = std::max(worst, test_support::max_rel_err(grad.context, fd_h));

        HeadModel w_probe = head;
        const auto fd_w = test_support::finite_diff(
            [&](std::span<const double> wv) {
              std::copy(wv.begin(), wv.end(), w_probe.word.flat().begin());
              return context_loss(w_probe, h, p_star);
            },
            {head.word.flat().begin(), head.word.flat().end()});
        worst = std::max(worst, test_support::max_rel_err(grad.word.flat(), fd_w));

        if (const auto* lms = std::get_if<LmsHead>(&head.kind);
            lms && has_params(lms->fn)) {
          HeadModel fn_probe = head;
          auto& fn = std::get<LmsHead>(fn_probe.kind).fn;
          const auto fd_fn = test_support::finite_diff(
              [&](std::span<const double> pv) {
                set_params_flat(fn, pv);
                return context_loss(fn_probe, h, p_star);
              },
              params_flat(lms->fn));
          worst = std::max(worst, test_support::max_rel_err(grad.head_params, fd_fn));
        } else if (const auto* mos = std::get_if<MosHead>(&head.kind)) {
          HeadModel mos_probe = head;
          auto& params = std::get<MosHead>(mos_probe.kind).params;
          const auto fd_mos = test_support::finite_diff(
              [&](std::span<const double> pv) {
                params.set_params_flat(pv);
                return context_loss(mos_probe, h, p_star);
              },
              mos->params.params_flat());
          worst = std::max(worst, test_support::max_rel_err(grad.head_params, fd_mos));
        }
      }
    }
    const double elapsed = now_seconds() - t0;
    note = "max rel err " + format_double(worst) + ", " + format_double(elapsed) + " s";
    return worst <= 1e-5 && elapsed < 60.0;
  });

  // 2 -------------------------------------------------------------------------
  add_criterion(2, "lms(identity) equals linear-softmax to 1e-14", [](std::string& note) {
    double worst = 0.0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
      Rng rng = Rng::stream(20000, t);
      Matrix w = Matrix::gaussian(9, 4, rng);
      const auto h = random_context(4, rng);
      const auto a = probs(HeadModel{w, LinearSoftmaxHead{}}, h);
      const auto b = probs(HeadModel{w, LmsHead{Identity{}}}, h);
      for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    note = "max abs diff " + format_double(worst);
    return worst <= 1e-14;
  });

  // 3 -------------------------------------------------------------------------
  add_criterion(3, "rank ceiling d+1 for linear; plif breaks it", [](std::string& note) {
    const std::size_t d = 3;
    std::size_t linear_ok = 0, plif_lifted = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = Rng::stream(30000, seed);
      const Matrix w = Matrix::gaussian(10, d, rng);
      const Matrix contexts = Matrix::gaussian(20, d, rng);
      const HeadModel linear{w, LinearSoftmaxHead{}};
      if (numerical_rank(log_prob_matrix(linear, contexts).log_probs) <= d + 1) ++linear_ok;
      std::vector<double> v_raw(64);
      for (double& x : v_raw) x = rng.normal(0.0, 2.0);
      const HeadModel plif{w, LmsHead{Plif(6.0, std::move(v_raw), 0.0)}};
      if (numerical_rank(log_prob_matrix(plif, contexts).log_probs) > d + 1) ++plif_lifted;
    }
    note = "linear ceiling held " + std::to_string(linear_ok) + "/100, plif lifted " +
           std::to_string(plif_lifted) + "/100";
    return linear_ok == 100 && plif_lifted >= 1;
  });

  // 4 -------------------------------------------------------------------------
  add_criterion(4, "hadamard power rank bound, zero violations", [](std::string& note) {
    const double t0 = now_seconds();
    std::size_t violations = 0;
    std::string detail;
    for (std::size_t d : {2u, 3u}) {
      for (int p : {2, 3}) {
        RankTrialSpec spec;
        spec.rows = d == 2 ? 10 : 12;
        spec.cols = spec.rows;
        spec.factor_rank = d;
        spec.power = p;
        spec.trials = 200;
        spec.seed = 40000 + 10 * d + static_cast<std::size_t>(p);
        const auto report = power_rank_trials(spec);
        violations += report.violations;
        detail += " d" + std::to_string(d) + "p" + std::to_string(p) + ":max=" +
                  std::to_string(report.max_rank) + "/" + std::to_string(report.bound);
      }
    }
    const double elapsed = now_seconds() - t0;
    note = std::to_string(violations) + " violations," + detail + ", " +
           format_double(elapsed) + " s";
    return violations == 0 && elapsed < 60.0;
  });

  // 5 -------------------------------------------------------------------------
  add_criterion(5, "elementwise squaring restores full rank (Monte Carlo)",
                [](std::string& note) {
    bool ok = true;
    note.clear();
    for (std::size_t n : {3u, 5u, 8u}) {
      const auto report = square_fullrank_trials(n, 500, 50000 + n);
      note += "n" + std::to_string(n) + ":" + std::to_string(report.full_rank) + "/500 ";
      if (report.full_rank < 499) ok = false;
    }
    return ok;
  });

  // 6 -------------------------------------------------------------------------
  add_criterion(6, "lemma-4 indicator reaches rank M on 50 gaussian instances",
                [](std::string& note) {
    std::size_t applicable = 0, exact = 0;
    for (std::uint64_t i = 0; i < 50; ++i) {
      Rng rng = Rng::stream(60000, i);
      const std::size_t m = 4 + i % 5;  // 4..8
      const Matrix w = Matrix::gaussian(m, 2, rng);
      const Matrix h = Matrix::gaussian(m + 2, 2, rng);
      std::vector<std::size_t> choice(m);
      for (std::size_t r = 0; r < m; ++r) choice[r] = r;
      try {
        const auto result = lemma4_construct(w, h, choice);
        ++applicable;
        if (result.achieved_rank == m) ++exact;
      } catch (const ConstructionInapplicable&) {
      }
    }
    note = "applicable " + std::to_string(applicable) + "/50, rank M " +
           std::to_string(exact) + "/50";
    return applicable == 50 && exact == 50;
  });

  // 7 -------------------------------------------------------------------------
  add_criterion(7, "monotone surrogate found and verified on 20 pairs",
                [](std::string& note) {
    std::size_t found = 0, verified = 0;
    for (std::uint64_t i = 0; i < 20; ++i) {
      const auto pair = make_indicator_pair(70000 + i);
      try {
        const auto result = monotone_surrogate(pair.a, pair.f, 4, i);
        ++found;
        if (result.achieved_rank >= 4 && result.table.strictly_increasing()) ++verified;
      } catch (const SurrogateNotFound&) {
      }
    }
    note = "found " + std::to_string(found) + "/20, verified " + std::to_string(verified);
    return found >= 19 && verified == found;
  });

  // 8 -------------------------------------------------------------------------
  add_criterion(8, "entropy duality: independent solvers agree", [](std::string& note) {
    const double t0 = now_seconds();
    double max_gap = 0.0;
    bool gibbs_ok = true;
    for (std::uint64_t i = 0; i < 50; ++i) {
      Rng rng = Rng::stream(80000, i);
      MaxEntInstance inst;
      const std::size_t m = 2 + i % 7;  // 2..8
      const std::size_t d = 1 + i % 3;  // 1..3
      inst.w = Matrix::gaussian(m, d, rng);
      inst.p_star = random_simplex(m, rng);
      const auto report = duality_gap(inst);
      max_gap = std::max(max_gap, report.gap);
      if (report.min_ce < entropy(inst.p_star) - 1e-9) gibbs_ok = false;
    }
    Rng rng(80777);
    MaxEntInstance ident;
    ident.w = Matrix::identity(6);
    ident.p_star = sample_dirichlet(2.0, 6, rng);
    const auto ident_report = duality_gap(ident);
    const double h_star = entropy(ident.p_star);
    const bool ident_ok = std::abs(ident_report.min_ce - h_star) <= 1e-6 &&
                          std::abs(ident_report.max_ent - h_star) <= 1e-6;
    const double elapsed = now_seconds() - t0;
    note = "max gap " + format_double(max_gap) + ", identity |err| " +
           format_double(std::max(std::abs(ident_report.min_ce - h_star),
                                  std::abs(ident_report.max_ent - h_star))) +
           ", " + format_double(elapsed) + " s";
    return max_gap <= 1e-4 && gibbs_ok && ident_ok && elapsed < 120.0;
  });

  // 9 -------------------------------------------------------------------------
  add_criterion(9, "mse fit respects and nearly attains the spectral bound",
                [](std::string& note) {
    double worst_margin = kInf, worst_ratio = 0.0;
    for (std::uint64_t i = 0; i < 50; ++i) {
      const SyntheticTask task = build_task({1.0, 20, 30, 3, 90000 + i});
      Matrix target(20, 30);
      for (std::size_t j = 0; j < 30; ++j)
        for (std::size_t w = 0; w < 20; ++w) target(w, j) = std::log(task.p_star(j, w));
      const double bound = eckart_young_bound(target, 3);
      const auto fit = mse_rank_fit(target, 3);
      worst_margin = std::min(worst_margin, fit.frobenius_error - bound);
      worst_ratio = std::max(worst_ratio, fit.frobenius_error / bound);
    }
    note = "worst margin " + format_double(worst_margin) + ", worst ratio " +
           format_double(worst_ratio);
    return worst_margin >= -1e-6 && worst_ratio <= 1.05;
  });

  // 10 ------------------------------------------------------------------------
  add_criterion(10, "plif interpolation meets the 4RT/K bound", [](std::string& note) {
    auto target = [](double x) { return std::tanh(x) + 0.1 * x; };
    auto measure = [&](std::size_t knots) {
      std::vector<std::pair<double, double>> samples;
      for (std::size_t i = 0; i <= knots; ++i) {
        const double x = -5.0 + 10.0 * static_cast<double>(i) / static_cast<double>(knots);
        samples.emplace_back(x, target(x));
      }
      const Plif plif = Plif::interpolate(samples, 5.0, knots);
      double worst = 0.0;
      for (std::size_t g = 0; g <= 100000; ++g) {
        const double x = -5.0 + 10.0 * static_cast<double>(g) / 100000.0;
        worst = std::max(worst, std::abs(plif.value(x) - target(x)));
      }
      return worst;
    };
    const double err_1000 = measure(1000);
    const double err_500 = measure(500);
    note = "K=1000 err " + format_double(err_1000) + " (bound 0.022), K=500 err " +
           format_double(err_500) + " (bound 0.044)";
    return err_1000 <= 0.022 && err_500 <= 0.044;
  });

  // 11 ------------------------------------------------------------------------
  add_criterion(11, "synthetic trend: lms beats linear; square case solves",
                [](std::string& note) {
    const double t0 = now_seconds();
    TrainConfig train;
    train.steps = 1200;
    train.lr = 2e-2;
    HeadConfig linear_cfg;
    linear_cfg.kind = HeadConfig::Kind::Linear;
    HeadConfig lms_cfg;
    lms_cfg.kind = HeadConfig::Kind::Lms;
    lms_cfg.fn = HeadConfig::Fn::Mlp;
    lms_cfg.mlp_hidden = 8;

    bool ordering_ok = true;
    note.clear();
    for (std::size_t dim : {5u, 10u}) {
      double kl_linear = 0.0, kl_lms = 0.0, mode_linear = 0.0, mode_lms = 0.0;
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const SyntheticTask task = build_task({0.1, 100, 2000, dim, seed});
        train.seed = seed;
        const auto fit_linear = fit_task(task, linear_cfg, train);
        const auto fit_lms = fit_task(task, lms_cfg, train);
        kl_linear += fit_linear.metrics.mean_kl / 3.0;
        kl_lms += fit_lms.metrics.mean_kl / 3.0;
        mode_linear += fit_linear.metrics.mode_match / 3.0;
        mode_lms += fit_lms.metrics.mode_match / 3.0;
      }
      note += "D" + std::to_string(dim) + " kl " + format_double(kl_lms) + "<=" +
              format_double(kl_linear) + " mode " + format_double(mode_lms) + ">=" +
              format_double(mode_linear) + "; ";
      if (!(kl_lms <= kl_linear && mode_lms >= mode_linear)) ordering_ok = false;
    }

    const SyntheticTask square_task = build_task({0.1, 100, 2000, 100, 7});
    TrainConfig square_train;
    square_train.steps = 2000;
    square_train.lr = 5e-2;
    square_train.seed = 7;
    const auto square_fit = fit_task(square_task, linear_cfg, square_train);
    const double elapsed = now_seconds() - t0;
    note += "square kl " + format_double(square_fit.metrics.mean_kl) + ", " +
            format_double(elapsed) + " s";
    return ordering_ok && square_fit.metrics.mean_kl < 1e-2 && elapsed < 900.0;
  });

  // 12 ------------------------------------------------------------------------
  add_criterion(12, "converged cross-entropy non-increasing in D", [](std::string& note) {
    const SyntheticTask base = build_task({0.1, 30, 300, 2, 5});
    HeadConfig head;
    head.kind = HeadConfig::Kind::Linear;
    TrainConfig train;
    train.steps = 1500;
    train.lr = 2e-2;
    double previous = kInf;
    bool ok = true;
    note.clear();
    for (std::size_t dim : {2u, 4u, 8u, 16u}) {
      SyntheticTaskSpec spec = base.spec;
      spec.dim = dim;
      const SyntheticTask task{spec, base.p_star};
      const auto fit = fit_task(task, head, train);
      note += "D" + std::to_string(dim) + "=" + format_double(fit.metrics.final_ce) + " ";
      if (fit.metrics.final_ce > previous + 1e-3) ok = false;
      previous = fit.metrics.final_ce;
    }
    return ok;
  });

  // 13 ------------------------------------------------------------------------
  add_criterion(13, "plif eval+backward at 1e5 knots within 2x of 1e3", [](std::string& note) {
    const std::size_t batch = 1000000;
    std::vector<double> inputs(batch);
    Rng rng(130000);
    for (double& x : inputs) x = rng.uniform(-10.0, 10.0);
    auto bench = [&](std::size_t segments) {
      std::vector<double> v_raw(segments);
      Rng prng(42);
      for (double& x : v_raw) x = prng.normal(0.0, 1.0);
      const Plif plif(10.0, std::move(v_raw), 0.1);
      double best = kInf;
      for (int rep = 0; rep < 5; ++rep) {
        Plif::GradAccumulator acc(plif.segments());
        volatile double sink = 0.0;
        const double t0 = now_seconds();
        for (double x : inputs) {
          sink = sink + plif.value(x) * 1e-9;
          acc.add(plif, x, 1e-6);
        }
        const auto grad = acc.finalize(plif);
        sink = sink + grad[0];
        best = std::min(best, now_seconds() - t0);
      }
      return best;
    };
    const double t_small = bench(1000);
    const double t_large = bench(100000);
    const double ratio = t_large / t_small;
    note = "1e3: " + format_double(t_small) + " s, 1e5: " + format_double(t_large) +
           " s, ratio " + format_double(ratio);
    return ratio <= 2.0;
  });

  // 14 ------------------------------------------------------------------------
  add_criterion(14, "every cli subcommand is byte-deterministic", [](std::string& note) {
    if (g_cli_path.empty()) {
      note = "cli path not provided";
      return false;
    }
    const std::vector<std::string> commands = {
        "synth --vocab 30 --contexts 200 --dim 3 --head lms-plif --knots 100 "
        "--plif-range 8 --steps 200 --seed 11 --csv synth.csv --report synth.json "
        "--loss-csv loss.csv --save-plif plif.json --save-task task --save-model model "
        "--save-logprobs logprobs.csv",
        "sweep --vocabs 20 --dims 2,3 --heads linear,lms-sigsoftmax --seeds 1,2 "
        "--contexts 100 --steps 150 --csv sweep.csv --report sweep.json",
        "ranklab power --rows 10 --cols 10 --factor-rank 2 --power 2 --trials 50 "
        "--seed 3 --report power.json --csv power.csv",
        "ranklab square --n 4 --trials 100 --seed 4 --report square.json --csv square.csv",
        "ranklab lemma4 --vocab 5 --contexts 7 --instances 20 --seed 5 "
        "--report lemma4.json --csv lemma4.csv",
        "ranklab surrogate --pairs 5 --seed 6 --report surrogate.json --csv surrogate.csv",
        "theory maxent --vocab 6 --dim 2 --instances 10 --seed 7 --report maxent.json "
        "--csv maxent.csv",
        "theory eckart-young --vocab 12 --contexts 16 --dim 2 --instances 5 --seed 8 "
        "--report ey.json --csv ey.csv",
        "plif-approx --target exp --range 2 --knots 64 --grid 5000 --report approx.json",
        "plif-dump --knots 32 --range 4 --points 65 --csv dump.csv",
    };
    const fs::path run_a = g_work_dir / "run_a";
    const fs::path run_b = g_work_dir / "run_b";
    fs::remove_all(run_a);
    fs::remove_all(run_b);
    fs::create_directories(run_a);
    fs::create_directories(run_b);
    for (const auto& cmd : commands) {
      if (run_cli(cmd, run_a) != 0 || run_cli(cmd, run_b) != 0) {
        note = "cli run failed: " + cmd;
        return false;
      }
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(run_a)) {
      const auto name = entry.path().filename().string();
      if (name.size() > 4 && name.substr(name.size() - 4) == ".log") continue;
      if (!same_bytes(entry.path(), run_b / name)) {
        note = "mismatch in " + name;
        return false;
      }
      ++compared;
    }
    note = std::to_string(compared) + " output files byte-identical across reruns";
    return compared >= 18;
  });

  // ---------------------------------------------------------------------------

  fs::create_directories(g_work_dir);
  int failures = 0;
  for (const auto& criterion : registry()) {
    std::string notes;
    bool passed = false;
    try {
      passed = criterion.run(notes);
    } catch (const std::exception& e) {
      notes = std::string("exception: ") + e.what();
    }
    if (!passed) ++failures;
    std::printf("%s criterion %2d: %s (%s)\n", passed ? "PASS" : "FAIL", criterion.number,
                criterion.label.c_str(), notes.c_str());
    std::fflush(stdout);
  }
  if (failures == 0) std::printf("all %zu criteria passed\n", registry().size());
  else std::printf("%d criteria FAILED\n", failures);
  return failures;
}
