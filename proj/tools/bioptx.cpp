#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include "CLI11.hpp"
#include "bioptx/bridge.hpp"
#include "bioptx/cohort.hpp"
#include "bioptx/compare.hpp"
#include "bioptx/policy.hpp"
#include "bioptx/service.hpp"

using namespace bioptx;
namespace fs = std::filesystem;

namespace {

struct EnvOptions {
  double noise_sd = EnvConfig{}.noise_sd_mm;
  double depth_noise_sd = EnvConfig{}.depth_noise_sd_mm;

  void add(CLI::App* app) {
    app->add_option("--noise-sd", noise_sd, "Observed-lesion offset SD per axis (mm)")
        ->capture_default_str();
    app->add_option("--depth-noise-sd", depth_noise_sd, "Firing depth SD (mm)")
        ->capture_default_str();
  }
  EnvConfig config() const {
    EnvConfig c;
    c.noise_sd_mm = noise_sd;
    c.depth_noise_sd_mm = depth_noise_sd;
    c.validate();
    return c;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Picks one case out of a cohort; `id` may be empty when only one exists.
CaseEntry pick_case(const fs::path& path, const std::string& id) {
  const auto cases = load_cases(path);
  if (id.empty()) {
    if (cases.size() != 1) {
      throw std::invalid_argument(path.string() + " holds " + std::to_string(cases.size()) +
                                  " cases; choose one with --case");
    }
    return cases[0];
  }
  for (const auto& c : cases) {
    if (c.id == id) return c;
  }
  throw std::invalid_argument("no case '" + id + "' in " + path.string());
}

int finish_run(const RunOutput& run, const fs::path& out, const Json& config, double threshold) {
  const ReportPaths paths = write_report(out, run, config, threshold);
  std::cout << table_csv(summarize(run.episodes));
  std::cout << "wrote " << paths.table.string() << " and " << paths.logs.string() << '\n';
  for (const auto& f : run.failures) std::cerr << "failed: " << f << '\n';
  if (run.failure_fraction() > 0.1) {
    std::fprintf(stderr, "%zu of %zu runs failed\n", run.failures.size(), run.attempted);
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Template-guided biopsy targeting workbench"};
  app.require_subcommand(1);

  // gen
  CohortSpec gen_spec;
  fs::path gen_out;
  double gen_cc = 0.0;
  auto* gen = app.add_subcommand("gen", "Synthesize a cohort of anatomy volumes");
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->add_option("-n,--n-cases", gen_spec.n_cases, "Number of cases")->capture_default_str();
  gen->add_option("--seed", gen_spec.seed, "Cohort seed")->capture_default_str();
  gen->add_option("--min-cc", gen_spec.min_cc, "Smallest lesion volume (cc)")
      ->capture_default_str();
  gen->add_option("--max-cc", gen_spec.max_cc, "Largest lesion volume (cc)")
      ->capture_default_str();
  gen->add_option("--lesion-cc", gen_cc, "Fix every lesion to this volume (cc)");
  gen->add_option("--jitter", gen_spec.prostate_jitter, "Relative prostate size jitter")
      ->capture_default_str();

  // baseline
  fs::path base_cases, base_out;
  std::string base_strategies = "sweep,scout";
  BaselineRunConfig base_cfg;
  EnvOptions base_env;
  double base_threshold = 0.4;
  auto* baseline = app.add_subcommand("baseline", "Run the sweeping/scouting perturbation grid");
  baseline->add_option("--cases", base_cases, "Cohort directory or .bvol file")->required();
  baseline->add_option("-o,--out", base_out, "Report directory")->required();
  baseline->add_option("--strategies", base_strategies, "Comma-separated: sweep,scout")
      ->capture_default_str();
  baseline->add_option("--episodes", base_cfg.episodes_per_case, "Episodes per case and grid point")
      ->capture_default_str();
  baseline->add_option("--seed", base_cfg.seed)->capture_default_str();
  baseline->add_option("--workers", base_cfg.workers)->capture_default_str();
  baseline->add_option("--last-n", base_cfg.metrics.last_n, "Score only the last N needles (0 = all)")
      ->capture_default_str();
  baseline->add_option("--size-threshold", base_threshold, "Small/large lesion split (cc)")
      ->capture_default_str();
  base_env.add(baseline);

  // train
  fs::path train_cases, train_out, train_curve, train_last;
  std::string train_case;
  TrainConfig tcfg;
  std::uint64_t train_seed = 1;
  EnvOptions train_env;
  auto* trainc = app.add_subcommand("train", "Train a PPO policy on one case");
  trainc->add_option("--cases", train_cases, "Cohort directory or .bvol file")->required();
  trainc->add_option("--case", train_case, "Case id within the cohort");
  trainc->add_option("-o,--out", train_out, "Checkpoint path (best evaluation)")->required();
  trainc->add_option("--curve", train_curve, "Learning-curve CSV");
  trainc->add_option("--save-last", train_last, "Also save the parameters at the end of the run");
  trainc->add_option("--episodes", tcfg.total_episodes)->capture_default_str();
  trainc->add_option("--eval-every", tcfg.eval_every)->capture_default_str();
  trainc->add_option("--lr", tcfg.lr)->capture_default_str();
  trainc->add_option("--gamma", tcfg.gamma)->capture_default_str();
  trainc->add_option("--clip", tcfg.clip_eps)->capture_default_str();
  trainc->add_option("--rollout", tcfg.rollout_steps)->capture_default_str();
  trainc->add_option("--minibatch", tcfg.minibatch)->capture_default_str();
  trainc->add_option("--epochs", tcfg.epochs)->capture_default_str();
  trainc->add_option("--target-reward", tcfg.target_eval_reward, "Stop once evaluation reaches this");
  trainc->add_option("--seed", train_seed)->capture_default_str();
  train_env.add(trainc);

  // eval
  fs::path eval_ckpt, eval_cases, eval_out;
  int eval_episodes = 50;
  std::uint64_t eval_seed = 1;
  EnvOptions eval_env;
  MetricsOptions eval_metrics;
  double eval_threshold = 0.4;
  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint deterministically");
  evalc->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  evalc->add_option("--cases", eval_cases, "Cohort directory or .bvol file")->required();
  evalc->add_option("-o,--out", eval_out, "Report directory")->required();
  evalc->add_option("--episodes", eval_episodes, "Episodes per case")->capture_default_str();
  evalc->add_option("--seed", eval_seed)->capture_default_str();
  evalc->add_option("--last-n", eval_metrics.last_n)->capture_default_str();
  evalc->add_option("--size-threshold", eval_threshold)->capture_default_str();
  eval_env.add(evalc);

  // compare
  fs::path cmp_a, cmp_b, cmp_json;
  double cmp_alpha = 0.05;
  auto* cmp = app.add_subcommand("compare", "Two-sample t-tests between metric files");
  cmp->add_option("a", cmp_a, "episodes.csv, metric CSV or logs.jsonl")
      ->required()
      ->check(CLI::ExistingFile);
  cmp->add_option("b", cmp_b)->required()->check(CLI::ExistingFile);
  cmp->add_option("--alpha", cmp_alpha)->capture_default_str();
  cmp->add_option("--json", cmp_json, "Also write the report as JSON");

  // serve
  fs::path serve_cases, serve_logs = "session_logs";
  ServerOptions serve_opts;
  EnvOptions serve_env;
  auto* serve = app.add_subcommand("serve", "HTTP/WebSocket session service");
  serve->add_option("--cases", serve_cases, "Cohort directory or .bvol file")->required();
  serve->add_option("--address", serve_opts.address)->capture_default_str();
  serve->add_option("--port", serve_opts.port)->capture_default_str();
  serve->add_option("--threads", serve_opts.threads)->capture_default_str();
  serve->add_option("--log-dir", serve_logs, "Finished episodes are appended here")
      ->capture_default_str();
  serve_env.add(serve);

  // bridge
  fs::path bridge_cases;
  std::string bridge_case;
  EnvOptions bridge_env;
  auto* bridge = app.add_subcommand("bridge", "Newline-delimited JSON env protocol on stdio");
  bridge->add_option("--cases", bridge_cases, "Cohort directory or .bvol file")->required();
  bridge->add_option("--case", bridge_case, "Case id within the cohort");
  bridge_env.add(bridge);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      if (gen_cc > 0.0) gen_spec.min_cc = gen_spec.max_cc = gen_cc;
      auto cases = generate_cohort(gen_spec);
      save_cohort(cases, gen_spec, gen_out);
      for (const auto& c : cases) std::printf("%s  %.3f cc\n", c.id.c_str(), c.lesion_cc);
      return 0;
    }

    if (*baseline) {
      base_cfg.strategies = split_list(base_strategies);
      base_cfg.env = base_env.config();
      const auto cases = load_cases(base_cases);
      return finish_run(run_baselines(cases, base_cfg), base_out, base_cfg.to_json(),
                        base_threshold);
    }

    if (*trainc) {
      const CaseEntry ce = pick_case(train_cases, train_case);
      const EnvConfig ec = train_env.config();
      const auto result = train(
          [&] { return std::make_unique<BiopsyEnv>(ce.volume, ec, ce.id); }, tcfg, train_seed,
          [](const CurvePoint& c) {
            std::printf("episode %6d  eval reward %7.2f  HR %5.1f%%\n", c.episode,
                        c.eval_mean_reward, c.hr);
            std::fflush(stdout);
          });
      save_checkpoint(result.best, tcfg, train_out);
      if (!train_curve.empty()) write_curve_csv(result.curve, train_curve);
      if (!train_last.empty()) save_checkpoint(result.last, tcfg, train_last);
      std::printf("best evaluation %.2f at episode %d -> %s\n", result.best_eval_reward,
                  result.best_episode, train_out.string().c_str());
      if (result.halted) {
        std::fprintf(stderr, "training halted: %s\n", result.halt_reason.c_str());
        return 2;
      }
      return 0;
    }

    if (*evalc) {
      const PolicyNet net = load_checkpoint(eval_ckpt);
      const EnvConfig ec = eval_env.config();
      const auto cases = load_cases(eval_cases);
      RunOutput run;
      for (const auto& ce : cases) {
        ++run.attempted;
        try {
          BiopsyEnv env(ce.volume, ec, ce.id);
          for (auto& log : evaluate_policy(net, env, eval_episodes, eval_seed)) {
            EpisodeRecord rec;
            rec.case_id = ce.id;
            rec.lesion_cc = ce.lesion_cc;
            rec.log = std::move(log);
            rec.metrics = evaluate_episode(rec.log, ce.lesion_cc, eval_metrics);
            run.episodes.push_back(std::move(rec));
          }
        } catch (const std::exception& e) {
          run.failures.push_back(ce.id + ": " + e.what());
        }
      }
      const Json config{{"checkpoint", eval_ckpt.string()},
                        {"episodes_per_case", eval_episodes},
                        {"seed", eval_seed},
                        {"noise_sd_mm", ec.noise_sd_mm},
                        {"depth_noise_sd_mm", ec.depth_noise_sd_mm},
                        {"last_n", eval_metrics.last_n}};
      return finish_run(run, eval_out, config, eval_threshold);
    }

    if (*cmp) {
      const auto rows =
          compare_samples(read_metric_samples(cmp_a), read_metric_samples(cmp_b), cmp_alpha);
      std::cout << compare_text(rows);
      if (!cmp_json.empty()) {
        std::ofstream(cmp_json) << compare_json(rows, cmp_alpha).dump(2) << '\n';
      }
      return 0;
    }

    if (*serve) {
      // Block the stop signals before any thread starts so that only the
      // sigwait below sees them.
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);

      SessionStore store(load_cases(serve_cases), serve_env.config(), serve_logs);
      SessionServer server(store, serve_opts);
      server.start();
      std::printf("listening on http://%s:%u\n", serve_opts.address.c_str(), server.port());
      std::fflush(stdout);
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
      return 0;
    }

    if (*bridge) {
      const CaseEntry ce = pick_case(bridge_cases, bridge_case);
      Bridge b(ce.volume, bridge_env.config(), ce.id);
      b.serve(std::cin, std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
