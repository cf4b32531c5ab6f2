#include "jepa/data/dataset.hpp"
#include "jepa/eval/probes.hpp"
#include "jepa/eval/rollout.hpp"
#include "jepa/train/trainer.hpp"
#include "jepa/util/plots.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace jepa;

namespace {

// Seed resolution order: explicit flag, JEPA_ACT_SEED, then the default.
std::uint64_t resolve_seed(bool flag_given, std::uint64_t flag_value, std::uint64_t dflt) {
  if (flag_given) return flag_value;
  if (const char* s = std::getenv("JEPA_ACT_SEED")) {
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (errno != 0 || end == s || *end != '\0')
      throw std::runtime_error("JEPA_ACT_SEED: '" + std::string(s) +
                               "' is not an unsigned integer");
    return v;
  }
  return dflt;
}

ModelBundle load_bundle(const std::string& path, train::CheckpointInfo* info_out) {
  train::CheckpointInfo info = train::read_checkpoint_info(path);
  ModelBundle m;
  m.init(info.config.model(), info.config.seed);
  train::load_checkpoint(path, m, nullptr);
  if (info_out) *info_out = std::move(info);
  return m;
}

int cmd_gen_data(const data::DatasetOptions& opts) {
  data::generate_dataset(opts);
  data::Dataset d = data::Dataset::load(opts.out_dir);
  std::printf("wrote %d episodes to %s\n", d.n_episodes, opts.out_dir.c_str());
  return 0;
}

struct TrainArgs {
  std::string config_path, resume_path;
  std::string out_dir, robot, human;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int steps = -1, batch = -1, warmup = -1, checkpoint_every = -1;
  float beta = -1.0f, mix_ratio = -1.0f;
  bool no_human = false;
  int horizon = -1, latent_k = -1;
};

int cmd_train(const TrainArgs& a) {
  std::unique_ptr<train::Trainer> trainer;
  if (!a.resume_path.empty()) {
    trainer = train::Trainer::resume(a.resume_path);
  } else {
    train::TrainConfig cfg;
    if (!a.config_path.empty()) cfg = train::TrainConfig::from_file(a.config_path);
    if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
    if (!a.robot.empty()) cfg.robot_data = a.robot;
    if (!a.human.empty()) cfg.human_data = a.human;
    if (a.seed_given) cfg.seed = a.seed;
    else cfg.seed = resolve_seed(false, 0, cfg.seed);
    if (a.steps >= 0) cfg.total_steps = a.steps;
    if (a.batch > 0) cfg.batch_size = a.batch;
    if (a.warmup >= 0) cfg.warmup_steps = a.warmup;
    if (a.checkpoint_every > 0) cfg.checkpoint_every = a.checkpoint_every;
    if (a.beta >= 0.0f) cfg.beta = a.beta;
    if (a.mix_ratio >= 0.0f) cfg.mix_ratio = a.mix_ratio;
    if (a.horizon > 0) {
      cfg.horizon = a.horizon;
      cfg.latent_k = 0;
    }
    if (a.latent_k > 0) cfg.latent_k = a.latent_k;
    if (a.no_human) {
      cfg.mix_ratio = 0.0f;
      cfg.human_data.clear();
    }
    trainer = std::make_unique<train::Trainer>(cfg);
  }

  const auto& cfg = trainer->config();
  std::printf("config %s\n", cfg.hash().c_str());
  trainer->on_step = [&](const train::StepMetrics& m) {
    if (m.step == 1 || m.step % 100 == 0 || m.step == cfg.total_steps)
      std::printf("step %d loss_total %.6g loss_wm %.6g loss_fm %.6g\n", m.step,
                  double(m.loss_total), double(m.loss_wm), double(m.loss_fm));
  };
  trainer->run();
  std::printf("finished at step %d; checkpoint %s\n", trainer->step(),
              (fs::path(cfg.out_dir) / "ckpt_final.bin").string().c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& out_prefix, eval::EvalOptions opts) {
  ModelBundle m = load_bundle(ckpt, nullptr);
  eval::EvalReport rep = eval::run_eval(m, opts);
  eval::write_report(rep, out_prefix);
  std::printf("success_rate %.6g over %d rollouts (policy %s); report %s.json\n",
              double(rep.success_rate), rep.n_rollouts, rep.policy.c_str(), out_prefix.c_str());
  return 0;
}

int cmd_probe_leakage(const std::string& ckpt, std::uint64_t probe_seed) {
  train::CheckpointInfo info;
  ModelBundle m = load_bundle(ckpt, &info);
  auto results = eval::probe_suite(m, info.config.seed, probe_seed);
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    failed += r.pass ? 0 : 1;
  }
  std::printf("%d checks, %d failed\n", int(results.size()), failed);
  if (failed > 0) {
    std::fprintf(stderr, "error: %d structural checks failed\n", failed);
    return 1;
  }
  return 0;
}

int cmd_inspect_attention(const std::string& ckpt, const std::string& data_dir,
                          int episode, int layer, const std::string& out_prefix) {
  ModelBundle m = load_bundle(ckpt, nullptr);
  data::Dataset d = data::Dataset::load(data_dir);
  if (episode < 0 || episode >= d.n_episodes)
    throw std::runtime_error("inspect-attention: episode " + std::to_string(episode) +
                             " out of range [0, " + std::to_string(d.n_episodes) + ")");
  if (layer < 0) layer = m.cfg.backbone.layers - 1;
  eval::AttentionInspection a = eval::inspect_attention(m, d.at(size_t(episode)), layer);

  std::ofstream cs(out_prefix + ".csv", std::ios::trunc | std::ios::binary);
  if (!cs) throw std::runtime_error("inspect-attention: cannot write '" + out_prefix + ".csv'");
  cs << eval::attention_csv(a);

  // One grid per (step, view): replica-averaged attention over that view's
  // patch grid.
  const Eigen::Index per_view = Eigen::Index(a.grid) * a.grid;
  std::vector<std::vector<float>> grids;
  std::vector<std::string> labels;
  for (int t = 0; t < a.t_steps; ++t) {
    for (int v = 0; v < a.views; ++v) {
      std::vector<float> g(size_t(per_view), 0.0f);
      for (int k = 0; k < a.k_rep; ++k) {
        Eigen::Index row = Eigen::Index(t) * a.k_rep + k;
        for (Eigen::Index q = 0; q < per_view; ++q)
          g[size_t(q)] += a.weights[size_t(row * a.n_image + Eigen::Index(v) * per_view + q)] /
                          float(a.k_rep);
      }
      grids.push_back(std::move(g));
      labels.push_back("t" + std::to_string(t) + " view" + std::to_string(v));
    }
  }
  util::plot_heat_grids("latent attention, layer " + std::to_string(layer), grids, labels,
                        a.grid, 2 * a.views, out_prefix + ".svg");
  std::printf("object_mass %.6g background_mass %.6g (layer %d); wrote %s.csv and %s.svg\n",
              double(a.object_mass), double(a.background_mass), layer, out_prefix.c_str(),
              out_prefix.c_str());
  return 0;
}

int cmd_probe_relevance(const std::string& ckpt, const std::string& data_dir,
                        std::uint64_t seed, int n_boot, const std::string& out_path) {
  ModelBundle m = load_bundle(ckpt, nullptr);
  data::Dataset d = data::Dataset::load(data_dir);
  eval::RelevanceReport r = eval::action_relevance(m, d, seed, n_boot);
  std::ofstream os(out_path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("relevance: cannot write '" + out_path + "'");
  os << eval::relevance_json(r);
  std::printf("d_diff - d_same = %.6g (90%% bootstrap [%.6g, %.6g], n=%d); report %s\n",
              double(r.delta), double(r.ci_lo), double(r.ci_hi), r.n_pairs, out_path.c_str());
  return 0;
}

int cmd_plot(const std::string& metrics, const std::string& report,
             const std::vector<std::string>& sweep, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!metrics.empty()) {
    util::plot_loss_curves(util::read_metrics_csv(metrics),
                           (fs::path(out_dir) / "loss_curves.svg").string());
    std::printf("wrote %s\n", (fs::path(out_dir) / "loss_curves.svg").string().c_str());
  }
  if (!report.empty()) {
    std::ifstream is(report);
    if (!is) throw std::runtime_error("plot: cannot read '" + report + "'");
    nlohmann::json j = nlohmann::json::parse(is);
    std::vector<util::Bar> bars;
    for (const auto& b : j.at("per_nuisance"))
      bars.push_back({b.at("name").get<std::string>(), b.at("success_rate").get<double>()});
    util::plot_bars("success rate by nuisance (policy " + j.at("policy").get<std::string>() + ")",
                    bars, 1.0, (fs::path(out_dir) / "nuisance_success.svg").string());
    std::printf("wrote %s\n", (fs::path(out_dir) / "nuisance_success.svg").string().c_str());
  }
  if (!sweep.empty()) {
    std::vector<util::Bar> bars;
    for (const auto& f : sweep) {
      std::ifstream is(f);
      if (!is) throw std::runtime_error("plot: cannot read '" + f + "'");
      nlohmann::json j = nlohmann::json::parse(is);
      std::string label = j.contains("horizon")
                              ? "T=" + std::to_string(j.at("horizon").get<int>())
                              : fs::path(f).stem().string();
      bars.push_back({label, j.at("success_rate").get<double>()});
    }
    util::plot_bars("success rate by horizon", bars, 1.0,
                    (fs::path(out_dir) / "sweep_success.svg").string());
    std::printf("wrote %s\n", (fs::path(out_dir) / "sweep_success.svg").string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent world-model pretraining and flow-matching control on a synthetic desk"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  data::DatasetOptions gopts;
  gopts.nuisance = data::default_nuisance();
  bool g_no_actions = false, g_no_nuisance = false;
  std::uint64_t g_seed = 0;
  gen->add_option("--episodes", gopts.n_episodes, "base episode count")->required();
  auto* g_out = gen->add_option("--out", gopts.out_dir, "output directory");
  g_out->required();
  auto* g_seed_opt = gen->add_option("--seed", g_seed, "generation seed");
  gen->add_option("--horizon", gopts.horizon, "frames per episode minus one");
  gen->add_option("--action-dim", gopts.action_dim, "action dimensionality")
      ->check(CLI::IsMember({3, 7}));
  gen->add_flag("--paired", gopts.paired, "emit base/same-action/diff-action twin triplets");
  gen->add_flag("--no-actions", g_no_actions, "omit expert action labels");
  gen->add_option("--task-mix", gopts.task_mix, "target zone names")->delimiter(',');
  gen->add_option("--jitter", gopts.nuisance.camera_jitter_px, "camera jitter in pixels");
  gen->add_option("--flicker", gopts.nuisance.background_flicker_amp,
                  "background flicker amplitude");
  gen->add_option("--distractors", gopts.nuisance.distractor_count, "distractor object count");
  gen->add_option("--lighting", gopts.nuisance.lighting_drift_amp, "lighting drift amplitude");
  gen->add_flag("--no-nuisance", g_no_nuisance, "disable all nuisance motion");

  // train
  auto* tr = app.add_subcommand("train", "train from a config with flag overrides");
  TrainArgs targs;
  auto* t_config = tr->add_option("--config", targs.config_path, "JSON config file");
  auto* t_resume = tr->add_option("--resume", targs.resume_path,
                                  "continue from a checkpoint; other flags do not apply");
  auto* t_seed = tr->add_option("--seed", targs.seed, "training seed");
  auto* t_out = tr->add_option("--out", targs.out_dir, "run directory");
  auto* t_robot = tr->add_option("--robot", targs.robot, "action-labeled dataset directory");
  auto* t_human = tr->add_option("--human", targs.human, "action-free dataset directory");
  auto* t_steps = tr->add_option("--steps", targs.steps, "total optimizer steps");
  auto* t_batch = tr->add_option("--batch", targs.batch, "batch size");
  auto* t_warmup = tr->add_option("--warmup", targs.warmup, "linear warmup steps");
  auto* t_every = tr->add_option("--checkpoint-every", targs.checkpoint_every,
                                 "steps between periodic checkpoints");
  auto* t_beta = tr->add_option("--beta", targs.beta, "world-model loss weight");
  auto* t_ratio = tr->add_option("--mix-ratio", targs.mix_ratio,
                                 "probability of an action-free step");
  auto* t_nohuman = tr->add_flag("--no-human-videos", targs.no_human,
                                 "train on robot data only (mix ratio 0)");
  auto* t_horizon = tr->add_option("--horizon", targs.horizon, "future-frame horizon T");
  auto* t_latk = tr->add_option("--latent-k", targs.latent_k, "latent replicas per step");
  for (auto* o : {t_config, t_seed, t_out, t_robot, t_human, t_steps, t_batch, t_warmup,
                  t_every, t_beta, t_ratio, t_horizon, t_latk})
    t_resume->excludes(o);
  t_resume->excludes(t_nohuman);

  // eval
  auto* ev = app.add_subcommand("eval", "closed-loop evaluation of a checkpoint");
  std::string e_ckpt, e_out, e_policy = "model";
  eval::EvalOptions eopts;
  std::uint64_t e_seed = 0;
  ev->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
  ev->add_option("--out", e_out, "report path prefix")->required();
  ev->add_option("--rollouts", eopts.n_rollouts, "rollout count");
  auto* e_seed_opt = ev->add_option("--seed", e_seed, "evaluation seed");
  ev->add_option("--policy", e_policy, "model, expert, or random")
      ->check(CLI::IsMember({"model", "expert", "random"}));
  ev->add_option("--budget", eopts.budget_ticks, "environment ticks per rollout");
  ev->add_option("--denoise-steps", eopts.denoise_steps,
                 "integration steps; 0 takes the checkpoint value");

  // probe-leakage
  auto* pl = app.add_subcommand("probe-leakage", "structural leakage and mask checks");
  std::string p_ckpt;
  std::uint64_t p_seed = 0;
  pl->add_option("--checkpoint", p_ckpt, "checkpoint file")->required();
  auto* p_seed_opt = pl->add_option("--seed", p_seed, "probe seed");

  // inspect-attention
  auto* ia = app.add_subcommand("inspect-attention",
                                "export latent-token attention over image patches");
  std::string i_ckpt, i_data, i_out;
  int i_episode = 0, i_layer = -1;
  ia->add_option("--checkpoint", i_ckpt, "checkpoint file")->required();
  ia->add_option("--data", i_data, "dataset directory")->required();
  ia->add_option("--episode", i_episode, "episode index");
  ia->add_option("--layer", i_layer, "backbone layer; -1 means last");
  ia->add_option("--out", i_out, "output path prefix")->required();

  // probe-action-relevance
  auto* pr = app.add_subcommand("probe-action-relevance",
                                "pooled-latent twin statistic on paired data");
  std::string r_ckpt, r_data, r_out;
  std::uint64_t r_seed = 0;
  int r_boot = 1000;
  pr->add_option("--checkpoint", r_ckpt, "checkpoint file")->required();
  pr->add_option("--data", r_data, "paired dataset directory")->required();
  auto* r_seed_opt = pr->add_option("--seed", r_seed, "bootstrap seed");
  pr->add_option("--boot", r_boot, "bootstrap resamples");
  pr->add_option("--out", r_out, "report JSON path")->required();

  // plot
  auto* pt = app.add_subcommand("plot", "render SVG plots from metrics or reports");
  std::string pt_metrics, pt_report, pt_out;
  std::vector<std::string> pt_sweep;
  pt->add_option("--metrics", pt_metrics, "metrics CSV for loss curves");
  pt->add_option("--report", pt_report, "eval report JSON for a nuisance breakdown");
  pt->add_option("--sweep", pt_sweep, "eval report JSONs for a horizon sweep");
  pt->add_option("--out", pt_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      gopts.seed = resolve_seed(g_seed_opt->count() > 0, g_seed, 0);
      gopts.with_actions = !g_no_actions;
      if (g_no_nuisance) gopts.nuisance = env::NuisanceConfig{};
      return cmd_gen_data(gopts);
    }
    if (tr->parsed()) {
      targs.seed_given = t_seed->count() > 0;
      if (!targs.seed_given) targs.seed = resolve_seed(false, 0, 0);
      return cmd_train(targs);
    }
    if (ev->parsed()) {
      eopts.seed = resolve_seed(e_seed_opt->count() > 0, e_seed, 0);
      eopts.policy = eval::policy_from_name(e_policy);
      return cmd_eval(e_ckpt, e_out, eopts);
    }
    if (pl->parsed())
      return cmd_probe_leakage(p_ckpt, resolve_seed(p_seed_opt->count() > 0, p_seed, 0));
    if (ia->parsed()) return cmd_inspect_attention(i_ckpt, i_data, i_episode, i_layer, i_out);
    if (pr->parsed())
      return cmd_probe_relevance(r_ckpt, r_data,
                                 resolve_seed(r_seed_opt->count() > 0, r_seed, 0), r_boot, r_out);
    if (pt->parsed()) {
      if (pt_metrics.empty() && pt_report.empty() && pt_sweep.empty()) {
        std::fprintf(stderr, "plot: pass at least one of --metrics, --report, --sweep\n");
        return 2;
      }
      return cmd_plot(pt_metrics, pt_report, pt_sweep, pt_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
