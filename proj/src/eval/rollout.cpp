#include "jepa/eval/rollout.hpp"

#include "jepa/core/ops.hpp"
#include "jepa/core/rng.hpp"
#include "jepa/data/render.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace jepa::eval {

using nlohmann::ordered_json;

const char* policy_name(PolicyKind p) {
  switch (p) {
    case PolicyKind::kModel: return "model";
    case PolicyKind::kExpert: return "expert";
    case PolicyKind::kRandom: return "random";
  }
  throw std::invalid_argument("policy_name: bad kind");
}

PolicyKind policy_from_name(const std::string& name) {
  if (name == "model") return PolicyKind::kModel;
  if (name == "expert") return PolicyKind::kExpert;
  if (name == "random") return PolicyKind::kRandom;
  throw std::invalid_argument("policy: unknown name '" + name + "'");
}

std::vector<NuisanceLevel> default_nuisance_levels() {
  env::NuisanceConfig combined = data::default_nuisance();
  env::NuisanceConfig jitter, flicker, distractors;
  jitter.camera_jitter_px = combined.camera_jitter_px;
  flicker.background_flicker_amp = combined.background_flicker_amp;
  distractors.distractor_count = combined.distractor_count;
  return {{"none", {}},
          {"jitter", jitter},
          {"flicker", flicker},
          {"distractors", distractors},
          {"combined", combined}};
}

void EvalOptions::validate() const {
  if (n_rollouts <= 0) throw std::invalid_argument("eval: n_rollouts must be > 0");
  if (budget_ticks < 1) throw std::invalid_argument("eval: budget_ticks must be >= 1");
  if (denoise_steps < 0) throw std::invalid_argument("eval: denoise_steps must be >= 0");
  for (const auto& l : levels) l.config.validate();
}

namespace {

Tensor render_views(const env::EnvState& s, const env::NuisanceConfig& nc,
                    std::uint64_t step_seed) {
  return stack0({env::render(s, 0, nc, step_seed), env::render(s, 1, nc, step_seed)});
}

// Affine map onto [0,1] per dim; the gripper dim binarizes like the training
// targets so the expert comparison lives in the same units the head predicts.
std::vector<float> normalize_action(const std::vector<float>& a, const data::ActionBounds& b) {
  std::vector<float> n(a.size());
  for (size_t j = 0; j < a.size(); ++j) {
    auto [lo, hi] = b.dims[j];
    float v = (a[j] - lo) / (hi - lo);
    n[j] = int(j) == b.gripper_dim() ? (v >= 0.5f ? 1.0f : 0.0f) : v;
  }
  return n;
}

std::vector<float> random_action(std::uint64_t k, int tick, const data::ActionBounds& b) {
  std::vector<float> a(b.dims.size());
  for (size_t j = 0; j < a.size(); ++j) {
    auto [lo, hi] = b.dims[j];
    a[j] = float(rng::uniform_in(k, std::uint64_t(tick) * a.size() + j, lo, hi));
  }
  return a;
}

// One chunk of raw actions [kActionHorizon, A] from the flow head.
Tensor plan_chunk(const ModelBundle& m, const Tensor& obs,
                  const std::vector<Eigen::Index>& instruction,
                  const std::array<float, data::kProprioDim>& proprio,
                  const data::ActionBounds& bounds, int steps, std::uint64_t noise_key) {
  NoGradGuard ng;
  auto seq = m.backbone.build_sequence(obs, instruction);
  auto bo = m.backbone.forward({seq});
  Tensor z_a = reshape(bo.z_a, {bo.z_a.dim(1), bo.z_a.dim(2)});
  Tensor pro = Tensor::from_vector({data::kProprioDim},
                                   std::vector<Scalar>(proprio.begin(), proprio.end()));
  Tensor norm = m.head.generate(z_a, pro, steps, noise_key);
  return data::denormalize_actions(norm, bounds);
}

// Teacher-forced next-state error of the world model on this rollout's own
// first horizon+1 observations.
float latent_probe(const ModelBundle& m, const std::vector<Tensor>& frames,
                   const std::vector<Eigen::Index>& instruction) {
  NoGradGuard ng;
  int t_steps = int(frames.size()) - 1;
  std::vector<Tensor> st;
  st.reserve(frames.size());
  for (const auto& f : frames) st.push_back(m.encoder.encode_state(f));
  auto seq = m.backbone.build_sequence(frames[0], instruction);
  auto bo = m.backbone.forward({seq});
  Eigen::Index ns = st[0].dim(0), dv = st[0].dim(1);
  Tensor sin = reshape(stack0({st.begin(), st.begin() + t_steps}), {1, t_steps, ns, dv});
  Tensor tgt = reshape(stack0({st.begin() + 1, st.end()}), {1, t_steps, ns, dv});
  return wm_loss(m.wm.predict(sin, bo.z), tgt).item();
}

RolloutResult run_rollout(const ModelBundle& m, const EvalOptions& opts, int r,
                          const NuisanceLevel& level, int denoise_steps) {
  const int action_dim = m.cfg.head.action_dim;
  const int horizon = m.cfg.backbone.horizon;
  const data::ActionBounds bounds = data::ActionBounds::for_dim(action_dim);

  std::uint64_t kt = rng::key(opts.seed, rng::kEvalLayout, std::uint64_t(r));
  int color = int(rng::index(kt, 0, env::kNumColors));
  int shape = int(rng::index(kt, 1, env::kNumShapes));
  int zone = int(rng::index(kt, 2, env::kNumZones));
  std::uint64_t layout_seed = rng::key(opts.seed, rng::kEvalLayout, std::uint64_t(r), 1);
  std::uint64_t nuisance_seed = rng::key(opts.seed, rng::kEvalNuisance, std::uint64_t(r));
  // Scenes match the dataset's solvability budget of one action chunk; the
  // tick budget gives the policy room to recover from bad chunks.
  env::EnvState s = env::sample_scene(layout_seed, color, shape, zone, -1,
                                      level.config.distractor_count, data::kActionHorizon);
  std::vector<Eigen::Index> instruction = env::instruction_tokens(color, shape, zone);

  std::uint64_t k_expert = rng::key(opts.seed, rng::kExpertNoise, std::uint64_t(r));
  std::uint64_t k_random = rng::key(opts.seed, rng::kBaselinePolicy, std::uint64_t(r));
  std::uint64_t k_ref = rng::key(opts.seed, rng::kProbe, std::uint64_t(r));

  const bool probe_latent = opts.budget_ticks >= horizon + 1;
  std::vector<Tensor> probe_frames;
  std::vector<float> prev_action(size_t(action_dim), 0.0f);
  Tensor chunk;
  int chunk_pos = 0;

  RolloutResult res;
  res.id = r;
  res.nuisance = level.name;
  double mse_acc = 0.0;
  std::int64_t mse_n = 0;

  for (int tick = 0; tick < opts.budget_ticks; ++tick) {
    bool want_probe = probe_latent && tick <= horizon;
    bool want_plan = opts.policy == PolicyKind::kModel && tick % data::kActionHorizon == 0;
    Tensor obs;
    if (want_probe || want_plan)
      obs = render_views(s, level.config, env::step_render_seed(nuisance_seed, tick));
    if (want_probe) probe_frames.push_back(obs);

    std::vector<float> a;
    switch (opts.policy) {
      case PolicyKind::kExpert:
        a = env::expert_action(s, k_expert, tick, action_dim);
        break;
      case PolicyKind::kRandom:
        a = random_action(k_random, tick, bounds);
        break;
      case PolicyKind::kModel: {
        if (want_plan) {
          chunk = plan_chunk(m, obs, instruction, data::proprio_features(s, prev_action), bounds,
                             denoise_steps,
                             rng::key(opts.seed, rng::kGenNoise, std::uint64_t(r),
                                      std::uint64_t(tick / data::kActionHorizon)));
          chunk_pos = 0;
        }
        a.assign(size_t(action_dim), 0.0f);
        for (int j = 0; j < action_dim; ++j)
          a[size_t(j)] = chunk.data()[chunk_pos * action_dim + j];
        ++chunk_pos;
        break;
      }
    }

    std::vector<float> ref = env::expert_action(s, k_ref, tick, action_dim);
    std::vector<float> an = normalize_action(a, bounds), rn = normalize_action(ref, bounds);
    for (int j = 0; j < action_dim; ++j) {
      double d = double(an[size_t(j)]) - double(rn[size_t(j)]);
      mse_acc += d * d;
    }
    mse_n += action_dim;

    s = env::step_env(s, a);
    prev_action = a;
    if (!res.success && env::success(s)) {
      res.success = true;
      res.success_tick = tick;
    }
  }

  const auto& zc = env::kZoneCenters[size_t(zone)];
  float dx = s.object.pos[0] - zc[0], dy = s.object.pos[1] - zc[1];
  res.final_dist = std::sqrt(dx * dx + dy * dy);
  res.action_mse = float(mse_acc / double(mse_n));
  if (probe_latent) res.latent_mse = latent_probe(m, probe_frames, instruction);
  return res;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

EvalReport run_eval(const ModelBundle& model, const EvalOptions& opts) {
  opts.validate();
  if (model.cfg.backbone.frame_hw != env::kFrameHW)
    throw std::runtime_error("eval: checkpoint frame size " +
                             std::to_string(model.cfg.backbone.frame_hw) +
                             " does not match the environment's " +
                             std::to_string(env::kFrameHW));
  if (model.cfg.backbone.views != 2)
    throw std::runtime_error("eval: checkpoint expects " +
                             std::to_string(model.cfg.backbone.views) +
                             " views, the environment renders 2");

  std::vector<NuisanceLevel> levels =
      opts.levels.empty() ? default_nuisance_levels() : opts.levels;
  int denoise = opts.denoise_steps > 0 ? opts.denoise_steps : model.cfg.head.denoise_steps;

  EvalReport rep;
  rep.policy = policy_name(opts.policy);
  rep.n_rollouts = opts.n_rollouts;
  rep.seed = opts.seed;
  rep.horizon = model.cfg.backbone.horizon;
  rep.budget_ticks = opts.budget_ticks;
  rep.denoise_steps = denoise;
  for (const auto& l : levels) rep.per_nuisance.push_back({l.name, 0, 0});

  rep.rollouts.reserve(size_t(opts.n_rollouts));
  for (int r = 0; r < opts.n_rollouts; ++r) {
    const auto& level = levels[size_t(r) % levels.size()];
    rep.rollouts.push_back(run_rollout(model, opts, r, level, denoise));
    auto& bucket = rep.per_nuisance[size_t(r) % levels.size()];
    ++bucket.count;
    bucket.successes += rep.rollouts.back().success ? 1 : 0;
  }
  std::sort(rep.rollouts.begin(), rep.rollouts.end(),
            [](const RolloutResult& a, const RolloutResult& b) { return a.id < b.id; });

  int successes = 0;
  double mse_acc = 0.0, lat_acc = 0.0;
  int lat_n = 0;
  for (const auto& r : rep.rollouts) {
    successes += r.success ? 1 : 0;
    mse_acc += double(r.action_mse);
    if (r.latent_mse) {
      lat_acc += double(*r.latent_mse);
      ++lat_n;
    }
  }
  rep.success_rate = float(double(successes) / double(opts.n_rollouts));
  rep.action_mse = float(mse_acc / double(opts.n_rollouts));
  if (lat_n == rep.n_rollouts) rep.latent_mse = float(lat_acc / double(lat_n));
  return rep;
}

std::string report_json(const EvalReport& r) {
  ordered_json j;
  j["policy"] = r.policy;
  j["n_rollouts"] = r.n_rollouts;
  j["seed"] = r.seed;
  j["horizon"] = r.horizon;
  j["budget_ticks"] = r.budget_ticks;
  j["denoise_steps"] = r.denoise_steps;
  j["success_rate"] = r.success_rate;
  if (r.action_mse) j["action_mse"] = *r.action_mse;
  else j["action_mse"] = "skipped: no rollouts";
  if (r.latent_mse) j["latent_mse"] = *r.latent_mse;
  else j["latent_mse"] = "skipped: budget shorter than horizon+1";
  if (r.action_relevance) j["action_relevance"] = *r.action_relevance;
  else j["action_relevance"] = "skipped: computed by probe-action-relevance";
  j["per_nuisance"] = ordered_json::array();
  for (const auto& b : r.per_nuisance) {
    ordered_json jb;
    jb["name"] = b.name;
    jb["rollouts"] = b.count;
    jb["successes"] = b.successes;
    jb["success_rate"] = b.count > 0 ? double(b.successes) / double(b.count) : 0.0;
    j["per_nuisance"].push_back(jb);
  }
  j["rollouts"] = ordered_json::array();
  for (const auto& e : r.rollouts) {
    ordered_json je;
    je["id"] = e.id;
    je["nuisance"] = e.nuisance;
    je["success"] = e.success;
    je["success_tick"] = e.success_tick;
    je["final_dist"] = e.final_dist;
    je["action_mse"] = e.action_mse;
    if (e.latent_mse) je["latent_mse"] = *e.latent_mse;
    else je["latent_mse"] = "skipped";
    j["rollouts"].push_back(je);
  }
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& r) {
  std::string out = "id,nuisance,success,success_tick,final_dist,action_mse,latent_mse\n";
  for (const auto& e : r.rollouts) {
    out += std::to_string(e.id) + "," + e.nuisance + "," + (e.success ? "1" : "0") + "," +
           std::to_string(e.success_tick) + "," + fmt_g(double(e.final_dist)) + "," +
           fmt_g(double(e.action_mse)) + ",";
    if (e.latent_mse) out += fmt_g(double(*e.latent_mse));
    out += "\n";
  }
  return out;
}

void write_report(const EvalReport& r, const std::string& prefix) {
  std::ofstream js(prefix + ".json", std::ios::trunc | std::ios::binary);
  if (!js) throw std::runtime_error("eval: cannot write report to '" + prefix + ".json'");
  js << report_json(r);
  std::ofstream cs(prefix + ".csv", std::ios::trunc | std::ios::binary);
  if (!cs) throw std::runtime_error("eval: cannot write report to '" + prefix + ".csv'");
  cs << report_csv(r);
}

}  // namespace jepa::eval
