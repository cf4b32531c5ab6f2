#include "jepa/data/dataset.hpp"

#include "jepa/core/rng.hpp"
#include "jepa/data/render.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "dataset records are little-endian; big-endian hosts are unsupported");

namespace jepa::data {

using nlohmann::json;

ActionBounds ActionBounds::for_dim(int action_dim) {
  if (action_dim != 3 && action_dim != 7)
    throw std::invalid_argument("bounds: action_dim must be 3 or 7, got " +
                                std::to_string(action_dim));
  ActionBounds b;
  b.dims.push_back({-env::kDeltaMax, env::kDeltaMax});
  b.dims.push_back({-env::kDeltaMax, env::kDeltaMax});
  for (int i = 2; i < action_dim - 1; ++i) b.dims.push_back({-1.0f, 1.0f});
  b.dims.push_back({0.0f, 1.0f});
  return b;
}

void ActionBounds::validate() const {
  if (dims.size() < 3) throw std::invalid_argument("bounds: need at least 3 dims");
  for (const auto& d : dims)
    if (!(d[1] > d[0]))
      throw std::invalid_argument("bounds: degenerate range [" + std::to_string(d[0]) + "," +
                                  std::to_string(d[1]) + "]");
}

const char* twin_kind_name(TwinKind k) {
  switch (k) {
    case TwinKind::kBase: return "base";
    case TwinKind::kSameAction: return "same_action";
    default: return "diff_action";
  }
}

TwinKind twin_kind_from_name(const std::string& name) {
  if (name == "base") return TwinKind::kBase;
  if (name == "same_action") return TwinKind::kSameAction;
  if (name == "diff_action") return TwinKind::kDiffAction;
  throw std::runtime_error("dataset: unknown twin kind '" + name + "'");
}

void normalize_views(Episode& e) {
  if (!e.frames.defined() || e.frames.rank() != 5)
    throw std::invalid_argument("normalize_views: frames must be [V,T+1,H,W,3]");
  Eigen::Index v = e.frames.dim(0);
  if (v == 2) return;
  if (v < 1) throw std::invalid_argument("normalize_views: no views present");
  Shape s = e.frames.shape();
  Eigen::Index per_view = e.frames.numel() / v;
  s[0] = 2;
  Tensor two = Tensor::zeros(s);
  std::memcpy(two.data(), e.frames.data(), size_t(per_view) * sizeof(Scalar));
  // V=1 duplicates the single view; V>2 keeps views 0 and 1.
  std::memcpy(two.data() + per_view, e.frames.data() + (v == 1 ? 0 : per_view),
              size_t(per_view) * sizeof(Scalar));
  e.frames = two;
}

Tensor preprocess_actions(const Tensor& raw, const ActionBounds& bounds) {
  bounds.validate();
  Eigen::Index a = Eigen::Index(bounds.dims.size());
  if (raw.dim(-1) != a)
    throw std::invalid_argument("preprocess_actions: last dim " + std::to_string(raw.dim(-1)) +
                                " does not match bounds with " + std::to_string(a) + " dims");
  Tensor out = Tensor::zeros(raw.shape());
  Eigen::Index rows = raw.numel() / a;
  const Scalar* in = raw.data();
  Scalar* o = out.data();
  Eigen::Index grip = Eigen::Index(bounds.gripper_dim());
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index d = 0; d < a; ++d) {
      float lo = bounds.dims[size_t(d)][0], hi = bounds.dims[size_t(d)][1];
      float n = (in[r * a + d] - lo) / (hi - lo);
      o[r * a + d] = (d == grip) ? (n >= 0.5f ? 1.0f : 0.0f) : n;
    }
  return out;
}

Tensor denormalize_actions(const Tensor& normalized, const ActionBounds& bounds) {
  bounds.validate();
  Eigen::Index a = Eigen::Index(bounds.dims.size());
  if (normalized.dim(-1) != a)
    throw std::invalid_argument("denormalize_actions: last dim does not match bounds");
  Tensor out = Tensor::zeros(normalized.shape());
  Eigen::Index rows = normalized.numel() / a;
  const Scalar* in = normalized.data();
  Scalar* o = out.data();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index d = 0; d < a; ++d) {
      float lo = bounds.dims[size_t(d)][0], hi = bounds.dims[size_t(d)][1];
      o[r * a + d] = lo + in[r * a + d] * (hi - lo);
    }
  return out;
}

std::array<float, kProprioDim> proprio_features(const env::EnvState& s,
                                                const std::vector<float>& prev_action) {
  std::array<float, kProprioDim> f{};
  f[0] = s.gripper[0];
  f[1] = s.gripper[1];
  f[2] = s.holding ? 1.0f : 0.0f;
  f[3] = s.closed ? 1.0f : 0.0f;
  if (!prev_action.empty()) {
    f[4] = prev_action[0];
    f[5] = prev_action[1];
    f[6] = prev_action.back();
  }
  f[7] = 1.0f;
  return f;
}

// ---- JSON helpers ----

static json state_to_json(const env::EnvState& s) {
  json ds = json::array();
  for (const auto& d : s.distractors)
    ds.push_back({{"pos", {d.pos[0], d.pos[1]}}, {"color", d.color}, {"shape", d.shape}});
  return {{"gripper", {s.gripper[0], s.gripper[1]}},
          {"object",
           {{"pos", {s.object.pos[0], s.object.pos[1]}},
            {"color", s.object.color},
            {"shape", s.object.shape}}},
          {"zone", s.zone},
          {"holding", s.holding},
          {"closed", s.closed},
          {"distractors", ds}};
}

static env::EnvState state_from_json(const json& j) {
  env::EnvState s;
  s.gripper = {j.at("gripper")[0].get<float>(), j.at("gripper")[1].get<float>()};
  const json& o = j.at("object");
  s.object.pos = {o.at("pos")[0].get<float>(), o.at("pos")[1].get<float>()};
  s.object.color = o.at("color").get<int>();
  s.object.shape = o.at("shape").get<int>();
  s.zone = j.at("zone").get<int>();
  s.holding = j.at("holding").get<bool>();
  s.closed = j.at("closed").get<bool>();
  for (const json& d : j.at("distractors")) {
    env::ObjectSpec spec;
    spec.pos = {d.at("pos")[0].get<float>(), d.at("pos")[1].get<float>()};
    spec.color = d.at("color").get<int>();
    spec.shape = d.at("shape").get<int>();
    s.distractors.push_back(spec);
  }
  return s;
}

static json nuisance_to_json(const env::NuisanceConfig& n) {
  return {{"camera_jitter_px", n.camera_jitter_px},
          {"background_flicker_amp", n.background_flicker_amp},
          {"distractor_count", n.distractor_count},
          {"lighting_drift_amp", n.lighting_drift_amp}};
}

static env::NuisanceConfig nuisance_from_json(const json& j) {
  env::NuisanceConfig n;
  n.camera_jitter_px = j.at("camera_jitter_px").get<int>();
  n.background_flicker_amp = j.at("background_flicker_amp").get<float>();
  n.distractor_count = j.at("distractor_count").get<int>();
  n.lighting_drift_amp = j.at("lighting_drift_amp").get<float>();
  n.validate();
  return n;
}

// ---- binary record IO ----

static void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

static void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
static void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, 8); }

static void write_record(std::ostream& os, const Episode& e) {
  json task = {{"color", env::color_name(e.state0.object.color)},
               {"shape", env::shape_name(e.state0.object.shape)},
               {"zone", env::zone_name(e.state0.zone)}};
  json meta = {{"format_version", kFormatVersion},
               {"index", e.index},
               {"episode_seed", e.episode_seed},
               {"layout_seed", e.layout_seed},
               {"nuisance_seed", e.nuisance_seed},
               {"action_noise_seed", e.action_noise_seed},
               {"burn_in", e.burn_in},
               {"instruction", e.instruction},
               {"task", task},
               {"has_actions", e.actions.has_value()},
               {"frames_shape", e.frames.shape()},
               {"proprio", e.proprio},
               {"state0", state_to_json(e.state0)},
               {"final_object_pos", e.final_object_pos},
               {"success", e.task_success},
               {"twin", {{"kind", twin_kind_name(e.twin)}, {"base", e.twin_base}}}};
  if (e.actions) meta["actions_shape"] = e.actions->shape();

  std::string mb = meta.dump();
  std::uint64_t payload = 4 + mb.size() + size_t(e.frames.numel()) * 4 +
                          (e.actions ? size_t(e.actions->numel()) * 4 : 0);
  write_bytes(os, kRecordMagic, 8);
  write_u64(os, payload);
  write_u32(os, std::uint32_t(mb.size()));
  write_bytes(os, mb.data(), mb.size());
  write_bytes(os, e.frames.data(), size_t(e.frames.numel()) * 4);
  if (e.actions) write_bytes(os, e.actions->data(), size_t(e.actions->numel()) * 4);
}

static Episode read_record(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is) throw std::runtime_error("dataset: truncated record header");
  if (std::memcmp(magic, kRecordMagic, 8) != 0)
    throw std::runtime_error("dataset: unknown record magic");
  std::uint64_t payload = 0;
  is.read(reinterpret_cast<char*>(&payload), 8);
  std::uint32_t mlen = 0;
  is.read(reinterpret_cast<char*>(&mlen), 4);
  if (!is || mlen > payload) throw std::runtime_error("dataset: corrupt record length");
  std::string mb(mlen, '\0');
  is.read(mb.data(), mlen);
  json meta = json::parse(mb);
  if (meta.at("format_version").get<int>() != kFormatVersion)
    throw std::runtime_error("dataset: unsupported record format_version " +
                             meta.at("format_version").dump());

  Episode e;
  e.index = meta.at("index").get<std::int64_t>();
  e.episode_seed = meta.at("episode_seed").get<std::uint64_t>();
  e.layout_seed = meta.at("layout_seed").get<std::uint64_t>();
  e.nuisance_seed = meta.at("nuisance_seed").get<std::uint64_t>();
  e.action_noise_seed = meta.at("action_noise_seed").get<std::uint64_t>();
  e.burn_in = meta.at("burn_in").get<int>();
  e.instruction = meta.at("instruction").get<std::vector<Eigen::Index>>();
  e.state0 = state_from_json(meta.at("state0"));
  auto pr = meta.at("proprio").get<std::vector<float>>();
  if (pr.size() != kProprioDim) throw std::runtime_error("dataset: bad proprio length");
  std::copy(pr.begin(), pr.end(), e.proprio.begin());
  e.final_object_pos = {meta.at("final_object_pos")[0].get<float>(),
                        meta.at("final_object_pos")[1].get<float>()};
  e.task_success = meta.at("success").get<bool>();
  e.twin = twin_kind_from_name(meta.at("twin").at("kind").get<std::string>());
  e.twin_base = meta.at("twin").at("base").get<std::int64_t>();

  Shape fs = meta.at("frames_shape").get<Shape>();
  e.frames = Tensor::zeros(fs);
  is.read(reinterpret_cast<char*>(e.frames.data()), std::streamsize(e.frames.numel()) * 4);
  if (meta.at("has_actions").get<bool>()) {
    Shape as = meta.at("actions_shape").get<Shape>();
    Tensor act = Tensor::zeros(as);
    is.read(reinterpret_cast<char*>(act.data()), std::streamsize(act.numel()) * 4);
    e.actions = act;
  }
  if (!is) throw std::runtime_error("dataset: truncated record payload");
  return e;
}

// ---- generation ----

namespace {

struct RolloutSpec {
  env::EnvState scene;
  std::vector<Eigen::Index> instruction;
  std::uint64_t nuisance_seed = 0;
  std::uint64_t noise_seed = 0;
  int burn_in = 0;
};

Episode run_episode(const RolloutSpec& rs, const DatasetOptions& opts) {
  const int t_steps = opts.horizon;
  const int total = std::max(t_steps, kActionHorizon);
  const int hw = env::kFrameHW;

  Episode e;
  e.instruction = rs.instruction;
  e.nuisance_seed = rs.nuisance_seed;
  e.action_noise_seed = rs.noise_seed;
  e.burn_in = rs.burn_in;
  e.frames = Tensor::zeros({2, t_steps + 1, hw, hw, 3});

  env::EnvState state = rs.scene;
  std::vector<float> prev_action;
  for (int i = 0; i < rs.burn_in; ++i) {
    prev_action = env::expert_action(state, rs.noise_seed, i, opts.action_dim);
    state = env::step_env(state, prev_action);
  }
  e.state0 = state;
  e.proprio = proprio_features(state, prev_action);

  Tensor actions = Tensor::zeros({kActionHorizon, Eigen::Index(opts.action_dim)});
  Eigen::Index frame_sz = Eigen::Index(hw) * hw * 3;
  for (int i = 0; i <= total; ++i) {
    if (i <= t_steps) {
      std::uint64_t ss = env::step_render_seed(rs.nuisance_seed, rs.burn_in + i);
      for (int v = 0; v < 2; ++v) {
        Tensor f = env::render(state, v, opts.nuisance, ss);
        std::memcpy(e.frames.data() + (Eigen::Index(v) * (t_steps + 1) + i) * frame_sz, f.data(),
                    size_t(frame_sz) * sizeof(Scalar));
      }
    }
    if (i == t_steps) e.task_success = env::success(state);
    if (i == kActionHorizon) e.final_object_pos = state.object.pos;
    if (i == total) break;
    std::vector<float> a = env::expert_action(state, rs.noise_seed, rs.burn_in + i, opts.action_dim);
    if (i < kActionHorizon)
      for (int d = 0; d < opts.action_dim; ++d) actions.data()[i * opts.action_dim + d] = a[size_t(d)];
    state = env::step_env(state, a);
  }
  if (opts.with_actions) e.actions = actions;
  return e;
}

}  // namespace

env::NuisanceConfig default_nuisance() {
  env::NuisanceConfig n;
  n.camera_jitter_px = 2;
  n.background_flicker_amp = 0.10f;
  n.distractor_count = 2;
  n.lighting_drift_amp = 0.05f;
  return n;
}

void generate_dataset(const DatasetOptions& opts) {
  if (opts.n_episodes <= 0) throw std::invalid_argument("generate_dataset: n_episodes must be > 0");
  if (opts.horizon <= 0) throw std::invalid_argument("generate_dataset: horizon must be > 0");
  opts.nuisance.validate();
  ActionBounds bounds = ActionBounds::for_dim(opts.action_dim);

  std::vector<int> zones;
  for (const std::string& t : opts.task_mix) {
    int z = env::zone_index(t);
    if (z < 0) throw std::invalid_argument("generate_dataset: unknown task name '" + t + "'");
    zones.push_back(z);
  }
  if (zones.empty())
    for (int z = 0; z < env::kNumZones; ++z) zones.push_back(z);
  if (opts.paired && zones.size() < 2)
    throw std::invalid_argument("generate_dataset: paired mode needs at least two task zones");

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  std::ofstream bin(fs::path(opts.out_dir) / "episodes.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("generate_dataset: cannot write to '" + opts.out_dir + "'");

  const int step_budget = std::min(opts.horizon, kActionHorizon);
  std::int64_t out_index = 0;
  for (int e = 0; e < opts.n_episodes; ++e) {
    std::uint64_t task_key = rng::key(opts.seed, rng::kTaskPick, std::uint64_t(e));
    int color = int(rng::index(task_key, 0, env::kNumColors));
    int shape = int(rng::index(task_key, 1, env::kNumShapes));
    size_t zpick = rng::index(task_key, 2, zones.size());
    int zone = zones[zpick];
    int alt_zone = -1;
    if (opts.paired) {
      size_t step = 1 + rng::index(task_key, 3, zones.size() - 1);
      alt_zone = zones[(zpick + step) % zones.size()];
    }

    RolloutSpec rs;
    rs.instruction = env::instruction_tokens(color, shape, zone);
    rs.nuisance_seed = rng::key(opts.seed, rng::kNuisance, std::uint64_t(e), 0);
    rs.noise_seed = rng::key(opts.seed, rng::kExpertNoise, std::uint64_t(e));
    if (!opts.paired) {
      std::uint64_t bk = rng::key(opts.seed, rng::kBurnIn, std::uint64_t(e));
      rs.burn_in = rng::uniform(bk, 0) < 0.4 ? 0 : int(1 + rng::index(bk, 1, 4));
    }
    std::uint64_t layout_seed = rng::key(opts.seed, rng::kLayout, std::uint64_t(e));
    rs.scene = env::sample_scene(layout_seed, color, shape, zone, alt_zone,
                                 opts.nuisance.distractor_count, step_budget);

    auto finish = [&](Episode ep, TwinKind kind, std::int64_t base) {
      ep.index = out_index;
      ep.episode_seed = rng::key(opts.seed, 0x6570ull, std::uint64_t(e));
      ep.layout_seed = layout_seed;
      ep.twin = kind;
      ep.twin_base = base;
      write_record(bin, ep);
      ++out_index;
    };

    std::int64_t base_index = out_index;
    finish(run_episode(rs, opts), TwinKind::kBase, -1);

    if (opts.paired) {
      RolloutSpec same = rs;
      same.nuisance_seed = rng::key(opts.seed, rng::kNuisance, std::uint64_t(e), 1);
      finish(run_episode(same, opts), TwinKind::kSameAction, base_index);

      RolloutSpec diff = rs;
      diff.scene.zone = alt_zone;
      diff.instruction = env::instruction_tokens(color, shape, alt_zone);
      finish(run_episode(diff, opts), TwinKind::kDiffAction, base_index);
    }
  }
  bin.close();

  json bj = json::array();
  for (const auto& d : bounds.dims) bj.push_back({d[0], d[1]});
  json zc = json::array();
  for (const auto& z : env::kZoneCenters) zc.push_back({z[0], z[1]});
  std::vector<std::string> mix_names;
  for (int z : zones) mix_names.push_back(env::zone_name(z));
  json manifest = {{"magic", kManifestMagic},
                   {"format_version", kFormatVersion},
                   {"n_episodes", out_index},
                   {"views", 2},
                   {"frames_per_episode", opts.horizon + 1},
                   {"frame_hw", env::kFrameHW},
                   {"action_dim", opts.action_dim},
                   {"action_horizon", kActionHorizon},
                   {"with_actions", opts.with_actions},
                   {"paired", opts.paired},
                   {"seed", opts.seed},
                   {"task_mix", mix_names},
                   {"nuisance", nuisance_to_json(opts.nuisance)},
                   {"bounds", bj},
                   {"vocabulary", env::vocabulary()},
                   {"env",
                    {{"delta_max", env::kDeltaMax},
                     {"grasp_radius", env::kGraspRadius},
                     {"success_radius", env::kSuccessRadius},
                     {"zones", zc}}}};
  std::ofstream mf(fs::path(opts.out_dir) / "manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw std::runtime_error("generate_dataset: cannot write manifest");
}

Dataset Dataset::load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("dataset: missing manifest.json in '" + dir + "'");
  json manifest = json::parse(mf);
  if (manifest.value("magic", "") != kManifestMagic)
    throw std::runtime_error("dataset: unknown manifest magic");
  if (manifest.at("format_version").get<int>() != kFormatVersion)
    throw std::runtime_error("dataset: unsupported format_version " +
                             manifest.at("format_version").dump());

  Dataset d;
  d.dir = dir;
  d.format_version = kFormatVersion;
  d.n_episodes = manifest.at("n_episodes").get<int>();
  d.views = manifest.at("views").get<int>();
  d.frames_per_episode = manifest.at("frames_per_episode").get<int>();
  d.frame_hw = manifest.at("frame_hw").get<int>();
  d.action_dim = manifest.at("action_dim").get<int>();
  d.action_horizon = manifest.at("action_horizon").get<int>();
  d.with_actions = manifest.at("with_actions").get<bool>();
  d.paired = manifest.at("paired").get<bool>();
  d.seed = manifest.at("seed").get<std::uint64_t>();
  d.nuisance = nuisance_from_json(manifest.at("nuisance"));
  d.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
  for (const json& b : manifest.at("bounds"))
    d.bounds.dims.push_back({b[0].get<float>(), b[1].get<float>()});
  d.bounds.validate();

  std::ifstream bin(fs::path(dir) / "episodes.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("dataset: missing episodes.bin in '" + dir + "'");
  for (int i = 0; i < d.n_episodes; ++i) {
    Episode e = read_record(bin);
    normalize_views(e);
    d.episodes.push_back(std::move(e));
  }
  return d;
}

}  // namespace jepa::data
