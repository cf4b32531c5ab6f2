#include "jepa/data/env.hpp"

#include "jepa/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jepa::env {

const std::array<std::array<float, 2>, kNumZones> kZoneCenters = {{
    {0.20f, 0.20f},  // top_left
    {0.80f, 0.20f},  // top_right
    {0.20f, 0.80f},  // bottom_left
    {0.80f, 0.80f},  // bottom_right
}};

void NuisanceConfig::validate() const {
  if (camera_jitter_px < 0)
    throw std::invalid_argument("nuisance: camera_jitter_px must be non-negative");
  if (background_flicker_amp < 0.0f || background_flicker_amp > 1.0f)
    throw std::invalid_argument("nuisance: background_flicker_amp must lie in [0,1]");
  if (distractor_count < 0)
    throw std::invalid_argument("nuisance: distractor_count must be non-negative");
  if (lighting_drift_amp < 0.0f || lighting_drift_amp > 1.0f)
    throw std::invalid_argument("nuisance: lighting_drift_amp must lie in [0,1]");
}

static float clampf(float v, float lo, float hi) { return std::min(std::max(v, lo), hi); }

static float dist2d(const std::array<float, 2>& a, const std::array<float, 2>& b) {
  float dx = a[0] - b[0], dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

EnvState step_env(const EnvState& s, const std::vector<float>& action) {
  if (action.size() < 3)
    throw std::invalid_argument("step_env: action needs at least 3 dims, got " +
                                std::to_string(action.size()));
  EnvState n = s;
  float dx = clampf(action[0], -kDeltaMax, kDeltaMax);
  float dy = clampf(action[1], -kDeltaMax, kDeltaMax);
  bool cmd = clampf(action[action.size() - 1], 0.0f, 1.0f) >= 0.5f;

  n.gripper[0] = clampf(n.gripper[0] + dx, kSceneMin, kSceneMax);
  n.gripper[1] = clampf(n.gripper[1] + dy, kSceneMin, kSceneMax);

  if (n.holding) n.object.pos = n.gripper;
  if (cmd && !n.closed && !n.holding && dist2d(n.gripper, n.object.pos) <= kGraspRadius) {
    n.holding = true;
    n.object.pos = n.gripper;
  }
  if (!cmd) n.holding = false;
  n.closed = cmd;
  return n;
}

bool success(const EnvState& s) {
  return dist2d(s.object.pos, kZoneCenters[size_t(s.zone)]) <= kSuccessRadius;
}

std::vector<float> expert_action(const EnvState& s, std::uint64_t noise_key, int step_index,
                                 int action_dim) {
  if (action_dim != 3 && action_dim != 7)
    throw std::invalid_argument("expert_action: action_dim must be 3 or 7");
  auto noise = [&](int lane) {
    return float(rng::uniform_in(noise_key, std::uint64_t(step_index) * 8 + std::uint64_t(lane),
                                 -kExpertNoise, kExpertNoise));
  };

  float tx, ty, grip;
  if (!s.holding) {
    tx = s.object.pos[0] - s.gripper[0];
    ty = s.object.pos[1] - s.gripper[1];
    float d = std::sqrt(tx * tx + ty * ty);
    // Close only on an approach that ends within reach; reopen after a miss.
    grip = (!s.closed && d <= 0.7f * kGraspRadius) ? 0.95f : 0.05f;
    float step = std::min(d, kDeltaMax * 0.92f);
    if (d > 1e-6f) {
      tx *= step / d;
      ty *= step / d;
    }
  } else {
    const auto& zc = kZoneCenters[size_t(s.zone)];
    tx = zc[0] - s.object.pos[0];
    ty = zc[1] - s.object.pos[1];
    float d = std::sqrt(tx * tx + ty * ty);
    float step = std::min(d, kDeltaMax * 0.92f);
    if (d > 1e-6f) {
      tx *= step / d;
      ty *= step / d;
    }
    grip = 0.95f;
  }

  std::vector<float> a(size_t(action_dim), 0.0f);
  a[0] = tx + noise(0);
  a[1] = ty + noise(1);
  for (size_t i = 2; i + 1 < a.size(); ++i) a[i] = noise(int(i));  // inert dims, noise only
  a[a.size() - 1] = clampf(grip + noise(int(a.size()) - 1), 0.0f, 1.0f);
  return a;
}

int expert_steps_needed(float d1, float d2) {
  float reach = std::max(0.0f, d1 - 0.7f * kGraspRadius);
  float carry = std::max(0.0f, d2 - 0.01f);
  float eff = kDeltaMax * 0.92f - kExpertNoise;
  return int(std::ceil(reach / eff)) + 1 + int(std::ceil(carry / eff));
}

EnvState sample_scene(std::uint64_t layout_seed, int color, int shape, int zone, int alt_zone,
                      int distractor_count, int step_budget) {
  if (zone < 0 || zone >= kNumZones) throw std::invalid_argument("sample_scene: bad zone");
  if (color < 0 || color >= kNumColors || shape < 0 || shape >= kNumShapes)
    throw std::invalid_argument("sample_scene: bad object descriptor");

  EnvState s;
  s.zone = zone;
  s.object.color = color;
  s.object.shape = shape;

  std::uint64_t i = 0;
  auto draw = [&](float lo, float hi) { return float(rng::uniform_in(layout_seed, i++, lo, hi)); };

  const auto& zc = kZoneCenters[size_t(zone)];
  for (int tries = 0;; ++tries) {
    if (tries > 20000) throw std::runtime_error("sample_scene: layout rejection did not converge");
    float gx = draw(kSpawnMin, kSpawnMax), gy = draw(kSpawnMin, kSpawnMax);
    float ox = draw(kSpawnMin, kSpawnMax), oy = draw(kSpawnMin, kSpawnMax);
    float d1 = std::sqrt((gx - ox) * (gx - ox) + (gy - oy) * (gy - oy));
    float d2 = std::sqrt((ox - zc[0]) * (ox - zc[0]) + (oy - zc[1]) * (oy - zc[1]));
    if (d1 < 0.05f || d2 < 0.20f) continue;
    if (expert_steps_needed(d1, d2) > step_budget) continue;
    if (alt_zone >= 0) {
      const auto& az = kZoneCenters[size_t(alt_zone)];
      float d2b = std::sqrt((ox - az[0]) * (ox - az[0]) + (oy - az[1]) * (oy - az[1]));
      if (d2b < 0.20f || expert_steps_needed(d1, d2b) > step_budget) continue;
    }
    s.gripper = {gx, gy};
    s.object.pos = {ox, oy};
    break;
  }

  // Distractor spawns avoid the object and every zone center, so the same
  // draws stay valid for a twin that only swaps the active zone.
  for (int d = 0; d < distractor_count; ++d) {
    for (int tries = 0;; ++tries) {
      if (tries > 20000) throw std::runtime_error("sample_scene: distractor rejection did not converge");
      ObjectSpec spec;
      spec.pos = {draw(kSpawnMin, kSpawnMax), draw(kSpawnMin, kSpawnMax)};
      spec.color = int(rng::index(layout_seed, i++, kNumColors));
      spec.shape = int(rng::index(layout_seed, i++, kNumShapes));
      if (spec.color == color && spec.shape == shape) continue;
      if (dist2d(spec.pos, s.object.pos) < 0.12f) continue;
      bool near_zone = false;
      for (const auto& z : kZoneCenters)
        if (dist2d(spec.pos, z) < 0.12f) near_zone = true;
      if (near_zone) continue;
      s.distractors.push_back(spec);
      break;
    }
  }
  return s;
}

static const char* kColorNames[kNumColors] = {"red", "green", "blue", "yellow"};
static const char* kShapeNames[kNumShapes] = {"circle", "square", "triangle"};
static const char* kZoneNames[kNumZones] = {"top_left", "top_right", "bottom_left", "bottom_right"};

// Token layout: 0 pad, 1 move, 2 to, 3..6 colors, 7..9 shapes, 10..13 zones.
constexpr Eigen::Index kTokMove = 1, kTokTo = 2, kTokColor0 = 3, kTokShape0 = 7, kTokZone0 = 10;

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> v(kVocabSize);
    v[0] = "<pad>";
    v[1] = "move";
    v[2] = "to";
    for (int c = 0; c < kNumColors; ++c) v[size_t(kTokColor0) + size_t(c)] = kColorNames[c];
    for (int s = 0; s < kNumShapes; ++s) v[size_t(kTokShape0) + size_t(s)] = kShapeNames[s];
    for (int z = 0; z < kNumZones; ++z) v[size_t(kTokZone0) + size_t(z)] = kZoneNames[z];
    for (size_t t = size_t(kTokZone0) + kNumZones; t < size_t(kVocabSize); ++t)
      v[t] = "<reserved_" + std::to_string(t) + ">";
    return v;
  }();
  return vocab;
}

std::vector<Eigen::Index> instruction_tokens(int color, int shape, int zone) {
  if (color < 0 || color >= kNumColors || shape < 0 || shape >= kNumShapes || zone < 0 ||
      zone >= kNumZones)
    throw std::invalid_argument("instruction_tokens: descriptor out of range");
  return {kTokMove, kTokColor0 + color, kTokShape0 + shape, kTokTo, kTokZone0 + zone};
}

int zone_index(const std::string& name) {
  for (int z = 0; z < kNumZones; ++z)
    if (name == kZoneNames[z]) return z;
  return -1;
}

const char* zone_name(int zone) { return kZoneNames[zone]; }
const char* color_name(int color) { return kColorNames[color]; }
const char* shape_name(int shape) { return kShapeNames[shape]; }

}  // namespace jepa::env
