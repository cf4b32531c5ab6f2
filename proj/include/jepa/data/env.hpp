#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace jepa::env {

// Scene geometry lives in [0,1]^2 scene units; y grows downward like pixels.
constexpr int kFrameHW = 64;
constexpr float kDeltaMax = 0.25f;
constexpr float kGraspRadius = 0.08f;
constexpr float kSuccessRadius = 0.05f;
constexpr float kSceneMin = 0.05f;
constexpr float kSceneMax = 0.95f;
constexpr float kSpawnMin = 0.12f;
constexpr float kSpawnMax = 0.88f;
constexpr float kObjectRadius = 0.06f;
constexpr float kDistractorRadius = 0.045f;
constexpr float kZoneHalf = 0.10f;
constexpr float kCropHalf = 0.25f;
constexpr float kExpertNoise = 0.02f;
constexpr int kNumColors = 4;
constexpr int kNumShapes = 3;
constexpr int kNumZones = 4;
constexpr int kVocabSize = 64;

extern const std::array<std::array<float, 2>, kNumZones> kZoneCenters;

struct NuisanceConfig {
  int camera_jitter_px = 0;
  float background_flicker_amp = 0.0f;
  int distractor_count = 0;
  float lighting_drift_amp = 0.0f;
  void validate() const;
};

struct ObjectSpec {
  std::array<float, 2> pos{0.0f, 0.0f};
  int color = 0;
  int shape = 0;
};

struct EnvState {
  std::array<float, 2> gripper{0.5f, 0.5f};
  ObjectSpec object;
  int zone = 0;
  bool holding = false;
  bool closed = false;  // last gripper command; grasp needs an open->close edge
  std::vector<ObjectSpec> distractors;
};

// Deterministic point kinematics. Deltas clip to +-kDeltaMax, the gripper
// clips to scene bounds, the last action dim >= 0.5 commands "closed".
EnvState step_env(const EnvState& s, const std::vector<float>& action);

bool success(const EnvState& s);

// Scripted expert: approach, grasp on an open->close edge, carry to the zone,
// then hold. Uniform +-kExpertNoise on every emitted dim.
std::vector<float> expert_action(const EnvState& s, std::uint64_t noise_key, int step_index,
                                 int action_dim);

// Conservative step count the expert needs for gripper->object distance d1 and
// object->zone distance d2.
int expert_steps_needed(float d1, float d2);

// Rejection-samples a solvable scene. alt_zone >= 0 additionally constrains
// the layout to be solvable toward that zone (paired twins must share layouts,
// so the draw sequence cannot depend on which of the two zones is active).
EnvState sample_scene(std::uint64_t layout_seed, int color, int shape, int zone, int alt_zone,
                      int distractor_count, int step_budget);

const std::vector<std::string>& vocabulary();
std::vector<Eigen::Index> instruction_tokens(int color, int shape, int zone);
int zone_index(const std::string& name);  // -1 when unknown
const char* zone_name(int zone);
const char* color_name(int color);
const char* shape_name(int shape);

}  // namespace jepa::env
