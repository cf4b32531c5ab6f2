#pragma once

#include "jepa/core/tensor.hpp"
#include "jepa/data/env.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jepa::data {

constexpr int kFormatVersion = 1;
constexpr int kActionHorizon = 7;
constexpr int kProprioDim = 8;
inline constexpr char kManifestMagic[] = "JEPA-ACT-DATASET";
inline constexpr char kRecordMagic[8] = {'J', 'E', 'P', 'A', 'R', 'E', 'C', '1'};

// Per-dimension raw action range; the last dim is the gripper command.
struct ActionBounds {
  std::vector<std::array<float, 2>> dims;
  int gripper_dim() const { return int(dims.size()) - 1; }
  static ActionBounds for_dim(int action_dim);
  void validate() const;
};

enum class TwinKind { kBase, kSameAction, kDiffAction };
const char* twin_kind_name(TwinKind k);
TwinKind twin_kind_from_name(const std::string& name);

struct Episode {
  // frames [V, T+1, H, W, 3] in [0,1]
  Tensor frames;
  std::vector<Eigen::Index> instruction;
  // raw environment units, [kActionHorizon, A]; absent for action-free data
  std::optional<Tensor> actions;

  // metadata
  std::int64_t index = 0;
  std::uint64_t episode_seed = 0;
  std::uint64_t layout_seed = 0;
  std::uint64_t nuisance_seed = 0;
  std::uint64_t action_noise_seed = 0;
  int burn_in = 0;
  env::EnvState state0;
  std::array<float, kProprioDim> proprio{};
  std::array<float, 2> final_object_pos{};
  bool task_success = false;
  TwinKind twin = TwinKind::kBase;
  std::int64_t twin_base = -1;

  int views() const { return int(frames.dim(0)); }
  int steps() const { return int(frames.dim(1)); }  // T+1
};

struct DatasetOptions {
  int n_episodes = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> task_mix;  // zone names; empty means all zones
  env::NuisanceConfig nuisance;
  bool paired = false;
  bool with_actions = true;
  int action_dim = 3;
  int horizon = 8;  // T; episodes carry T+1 frames
};

// Moderate preset used as the generation default; paired twins need nonzero
// nuisance for the same-action twin to differ from its base at all.
env::NuisanceConfig default_nuisance();

// Writes manifest.json + episodes.bin. Paired mode emits, per base episode, a
// same-action/different-nuisance twin and a different-action/same-nuisance
// twin (records base, same, diff in sequence).
void generate_dataset(const DatasetOptions& opts);

struct Dataset {
  std::string dir;
  int format_version = 0;
  int n_episodes = 0;
  int views = 0;
  int frames_per_episode = 0;  // T+1
  int frame_hw = 0;
  int action_dim = 0;
  int action_horizon = 0;
  bool paired = false;
  bool with_actions = false;
  std::uint64_t seed = 0;
  ActionBounds bounds;
  env::NuisanceConfig nuisance;
  std::vector<std::string> vocabulary;
  std::vector<Episode> episodes;

  static Dataset load(const std::string& dir);
  const Episode& at(size_t i) const { return episodes.at(i); }
  int horizon() const { return frames_per_episode - 1; }
};

// V=1 duplicates the view, V=2 passes through, V>2 keeps the first two.
void normalize_views(Episode& e);

// Continuous dims map affinely onto [0,1]; the gripper dim binarizes at 0.5
// after normalization.
Tensor preprocess_actions(const Tensor& raw, const ActionBounds& bounds);
Tensor denormalize_actions(const Tensor& normalized, const ActionBounds& bounds);

// Proprioceptive features: gripper x/y, holding, closed, previous action
// x/y/grip, constant 1.
std::array<float, kProprioDim> proprio_features(const env::EnvState& s,
                                                const std::vector<float>& prev_action);

}  // namespace jepa::data
