#pragma once

#include "jepa/data/dataset.hpp"
#include "jepa/model/bundle.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jepa::eval {

enum class PolicyKind { kModel, kExpert, kRandom };
const char* policy_name(PolicyKind p);
PolicyKind policy_from_name(const std::string& name);

// Named nuisance setting; rollout r runs under levels[r % levels.size()], so
// every policy sees the identical scene/nuisance schedule.
struct NuisanceLevel {
  std::string name;
  env::NuisanceConfig config;
};
std::vector<NuisanceLevel> default_nuisance_levels();

struct EvalOptions {
  int n_rollouts = 50;
  std::uint64_t seed = 0;
  PolicyKind policy = PolicyKind::kModel;
  int budget_ticks = 4 * data::kActionHorizon;
  int denoise_steps = 0;  // 0 takes the checkpoint config value
  std::vector<NuisanceLevel> levels;  // empty takes default_nuisance_levels()
  void validate() const;
};

struct RolloutResult {
  int id = 0;
  std::string nuisance;
  bool success = false;
  int success_tick = -1;  // first tick whose post-step state satisfies success
  float final_dist = 0.0f;
  float action_mse = 0.0f;  // vs the scripted expert, normalized action units
  std::optional<float> latent_mse;
};

struct NuisanceBucket {
  std::string name;
  int count = 0;
  int successes = 0;
};

struct EvalReport {
  std::string policy;
  int n_rollouts = 0;
  std::uint64_t seed = 0;
  int horizon = 0;  // checkpoint future-frame horizon T
  int budget_ticks = 0;
  int denoise_steps = 0;
  float success_rate = 0.0f;
  std::optional<float> action_mse;
  std::optional<float> latent_mse;
  // Computed by the paired-data relevance probe, never by run_eval.
  std::optional<float> action_relevance;
  std::vector<NuisanceBucket> per_nuisance;
  std::vector<RolloutResult> rollouts;  // sorted by id
};

// Closed-loop evaluation: every kActionHorizon ticks the model policy renders
// the current views, runs the backbone, generates one action chunk, and
// executes it open-loop until the next replan. Expert and random policies act
// tick-by-tick through the same budget and success accounting. The latent
// field is the world model's teacher-forced next-state error on each
// rollout's own first horizon+1 observations.
EvalReport run_eval(const ModelBundle& model, const EvalOptions& opts);

// Byte-stable serializations; missing optional fields appear as explicit
// "skipped: ..." strings.
std::string report_json(const EvalReport& r);
std::string report_csv(const EvalReport& r);
// Writes <prefix>.json and <prefix>.csv.
void write_report(const EvalReport& r, const std::string& prefix);

}  // namespace jepa::eval
