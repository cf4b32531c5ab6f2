#pragma once

#include "jepa/model/bundle.hpp"
#include "jepa/train/config.hpp"
#include "jepa/train/optim.hpp"

#include <string>
#include <vector>

namespace jepa::train {

struct StepMetrics {
  int step = 0;
  float loss_total = 0.0f;
  float loss_wm = 0.0f;
  float loss_fm = 0.0f;
  float lr0 = 0.0f;
  float lr1 = 0.0f;
};

struct CheckpointInfo {
  TrainConfig config;
  int step = 0;
  std::int64_t adam_t = 0;
  std::vector<StepMetrics> history;
};

// Single file: 8-byte magic, length-prefixed JSON header (version, config,
// config hash, step, metric history), then length-prefixed named f32 tensor
// records for every parameter (frozen encoder included) and every non-empty
// optimizer moment buffer.
void save_checkpoint(const std::string& path, const TrainConfig& config, int step,
                     ModelBundle& model, const AdamW* opt,
                     const std::vector<StepMetrics>& history);

CheckpointInfo read_checkpoint_info(const std::string& path);

// Rebuilds nothing: model (and opt, when given) must already match the
// header's config. Parameter sets must agree exactly by name and shape.
CheckpointInfo load_checkpoint(const std::string& path, ModelBundle& model, AdamW* opt);

}  // namespace jepa::train
