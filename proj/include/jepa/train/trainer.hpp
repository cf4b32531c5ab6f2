#pragma once

#include "jepa/data/dataset.hpp"
#include "jepa/train/checkpoint.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace jepa::train {

enum class StepMode { kActionFree, kActionLabeled };

// Joint optimization: L_WM only on the action-free stream, L_FM + beta*L_WM
// on the action-labeled stream. All stochastic choices are keyed by
// (seed, stream, step), so a resumed run replays the identical sequence.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  static std::unique_ptr<Trainer> resume(const std::string& ckpt_path);

  // Executes one optimizer step and appends one metrics row.
  StepMetrics train_step(StepMode mode);
  // Bernoulli(mix_ratio) on the pinned stream; steps are 1-based.
  StepMode mode_at(int step) const;
  // Full loop: interleaved steps, CSV log, periodic checkpoints.
  void run();

  int step() const { return step_; }
  ModelBundle& model() { return model_; }
  AdamW& optimizer() { return *opt_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<StepMetrics>& history() const { return history_; }
  const data::Dataset& robot_data() const { return robot_; }

  void save(const std::string& path);
  void write_metrics_csv(const std::string& path) const;

  // Observation hook; run() and train_step() invoke it after each step.
  std::function<void(const StepMetrics&)> on_step;

 private:
  Trainer(TrainConfig cfg, bool defer_data);
  void load_data();
  Tensor cache_episode_states(const data::Episode& e);

  TrainConfig cfg_;
  ModelBundle model_;
  std::unique_ptr<AdamW> opt_;
  data::Dataset robot_;
  std::optional<data::Dataset> human_;
  std::vector<Tensor> robot_states_;  // per episode [T+1, N_s, d_v] leaves
  std::vector<Tensor> human_states_;
  int step_ = 0;
  std::vector<StepMetrics> history_;
};

}  // namespace jepa::train
