#pragma once

#include "jepa/model/bundle.hpp"

#include <cstdint>
#include <string>

namespace jepa::train {

struct TrainConfig {
  // model
  int horizon = 8;
  int latent_k = 0;  // 0 derives 24/horizon
  Eigen::Index d_model = 128;
  int backbone_layers = 4;
  int backbone_heads = 4;
  Eigen::Index d_s = 64;
  int wm_layers = 4;
  int wm_heads = 4;
  Eigen::Index head_width = 128;
  int head_layers = 4;
  int head_heads = 4;
  Eigen::Index d_v = 64;
  int encoder_layers = 2;
  int encoder_heads = 4;
  int patch = 8;
  int frame_hw = 64;
  int action_tokens = 32;
  int denoise_steps = 4;
  int mlp_mult = 4;
  int action_dim = 3;
  int horizon_act = 7;

  // optimization
  float beta = 1.0f;
  float lr_backbone = 3e-4f;  // group 0: backbone + world model
  float lr_action = 1e-3f;    // group 1: action head
  float weight_decay = 0.01f;
  int warmup_steps = 100;
  int total_steps = 2000;
  int batch_size = 16;
  float mix_ratio = 0.0f;  // probability a step draws the action-free stream
  std::uint64_t seed = 0;

  // data and artifacts
  std::string robot_data;
  std::string human_data;  // optional action-free stream
  std::string out_dir = "runs/default";
  int checkpoint_every = 500;

  void validate() const;
  ModelConfig model() const;
  std::string to_json() const;            // canonical, key-sorted
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_file(const std::string& path);
  std::string hash() const;               // fnv1a-64 of the canonical form, hex
};

// 0 at step 0, linear to peak at warmup, cosine to 0 at total.
float lr_at(int step, float peak, int warmup, int total);

}  // namespace jepa::train
