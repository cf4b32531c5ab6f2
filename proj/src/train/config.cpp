#include "jepa/train/config.hpp"

#include "jepa/data/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace jepa::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (beta < 0.0f) throw std::invalid_argument("config: beta must be >= 0");
  if (warmup_steps < 0 || total_steps <= 0 || warmup_steps > total_steps)
    throw std::invalid_argument("config: need 0 <= warmup_steps <= total_steps, total_steps > 0");
  if (mix_ratio < 0.0f || mix_ratio > 1.0f)
    throw std::invalid_argument("config: mix_ratio must lie in [0,1]");
  if (batch_size <= 0) throw std::invalid_argument("config: batch_size must be > 0");
  if (lr_backbone <= 0.0f || lr_action <= 0.0f)
    throw std::invalid_argument("config: learning rates must be > 0");
  if (checkpoint_every <= 0) throw std::invalid_argument("config: checkpoint_every must be > 0");
  if (action_dim != 3 && action_dim != 7)
    throw std::invalid_argument("config: action_dim must be 3 or 7");
  if (horizon_act != data::kActionHorizon)
    throw std::invalid_argument("config: horizon_act must be " +
                                std::to_string(data::kActionHorizon));
  model().validate();
}

ModelConfig TrainConfig::model() const {
  ModelConfig m;
  m.encoder.frame_hw = frame_hw;
  m.encoder.patch = patch;
  m.encoder.d_v = d_v;
  m.encoder.layers = encoder_layers;
  m.encoder.heads = encoder_heads;
  m.encoder.mlp_mult = mlp_mult;

  m.backbone.d_model = d_model;
  m.backbone.layers = backbone_layers;
  m.backbone.heads = backbone_heads;
  m.backbone.mlp_mult = mlp_mult;
  m.backbone.frame_hw = frame_hw;
  m.backbone.patch = patch;
  m.backbone.views = 2;
  m.backbone.horizon = horizon;
  m.backbone.latent_k = latent_k;
  m.backbone.action_tokens = action_tokens;
  m.backbone.vocab = env::kVocabSize;

  m.wm.d_s = d_s;
  m.wm.d_model = d_model;
  m.wm.layers = wm_layers;
  m.wm.heads = wm_heads;
  m.wm.mlp_mult = mlp_mult;
  m.wm.horizon = horizon;
  m.wm.latent_k = m.backbone.latent_k_resolved();
  m.wm.n_state = 2 * m.encoder.tokens_per_view();

  m.head.width = head_width;
  m.head.layers = head_layers;
  m.head.heads = head_heads;
  m.head.mlp_mult = mlp_mult;
  m.head.horizon_act = horizon_act;
  m.head.action_dim = action_dim;
  m.head.denoise_steps = denoise_steps;
  m.head.d_model = d_model;
  m.head.m_cond = action_tokens;
  m.head.proprio_dim = data::kProprioDim;
  return m;
}

static json to_json_obj(const TrainConfig& c) {
  return {{"horizon", c.horizon},
          {"latent_k", c.latent_k},
          {"d_model", c.d_model},
          {"backbone_layers", c.backbone_layers},
          {"backbone_heads", c.backbone_heads},
          {"d_s", c.d_s},
          {"wm_layers", c.wm_layers},
          {"wm_heads", c.wm_heads},
          {"head_width", c.head_width},
          {"head_layers", c.head_layers},
          {"head_heads", c.head_heads},
          {"d_v", c.d_v},
          {"encoder_layers", c.encoder_layers},
          {"encoder_heads", c.encoder_heads},
          {"patch", c.patch},
          {"frame_hw", c.frame_hw},
          {"action_tokens", c.action_tokens},
          {"denoise_steps", c.denoise_steps},
          {"mlp_mult", c.mlp_mult},
          {"action_dim", c.action_dim},
          {"horizon_act", c.horizon_act},
          {"beta", c.beta},
          {"lr_backbone", c.lr_backbone},
          {"lr_action", c.lr_action},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps},
          {"total_steps", c.total_steps},
          {"batch_size", c.batch_size},
          {"mix_ratio", c.mix_ratio},
          {"seed", c.seed},
          {"robot_data", c.robot_data},
          {"human_data", c.human_data},
          {"out_dir", c.out_dir},
          {"checkpoint_every", c.checkpoint_every}};
}

std::string TrainConfig::to_json() const { return to_json_obj(*this).dump(2); }

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  json known = to_json_obj(c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw std::invalid_argument("config: unknown field '" + it.key() + "'");

  auto geti = [&](const char* k, int& v) { if (j.contains(k)) v = j.at(k).get<int>(); };
  auto getx = [&](const char* k, Eigen::Index& v) {
    if (j.contains(k)) v = j.at(k).get<Eigen::Index>();
  };
  auto getf = [&](const char* k, float& v) { if (j.contains(k)) v = j.at(k).get<float>(); };
  auto gets = [&](const char* k, std::string& v) {
    if (j.contains(k)) v = j.at(k).get<std::string>();
  };
  geti("horizon", c.horizon);
  geti("latent_k", c.latent_k);
  getx("d_model", c.d_model);
  geti("backbone_layers", c.backbone_layers);
  geti("backbone_heads", c.backbone_heads);
  getx("d_s", c.d_s);
  geti("wm_layers", c.wm_layers);
  geti("wm_heads", c.wm_heads);
  getx("head_width", c.head_width);
  geti("head_layers", c.head_layers);
  geti("head_heads", c.head_heads);
  getx("d_v", c.d_v);
  geti("encoder_layers", c.encoder_layers);
  geti("encoder_heads", c.encoder_heads);
  geti("patch", c.patch);
  geti("frame_hw", c.frame_hw);
  geti("action_tokens", c.action_tokens);
  geti("denoise_steps", c.denoise_steps);
  geti("mlp_mult", c.mlp_mult);
  geti("action_dim", c.action_dim);
  geti("horizon_act", c.horizon_act);
  getf("beta", c.beta);
  getf("lr_backbone", c.lr_backbone);
  getf("lr_action", c.lr_action);
  getf("weight_decay", c.weight_decay);
  geti("warmup_steps", c.warmup_steps);
  geti("total_steps", c.total_steps);
  geti("batch_size", c.batch_size);
  getf("mix_ratio", c.mix_ratio);
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  gets("robot_data", c.robot_data);
  gets("human_data", c.human_data);
  gets("out_dir", c.out_dir);
  geti("checkpoint_every", c.checkpoint_every);
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot read '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

std::string TrainConfig::hash() const {
  std::string s = to_json_obj(*this).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

float lr_at(int step, float peak, int warmup, int total) {
  if (step < 0 || step > total) throw std::invalid_argument("lr_at: step outside [0,total]");
  if (step < warmup) return peak * float(step) / float(warmup);
  if (step >= total) return 0.0f;
  double p = double(step - warmup) / double(total - warmup);
  return float(double(peak) * 0.5 * (1.0 + std::cos(p * 3.141592653589793)));
}

}  // namespace jepa::train
