#pragma once

#include "jepa/model/transformer.hpp"

namespace jepa {

struct WorldModelConfig {
  Eigen::Index d_s = 64;      // token width after projection; equals target d_v
  Eigen::Index d_model = 128; // backbone output width
  int layers = 4;
  int heads = 4;
  int mlp_mult = 4;
  int horizon = 8;            // T
  int latent_k = 3;           // K
  Eigen::Index n_state = 128; // N_s tokens per step
  void validate() const;
  Eigen::Index block_len() const { return Eigen::Index(latent_k) + n_state; }
  Eigen::Index seq_len() const { return Eigen::Index(horizon) * block_len(); }
};

// Time-causal block mask over T blocks of (K + N_s) tokens: token p may read
// token q iff block(q) <= block(p).
AttnMask build_mask(int t, int k, int n_s);

// Predicts s_{t_{i+1}} from the state-token outputs of block i under teacher
// forcing. State inputs are targets from the frozen encoder and enter as
// leaves; gradient reaches the backbone only through the latents.
struct WorldModel {
  WorldModelConfig cfg;
  LinearM latent_proj;  // d_model -> d_s
  Parameter time_table; // [T, d_s], added to every token of block i
  Parameter role_table; // [2, d_s], row 0 latents, row 1 states
  std::vector<EncoderBlock> blocks;
  LayerNormM ln_f;
  LinearM head;         // d_s -> d_s next-state readout
  MaskPtr mask;
  // Test hook: a corrupted mask here must make the soundness probe fail.
  void override_mask(MaskPtr m) { mask = std::move(m); }

  void init(const WorldModelConfig& c, rng::KeyStream& ks);
  // states [B, T, N_s, d_s] (s_{t_0..T-1}), z [B, T, K, d_model] -> [B, T, N_s, d_s]
  Tensor predict(const Tensor& states, const Tensor& z) const;
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

// Mean squared error over every predicted token, (1/(B*T*N_s*d_s)) * sum of
// squared differences.
Tensor wm_loss(const Tensor& pred, const Tensor& targets);

}  // namespace jepa
