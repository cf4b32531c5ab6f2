#pragma once

#include "jepa/model/transformer.hpp"

namespace jepa {

struct BackboneConfig {
  Eigen::Index d_model = 128;
  int layers = 4;
  int heads = 4;
  int mlp_mult = 4;
  int frame_hw = 64;
  int patch = 8;
  int views = 2;
  int horizon = 8;        // T
  int latent_k = 0;       // 0 derives 24/T; explicit value overrides
  int action_tokens = 32; // M
  Eigen::Index vocab = 64;
  int max_instruction = 8;

  int latent_k_resolved() const;
  Eigen::Index image_tokens() const;
  Eigen::Index max_seq_len() const;
  void validate() const;
};

// Token layout of one flattened input: [image t0 | instruction | T*K
// latents | M actions]. Latent and action positions index into that layout.
struct BackboneSequence {
  Tensor tokens;  // [S, d_model], embeddings plus positions
  Eigen::Index n_image = 0;
  Eigen::Index n_instr = 0;
  int t_steps = 0;
  int k_rep = 0;
  int m_action = 0;
  Eigen::Index length() const { return tokens.dim(0); }
};

struct BackboneOutput {
  Tensor z;    // [B, T, K, d_model]
  Tensor z_a;  // [B, M, d_model]
};

// Policy trunk. Sees only t0 frames and the instruction; later frames never
// enter, so leakage-freedom holds by construction.
struct Backbone {
  BackboneConfig cfg;
  LinearM patch_embed;
  Parameter token_table;   // [vocab, d]
  Parameter latent_table;  // [T, d], row i embeds every <latent_i> replica
  Parameter action_table;  // [1, d], shared by the M <action> replicas
  Parameter pos;           // [max_seq_len, d]

  std::vector<EncoderBlock> blocks;
  LayerNormM ln_f;

  void init(const BackboneConfig& c, rng::KeyStream& ks);
  // frames_t0 [V, H, W, 3]
  BackboneSequence build_sequence(const Tensor& frames_t0,
                                  const std::vector<Eigen::Index>& instruction) const;
  // All sequences in a batch must share one length. capture_layer >= 0 stores
  // that layer's attention weights [B*heads, S, S] in *attn.
  BackboneOutput forward(const std::vector<BackboneSequence>& batch, int capture_layer = -1,
                         Tensor* attn = nullptr) const;
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

}  // namespace jepa
