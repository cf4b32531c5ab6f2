#pragma once

#include "jepa/model/transformer.hpp"

namespace jepa {

struct TargetEncoderConfig {
  int frame_hw = 64;
  int patch = 8;
  Eigen::Index d_v = 64;
  int layers = 2;
  int heads = 4;
  int mlp_mult = 4;
  Eigen::Index tokens_per_view() const;
  void validate() const;
};

// Frozen world-state encoder. Randomly initialized, never trained; every
// output is a leaf (no tape), so no gradient can reach these parameters.
struct TargetEncoder {
  TargetEncoderConfig cfg;
  LinearM patch_embed;
  Parameter pos;  // [N_v, d_v]
  std::vector<EncoderBlock> blocks;
  LayerNormM ln_f;
  MaskPtr full_mask;

  void init(const TargetEncoderConfig& c, rng::KeyStream& ks);
  // [H, W, 3] -> [N_v, d_v]
  Tensor encode_frame(const Tensor& frame) const;
  // frames [2, H, W, 3] -> [2*N_v, d_v], view 0 tokens then view 1 tokens
  Tensor encode_state(const Tensor& frames) const;
  void collect(const std::string& prefix, std::vector<NamedParameter>& out);
};

}  // namespace jepa
