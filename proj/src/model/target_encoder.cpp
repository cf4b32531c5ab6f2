#include "jepa/model/target_encoder.hpp"

#include <stdexcept>
#include <string>

namespace jepa {

Eigen::Index TargetEncoderConfig::tokens_per_view() const {
  Eigen::Index g = frame_hw / patch;
  return g * g;
}

void TargetEncoderConfig::validate() const {
  if (frame_hw <= 0 || patch <= 0 || frame_hw % patch != 0)
    throw std::invalid_argument("target encoder config: patch must divide frame size");
  if (d_v <= 0 || layers <= 0 || heads <= 0 || d_v % heads != 0)
    throw std::invalid_argument("target encoder config: heads must divide d_v");
}

void TargetEncoder::init(const TargetEncoderConfig& c, rng::KeyStream& ks) {
  c.validate();
  cfg = c;
  patch_embed.init(Eigen::Index(c.patch) * c.patch * 3, c.d_v, ks, false);
  pos = Parameter(Tensor::randn({c.tokens_per_view(), c.d_v}, ks.next(), kInitStd), false);
  blocks.resize(size_t(c.layers));
  for (auto& b : blocks) b.init(c.d_v, c.heads, c.mlp_mult, ks, false);
  ln_f.init(c.d_v, false);
  full_mask = finalized(AttnMask::full(c.tokens_per_view(), c.tokens_per_view()));
}

Tensor TargetEncoder::encode_frame(const Tensor& frame) const {
  if (frame.rank() != 3 || frame.dim(0) != cfg.frame_hw || frame.dim(1) != cfg.frame_hw ||
      frame.dim(2) != 3)
    throw std::invalid_argument("encode_frame: expected [" + std::to_string(cfg.frame_hw) + "," +
                                std::to_string(cfg.frame_hw) + ",3], got " +
                                shape_str(frame.shape()));
  NoGradGuard ng;
  Tensor x = add(patch_embed.forward(patchify(frame, cfg.patch)), pos.value());
  for (const auto& b : blocks) x = b.forward(x, full_mask);
  return ln_f.forward(x);
}

Tensor TargetEncoder::encode_state(const Tensor& frames) const {
  if (frames.rank() != 4 || frames.dim(0) != 2)
    throw std::invalid_argument("encode_state: expected exactly 2 views, got " +
                                shape_str(frames.shape()));
  NoGradGuard ng;
  std::vector<Tensor> views;
  for (int v = 0; v < 2; ++v)
    views.push_back(encode_frame(
        reshape(slice(frames, 0, v, 1), {frames.dim(1), frames.dim(2), frames.dim(3)})));
  return concat(views, 0);
}

void TargetEncoder::collect(const std::string& prefix, std::vector<NamedParameter>& out) {
  patch_embed.collect(prefix + ".patch_embed", 0, out);
  out.push_back({prefix + ".pos", &pos, 0});
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), 0, out);
  ln_f.collect(prefix + ".ln_f", 0, out);
}

}  // namespace jepa
