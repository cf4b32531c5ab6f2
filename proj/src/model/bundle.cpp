#include "jepa/model/bundle.hpp"

#include <stdexcept>

namespace jepa {

void ModelConfig::validate() const {
  encoder.validate();
  backbone.validate();
  wm.validate();
  head.validate();
  if (wm.d_model != backbone.d_model || head.d_model != backbone.d_model)
    throw std::invalid_argument("model config: d_model must agree across modules");
  if (wm.horizon != backbone.horizon)
    throw std::invalid_argument("model config: horizon must agree between backbone and world model");
  if (wm.latent_k != backbone.latent_k_resolved())
    throw std::invalid_argument("model config: latent_k must agree between backbone and world model");
  if (wm.n_state != 2 * encoder.tokens_per_view())
    throw std::invalid_argument("model config: n_state must equal 2 x encoder tokens per view");
  if (wm.d_s != encoder.d_v)
    throw std::invalid_argument("model config: world model width must equal encoder d_v");
  if (head.m_cond != backbone.action_tokens)
    throw std::invalid_argument("model config: head conditioning length must equal action_tokens");
  if (backbone.frame_hw != encoder.frame_hw)
    throw std::invalid_argument("model config: frame size must agree between backbone and encoder");
}

void ModelBundle::init(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  cfg = c;
  rng::KeyStream ks(seed, rng::kParamInit);
  encoder.init(c.encoder, ks);
  backbone.init(c.backbone, ks);
  wm.init(c.wm, ks);
  head.init(c.head, ks);
}

std::vector<NamedParameter> ModelBundle::named_params() {
  std::vector<NamedParameter> out;
  encoder.collect("encoder", out);
  backbone.collect("backbone", 0, out);
  wm.collect("wm", 0, out);
  head.collect("head", 1, out);
  return out;
}

}  // namespace jepa
