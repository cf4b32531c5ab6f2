#include "jepa/model/backbone.hpp"

#include <stdexcept>
#include <string>

namespace jepa {

int BackboneConfig::latent_k_resolved() const {
  if (latent_k > 0) return latent_k;
  if (horizon <= 0 || 24 % horizon != 0)
    throw std::invalid_argument("backbone config: horizon " + std::to_string(horizon) +
                                " does not divide 24; pass an explicit latent_k");
  return 24 / horizon;
}

Eigen::Index BackboneConfig::image_tokens() const {
  Eigen::Index g = frame_hw / patch;
  return Eigen::Index(views) * g * g;
}

Eigen::Index BackboneConfig::max_seq_len() const {
  return image_tokens() + max_instruction +
         Eigen::Index(horizon) * latent_k_resolved() + action_tokens;
}

void BackboneConfig::validate() const {
  if (d_model <= 0 || layers <= 0 || heads <= 0 || d_model % heads != 0)
    throw std::invalid_argument("backbone config: heads must divide d_model");
  if (frame_hw <= 0 || patch <= 0 || frame_hw % patch != 0)
    throw std::invalid_argument("backbone config: patch must divide frame size");
  if (views < 1) throw std::invalid_argument("backbone config: need at least one view");
  if (action_tokens <= 0) throw std::invalid_argument("backbone config: action_tokens must be > 0");
  if (vocab <= 0) throw std::invalid_argument("backbone config: empty vocabulary");
  (void)latent_k_resolved();
}

void Backbone::init(const BackboneConfig& c, rng::KeyStream& ks) {
  c.validate();
  cfg = c;
  patch_embed.init(Eigen::Index(c.patch) * c.patch * 3, c.d_model, ks, true);
  token_table = Parameter(Tensor::randn({c.vocab, c.d_model}, ks.next(), kInitStd), true);
  latent_table =
      Parameter(Tensor::randn({Eigen::Index(c.horizon), c.d_model}, ks.next(), kInitStd), true);
  action_table = Parameter(Tensor::randn({1, c.d_model}, ks.next(), kInitStd), true);
  pos = Parameter(Tensor::randn({c.max_seq_len(), c.d_model}, ks.next(), kInitStd), true);
  blocks.resize(size_t(c.layers));
  for (auto& b : blocks) b.init(c.d_model, c.heads, c.mlp_mult, ks, true);
  ln_f.init(c.d_model, true);
}

BackboneSequence Backbone::build_sequence(const Tensor& frames_t0,
                                          const std::vector<Eigen::Index>& instruction) const {
  if (frames_t0.rank() != 4 || frames_t0.dim(0) != cfg.views ||
      frames_t0.dim(1) != cfg.frame_hw || frames_t0.dim(2) != cfg.frame_hw ||
      frames_t0.dim(3) != 3)
    throw std::invalid_argument("build_sequence: expected frames [" + std::to_string(cfg.views) +
                                "," + std::to_string(cfg.frame_hw) + "," +
                                std::to_string(cfg.frame_hw) + ",3], got " +
                                shape_str(frames_t0.shape()));
  if (Eigen::Index(instruction.size()) > cfg.max_instruction)
    throw std::invalid_argument("build_sequence: instruction longer than max_instruction");

  const int k = cfg.latent_k_resolved();
  BackboneSequence seq;
  seq.n_image = cfg.image_tokens();
  seq.n_instr = Eigen::Index(instruction.size());
  seq.t_steps = cfg.horizon;
  seq.k_rep = k;
  seq.m_action = cfg.action_tokens;

  std::vector<Tensor> parts;
  Shape vshape{frames_t0.dim(1), frames_t0.dim(2), frames_t0.dim(3)};
  for (int v = 0; v < cfg.views; ++v)
    parts.push_back(
        patch_embed.forward(patchify(reshape(slice(frames_t0, 0, v, 1), vshape), cfg.patch)));
  if (!instruction.empty()) parts.push_back(embedding(token_table.value(), instruction));

  std::vector<Eigen::Index> latent_ids;
  for (int i = 0; i < cfg.horizon; ++i)
    for (int r = 0; r < k; ++r) latent_ids.push_back(i);
  parts.push_back(embedding(latent_table.value(), latent_ids));
  parts.push_back(
      embedding(action_table.value(), std::vector<Eigen::Index>(size_t(cfg.action_tokens), 0)));

  Tensor x = concat(parts, 0);
  seq.tokens = add(x, slice(pos.value(), 0, 0, x.dim(0)));
  return seq;
}

BackboneOutput Backbone::forward(const std::vector<BackboneSequence>& batch, int capture_layer,
                                 Tensor* attn) const {
  if (batch.empty()) throw std::invalid_argument("backbone forward: empty batch");
  if (attn && (capture_layer < 0 || capture_layer >= int(blocks.size())))
    throw std::invalid_argument("backbone forward: capture layer out of range");
  const Eigen::Index s = batch[0].length();
  std::vector<Tensor> rows;
  for (const auto& b : batch) {
    if (b.length() != s)
      throw std::invalid_argument("backbone forward: mixed sequence lengths in batch");
    rows.push_back(b.tokens);
  }
  Tensor x = stack0(rows);
  MaskPtr causal = finalized(AttnMask::causal(s));
  for (size_t l = 0; l < blocks.size(); ++l)
    x = blocks[l].forward(x, causal, int(l) == capture_layer ? attn : nullptr);
  x = ln_f.forward(x);

  const BackboneSequence& ref = batch[0];
  const Eigen::Index base = ref.n_image + ref.n_instr;
  const Eigen::Index n_lat = Eigen::Index(ref.t_steps) * ref.k_rep;
  std::vector<Eigen::Index> lat_idx(static_cast<size_t>(n_lat));
  std::vector<Eigen::Index> act_idx(static_cast<size_t>(ref.m_action));
  for (Eigen::Index i = 0; i < n_lat; ++i) lat_idx[size_t(i)] = base + i;
  for (Eigen::Index i = 0; i < ref.m_action; ++i) act_idx[size_t(i)] = base + n_lat + i;

  BackboneOutput out;
  out.z = reshape(gather_tokens(x, lat_idx),
                  {Eigen::Index(rows.size()), Eigen::Index(ref.t_steps), Eigen::Index(ref.k_rep),
                   cfg.d_model});
  out.z_a = gather_tokens(x, act_idx);
  return out;
}

void Backbone::collect(const std::string& prefix, int group, std::vector<NamedParameter>& out) {
  patch_embed.collect(prefix + ".patch_embed", group, out);
  out.push_back({prefix + ".token_table", &token_table, group});
  out.push_back({prefix + ".latent_table", &latent_table, group});
  out.push_back({prefix + ".action_table", &action_table, group});
  out.push_back({prefix + ".pos", &pos, group});
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), group, out);
  ln_f.collect(prefix + ".ln_f", group, out);
}

}  // namespace jepa
