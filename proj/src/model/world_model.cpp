#include "jepa/model/world_model.hpp"

#include <stdexcept>
#include <string>

namespace jepa {

void WorldModelConfig::validate() const {
  if (d_s <= 0 || layers <= 0 || heads <= 0 || d_s % heads != 0)
    throw std::invalid_argument("world model config: heads must divide d_s");
  if (d_model <= 0) throw std::invalid_argument("world model config: d_model must be > 0");
  if (horizon <= 0 || latent_k <= 0 || n_state <= 0)
    throw std::invalid_argument("world model config: horizon, latent_k, n_state must be > 0");
}

AttnMask build_mask(int t, int k, int n_s) {
  if (t <= 0 || k <= 0 || n_s <= 0)
    throw std::invalid_argument("build_mask: t, k, n_s must be > 0");
  const Eigen::Index block = Eigen::Index(k) + n_s;
  const Eigen::Index n = Eigen::Index(t) * block;
  AttnMask m(n, n, false);
  for (Eigen::Index p = 0; p < n; ++p) {
    Eigen::Index bp = p / block;
    for (Eigen::Index q = 0; q <= (bp + 1) * block - 1; ++q) m.set(p, q, true);
  }
  return m;
}

void WorldModel::init(const WorldModelConfig& c, rng::KeyStream& ks) {
  c.validate();
  cfg = c;
  latent_proj.init(c.d_model, c.d_s, ks, true);
  time_table = Parameter(Tensor::randn({Eigen::Index(c.horizon), c.d_s}, ks.next(), kInitStd), true);
  role_table = Parameter(Tensor::randn({2, c.d_s}, ks.next(), kInitStd), true);
  blocks.resize(size_t(c.layers));
  for (auto& b : blocks) b.init(c.d_s, c.heads, c.mlp_mult, ks, true);
  ln_f.init(c.d_s, true);
  head.init(c.d_s, c.d_s, ks, true);
  mask = finalized(build_mask(c.horizon, c.latent_k, int(c.n_state)));
}

Tensor WorldModel::predict(const Tensor& states, const Tensor& z) const {
  if (states.rank() != 4 || z.rank() != 4)
    throw std::invalid_argument("predict: states and latents must be rank 4");
  if (states.dim(1) != z.dim(1))
    throw std::invalid_argument("predict: state steps " + std::to_string(states.dim(1)) +
                                " != latent steps " + std::to_string(z.dim(1)));
  if (states.dim(0) != z.dim(0))
    throw std::invalid_argument("predict: batch mismatch");
  if (states.dim(1) != cfg.horizon || states.dim(2) != cfg.n_state || states.dim(3) != cfg.d_s)
    throw std::invalid_argument("predict: states shape " + shape_str(states.shape()) +
                                " does not match config");
  if (z.dim(2) != cfg.latent_k || z.dim(3) != cfg.d_model)
    throw std::invalid_argument("predict: latents shape " + shape_str(z.shape()) +
                                " does not match config");

  const Eigen::Index b = states.dim(0);
  const Eigen::Index block = cfg.block_len();
  const Eigen::Index s = cfg.seq_len();

  Tensor zp = latent_proj.forward(z);                    // [B,T,K,d_s]
  Tensor x = concat({zp, states}, 2);                    // [B,T,K+N_s,d_s]
  x = reshape(x, {b, s, cfg.d_s});

  std::vector<Eigen::Index> time_ids, role_ids;
  for (int i = 0; i < cfg.horizon; ++i)
    for (Eigen::Index j = 0; j < block; ++j) {
      time_ids.push_back(i);
      role_ids.push_back(j < cfg.latent_k ? 0 : 1);
    }
  Tensor extras = add(embedding(time_table.value(), time_ids),
                      embedding(role_table.value(), role_ids));  // [S,d_s]
  x = add_bcast0(x, extras);

  for (const auto& blk : blocks) x = blk.forward(x, mask);
  x = ln_f.forward(x);

  std::vector<Eigen::Index> state_idx;
  for (int i = 0; i < cfg.horizon; ++i)
    for (Eigen::Index j = 0; j < cfg.n_state; ++j)
      state_idx.push_back(Eigen::Index(i) * block + cfg.latent_k + j);
  Tensor y = head.forward(gather_tokens(x, state_idx));  // [B, T*N_s, d_s]
  return reshape(y, {b, Eigen::Index(cfg.horizon), cfg.n_state, cfg.d_s});
}

Tensor wm_loss(const Tensor& pred, const Tensor& targets) {
  if (pred.shape() != targets.shape())
    throw std::invalid_argument("wm_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(targets.shape()));
  return mse(pred, targets);
}

void WorldModel::collect(const std::string& prefix, int group, std::vector<NamedParameter>& out) {
  latent_proj.collect(prefix + ".latent_proj", group, out);
  out.push_back({prefix + ".time_table", &time_table, group});
  out.push_back({prefix + ".role_table", &role_table, group});
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), group, out);
  ln_f.collect(prefix + ".ln_f", group, out);
  head.collect(prefix + ".head", group, out);
}

}  // namespace jepa
