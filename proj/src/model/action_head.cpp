#include "jepa/model/action_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace jepa {

void ActionHeadConfig::validate() const {
  if (width <= 0 || layers <= 0 || heads <= 0 || width % heads != 0)
    throw std::invalid_argument("action head config: heads must divide width");
  if (width % 2 != 0) throw std::invalid_argument("action head config: width must be even");
  if (horizon_act <= 0 || action_dim <= 0)
    throw std::invalid_argument("action head config: horizon_act, action_dim must be > 0");
  if (denoise_steps < 1) throw std::invalid_argument("action head config: denoise_steps must be >= 1");
  if (d_model <= 0 || m_cond <= 0 || proprio_dim <= 0)
    throw std::invalid_argument("action head config: conditioning dims must be > 0");
}

Tensor interpolate(const Tensor& a_clean, const Tensor& eps, Scalar t) {
  if (a_clean.shape() != eps.shape())
    throw std::invalid_argument("interpolate: shape mismatch " + shape_str(a_clean.shape()) +
                                " vs " + shape_str(eps.shape()));
  if (!(t >= 0.0f && t <= 1.0f))
    throw std::invalid_argument("interpolate: t must lie in [0,1], got " + std::to_string(t));
  return add(scale(eps, 1.0f - t), scale(a_clean, t));
}

Tensor flow_integrate(const std::function<Tensor(const Tensor&, Scalar)>& field, Tensor a0,
                      int steps) {
  if (steps < 1) throw std::invalid_argument("flow_integrate: steps must be >= 1");
  const Scalar dt = 1.0f / Scalar(steps);
  Tensor a = std::move(a0);
  for (int s = 0; s < steps; ++s) a = add(a, scale(field(a, Scalar(s) * dt), dt));
  return a;
}

void ActionHead::init(const ActionHeadConfig& c, rng::KeyStream& ks) {
  c.validate();
  cfg = c;
  a_in.init(c.action_dim, c.width, ks, true);
  pos = Parameter(Tensor::randn({Eigen::Index(c.horizon_act), c.width}, ks.next(), kInitStd), true);
  t_in.init(c.width, c.width, ks, true);
  proprio_in.init(c.proprio_dim, c.width, ks, true);
  cond_proj.init(c.d_model, c.width, ks, true);
  blocks.resize(size_t(c.layers));
  for (auto& b : blocks) b.init(c.width, c.width, c.heads, c.mlp_mult, ks, true);
  ln_f.init(c.width, true);
  a_out.init(c.width, c.action_dim, ks, true);
  self_mask = finalized(AttnMask::full(c.horizon_act, c.horizon_act));
  cross_mask = finalized(AttnMask::full(c.horizon_act, Eigen::Index(c.m_cond) + 1));
}

// [B, width] of interleaved sin/cos features of t at geometric frequencies.
static Tensor time_features(const std::vector<Scalar>& t, Eigen::Index width) {
  const Eigen::Index half = width / 2;
  Tensor out = Tensor::zeros({Eigen::Index(t.size()), width});
  Scalar* o = out.data();
  for (size_t b = 0; b < t.size(); ++b)
    for (Eigen::Index i = 0; i < half; ++i) {
      double w = std::exp(-std::log(10000.0) * double(i) / double(half));
      o[Eigen::Index(b) * width + 2 * i] = Scalar(std::sin(double(t[b]) * w * 1000.0));
      o[Eigen::Index(b) * width + 2 * i + 1] = Scalar(std::cos(double(t[b]) * w * 1000.0));
    }
  return out;
}

Tensor ActionHead::velocity(const Tensor& a_t, const Tensor& t, const Tensor& z_a,
                            const Tensor& proprio) const {
  if (a_t.rank() != 3 || a_t.dim(1) != cfg.horizon_act || a_t.dim(2) != cfg.action_dim)
    throw std::invalid_argument("velocity: actions must be [B," + std::to_string(cfg.horizon_act) +
                                "," + std::to_string(cfg.action_dim) + "], got " +
                                shape_str(a_t.shape()));
  const Eigen::Index b = a_t.dim(0);
  if (t.rank() != 1 || t.dim(0) != b)
    throw std::invalid_argument("velocity: t must be [batch]");
  if (z_a.rank() != 3 || z_a.dim(0) != b || z_a.dim(1) != cfg.m_cond || z_a.dim(2) != cfg.d_model)
    throw std::invalid_argument("velocity: conditioning must be [B," + std::to_string(cfg.m_cond) +
                                "," + std::to_string(cfg.d_model) + "], got " +
                                shape_str(z_a.shape()));
  if (proprio.rank() != 2 || proprio.dim(0) != b || proprio.dim(1) != cfg.proprio_dim)
    throw std::invalid_argument("velocity: proprio must be [B," + std::to_string(cfg.proprio_dim) +
                                "]");
  std::vector<Scalar> tv(t.data(), t.data() + b);
  for (Scalar x : tv)
    if (!(x >= 0.0f && x <= 1.0f))
      throw std::invalid_argument("velocity: t must lie in [0,1], got " + std::to_string(x));

  Tensor x = add_bcast0(a_in.forward(a_t), pos.value());
  x = add_rows(x, t_in.forward(time_features(tv, cfg.width)));
  Tensor cond = concat({cond_proj.forward(z_a),
                        reshape(proprio_in.forward(proprio), {b, 1, cfg.width})},
                       1);
  for (const auto& blk : blocks) x = blk.forward(x, cond, self_mask, cross_mask);
  return a_out.forward(ln_f.forward(x));
}

Tensor ActionHead::fm_loss(const Tensor& a_clean, const Tensor& eps, const std::vector<Scalar>& t,
                           const Tensor& z_a, const Tensor& proprio) const {
  if (a_clean.shape() != eps.shape())
    throw std::invalid_argument("fm_loss: action shape mismatch");
  if (a_clean.rank() != 3 || Eigen::Index(t.size()) != a_clean.dim(0))
    throw std::invalid_argument("fm_loss: need one t per sample");
  const Eigen::Index b = a_clean.dim(0);
  const Eigen::Index per = a_clean.numel() / b;

  Tensor a_t = Tensor::zeros(a_clean.shape());
  for (Eigen::Index i = 0; i < b; ++i) {
    Scalar ti = t[size_t(i)];
    if (!(ti >= 0.0f && ti <= 1.0f))
      throw std::invalid_argument("fm_loss: t must lie in [0,1]");
    for (Eigen::Index j = 0; j < per; ++j)
      a_t.data()[i * per + j] =
          (1.0f - ti) * eps.data()[i * per + j] + ti * a_clean.data()[i * per + j];
  }
  Tensor tt = Tensor::from_vector({b}, std::vector<Scalar>(t.begin(), t.end()));
  Tensor v = velocity(a_t, tt, z_a, proprio);
  Tensor target = sub(a_clean, eps);
  return sum_squares_scaled(sub(v, target), 1.0f / Scalar(b));
}

Tensor ActionHead::generate(const Tensor& z_a, const Tensor& proprio, int steps,
                            std::uint64_t noise_key) const {
  if (z_a.rank() != 2 || z_a.dim(0) != cfg.m_cond || z_a.dim(1) != cfg.d_model)
    throw std::invalid_argument("generate: conditioning must be [" + std::to_string(cfg.m_cond) +
                                "," + std::to_string(cfg.d_model) + "], got " +
                                shape_str(z_a.shape()));
  if (proprio.rank() != 1 || proprio.dim(0) != cfg.proprio_dim)
    throw std::invalid_argument("generate: proprio must be [" + std::to_string(cfg.proprio_dim) +
                                "]");
  NoGradGuard ng;
  Tensor z3 = reshape(z_a, {1, z_a.dim(0), z_a.dim(1)});
  Tensor p2 = reshape(proprio, {1, proprio.dim(0)});
  Tensor eps = Tensor::randn({1, Eigen::Index(cfg.horizon_act), Eigen::Index(cfg.action_dim)},
                             noise_key, 1.0f);
  auto field = [&](const Tensor& a, Scalar t) {
    return velocity(a, Tensor::from_vector({1}, {t}), z3, p2);
  };
  Tensor a = flow_integrate(field, eps, steps);
  for (Eigen::Index i = 0; i < a.numel(); ++i)
    a.data()[i] = std::clamp(a.data()[i], 0.0f, 1.0f);
  return reshape(a, {Eigen::Index(cfg.horizon_act), Eigen::Index(cfg.action_dim)});
}

void ActionHead::collect(const std::string& prefix, int group, std::vector<NamedParameter>& out) {
  a_in.collect(prefix + ".a_in", group, out);
  out.push_back({prefix + ".pos", &pos, group});
  t_in.collect(prefix + ".t_in", group, out);
  proprio_in.collect(prefix + ".proprio_in", group, out);
  cond_proj.collect(prefix + ".cond_proj", group, out);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), group, out);
  ln_f.collect(prefix + ".ln_f", group, out);
  a_out.collect(prefix + ".a_out", group, out);
}

}  // namespace jepa
