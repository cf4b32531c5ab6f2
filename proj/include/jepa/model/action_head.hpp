#pragma once

#include "jepa/model/transformer.hpp"

#include <functional>

namespace jepa {

struct ActionHeadConfig {
  Eigen::Index width = 128;
  int layers = 4;
  int heads = 4;
  int mlp_mult = 4;
  int horizon_act = 7;        // action tokens per chunk
  int action_dim = 3;
  int denoise_steps = 4;
  Eigen::Index d_model = 128; // conditioning width from the backbone
  int m_cond = 32;            // z_a tokens
  int proprio_dim = 8;
  void validate() const;
};

// a_t = (1 - t)*eps + t*a_clean, exact affine blend; t must lie in [0,1].
Tensor interpolate(const Tensor& a_clean, const Tensor& eps, Scalar t);

// Euler integration of da/dt = field(a, t) from t=0 to t=1 in uniform steps.
// Exposed so an analytic field can exercise the integrator directly.
Tensor flow_integrate(const std::function<Tensor(const Tensor&, Scalar)>& field, Tensor a0,
                      int steps);

// Flow-matching action generator: transformer over H_act action tokens with
// cross-attention onto [z_a tokens ; proprio token], time injected as a
// sinusoidal embedding added to every action token.
struct ActionHead {
  ActionHeadConfig cfg;
  LinearM a_in;        // action_dim -> width
  Parameter pos;       // [H_act, width]
  LinearM t_in;        // sinusoidal features -> width
  LinearM proprio_in;  // proprio_dim -> width
  LinearM cond_proj;   // d_model -> width
  std::vector<CrossBlock> blocks;
  LayerNormM ln_f;
  LinearM a_out;       // width -> action_dim
  MaskPtr self_mask, cross_mask;

  void init(const ActionHeadConfig& c, rng::KeyStream& ks);
  // a_t [B, H, A], t [B] in [0,1], z_a [B, M, d_model], proprio [B, P]
  Tensor velocity(const Tensor& a_t, const Tensor& t, const Tensor& z_a,
                  const Tensor& proprio) const;
  // mean over the batch of per-sample squared L2 residuals
  Tensor fm_loss(const Tensor& a_clean, const Tensor& eps, const std::vector<Scalar>& t,
                 const Tensor& z_a, const Tensor& proprio) const;
  // one chunk [H, A] in normalized units, clamped to [0,1]; eps keyed by noise_key
  Tensor generate(const Tensor& z_a, const Tensor& proprio, int steps,
                  std::uint64_t noise_key) const;
  void collect(const std::string& prefix, int group, std::vector<NamedParameter>& out);
};

}  // namespace jepa
