#include "test_support.hpp"

#include "jepa/model/action_head.hpp"
#include "jepa/model/backbone.hpp"
#include "jepa/model/transformer.hpp"
#include "jepa/model/world_model.hpp"

using namespace jepa;

TEST_SUITE_BEGIN("gradcheck");

TEST_CASE("composite network gradients match central differences") {
  rng::KeyStream ks(404, rng::kParamInit);
  LinearM l1, l2;
  LayerNormM ln;
  MultiHeadAttention mha;
  l1.init(6, 8, ks, true);
  ln.init(8, true);
  mha.init(8, 2, ks, true);
  l2.init(8, 4, ks, true);
  MaskPtr mask = finalized(AttnMask::causal(5));

  Tensor x = Tensor::randn({5, 6}, rng::key(404, rng::kProbe, 0));
  Tensor target = Tensor::randn({5, 4}, rng::key(404, rng::kProbe, 1));
  std::vector<NamedParameter> params;
  l1.collect("l1", 0, params);
  ln.collect("ln", 0, params);
  mha.collect("mha", 0, params);
  l2.collect("l2", 0, params);

  auto loss_fn = [&] {
    return mse(l2.forward(mha.forward(ln.forward(gelu(l1.forward(x))), mask)), target);
  };
  // At the reference step 1e-3 the 32-bit loss reads limit the measurable
  // pool to strong gradients; a wider step then covers a broad sample.
  auto r = test::gradcheck(params, loss_fn, rng::key(404, rng::kProbe, 2), 5, 1e-3f, 4e-3);
  INFO("checked ", r.checked, " skipped ", r.skipped, " max_rel ", r.max_rel);
  CHECK(r.checked >= 5);
  CHECK(r.max_rel < 1e-2);

  auto broad = test::gradcheck(params, loss_fn, rng::key(404, rng::kProbe, 3), 8, 4e-3f, 1e-3);
  INFO("broad checked ", broad.checked, " skipped ", broad.skipped, " max_rel ", broad.max_rel);
  CHECK(broad.checked >= 8);
  CHECK(broad.max_rel < 1e-2);
}

TEST_CASE("backbone gradients match central differences") {
  BackboneConfig cfg;
  cfg.d_model = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.mlp_mult = 2;
  cfg.frame_hw = 16;
  cfg.patch = 8;
  cfg.views = 2;
  cfg.horizon = 2;
  cfg.latent_k = 2;
  cfg.action_tokens = 2;
  cfg.vocab = 8;
  cfg.max_instruction = 4;
  Backbone bb;
  rng::KeyStream ks(405, rng::kParamInit);
  bb.init(cfg, ks);

  Tensor f0 = Tensor::randn({2, 16, 16, 3}, rng::key(405, rng::kProbe, 0));
  Tensor f1 = Tensor::randn({2, 16, 16, 3}, rng::key(405, rng::kProbe, 1));
  std::vector<Eigen::Index> instr0 = {1, 2, 3}, instr1 = {4, 5, 6};
  Tensor tz = Tensor::randn({2, 2, 2, 16}, rng::key(405, rng::kProbe, 2));
  Tensor tza = Tensor::randn({2, 2, 16}, rng::key(405, rng::kProbe, 3));

  std::vector<NamedParameter> params;
  bb.collect("backbone", 0, params);
  auto loss_fn = [&] {
    std::vector<BackboneSequence> batch;
    batch.push_back(bb.build_sequence(f0, instr0));
    batch.push_back(bb.build_sequence(f1, instr1));
    BackboneOutput out = bb.forward(batch);
    return add(mse(out.z, tz), mse(out.z_a, tza));
  };
  auto r = test::gradcheck(params, loss_fn, rng::key(405, rng::kProbe, 4), 20, 3e-3f);
  INFO("checked ", r.checked, " skipped ", r.skipped, " max_rel ", r.max_rel);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-2);
}

TEST_CASE("world-model gradients match central differences") {
  WorldModelConfig cfg;
  cfg.d_s = 8;
  cfg.d_model = 12;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.mlp_mult = 2;
  cfg.horizon = 3;
  cfg.latent_k = 2;
  cfg.n_state = 4;
  WorldModel wm;
  rng::KeyStream ks(406, rng::kParamInit);
  wm.init(cfg, ks);

  Tensor states = Tensor::randn({2, 3, 4, 8}, rng::key(406, rng::kProbe, 0));
  Tensor z = Tensor::randn({2, 3, 2, 12}, rng::key(406, rng::kProbe, 1));
  Tensor targets = Tensor::randn({2, 3, 4, 8}, rng::key(406, rng::kProbe, 2));

  std::vector<NamedParameter> params;
  wm.collect("wm", 0, params);
  auto loss_fn = [&] { return wm_loss(wm.predict(states, z), targets); };
  auto r = test::gradcheck(params, loss_fn, rng::key(406, rng::kProbe, 3), 20, 3e-3f);
  INFO("checked ", r.checked, " skipped ", r.skipped, " max_rel ", r.max_rel);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-2);
}

TEST_CASE("world-model gradients flow into the latents but not the states") {
  WorldModelConfig cfg;
  cfg.d_s = 8;
  cfg.d_model = 12;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.mlp_mult = 2;
  cfg.horizon = 2;
  cfg.latent_k = 2;
  cfg.n_state = 4;
  WorldModel wm;
  rng::KeyStream ks(407, rng::kParamInit);
  wm.init(cfg, ks);

  Tensor states = Tensor::randn({1, 2, 4, 8}, rng::key(407, rng::kProbe, 0));
  Tensor z = Tensor::randn({1, 2, 2, 12}, rng::key(407, rng::kProbe, 1), 1.0f, true);
  Tensor targets = Tensor::randn({1, 2, 4, 8}, rng::key(407, rng::kProbe, 2));
  backward(wm_loss(wm.predict(states, z), targets));
  CHECK(z.grad_touched());
  CHECK_FALSE(states.grad_touched());
  double norm = 0;
  for (Eigen::Index i = 0; i < z.numel(); ++i) norm += std::abs(double(z.grad().values()[i]));
  CHECK(norm > 0.0);
}

TEST_CASE("action-head gradients match central differences") {
  ActionHeadConfig cfg;
  cfg.width = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.mlp_mult = 2;
  cfg.horizon_act = 3;
  cfg.action_dim = 3;
  cfg.denoise_steps = 4;
  cfg.d_model = 12;
  cfg.m_cond = 3;
  cfg.proprio_dim = 4;
  ActionHead head;
  rng::KeyStream ks(408, rng::kParamInit);
  head.init(cfg, ks);

  Tensor a_clean = Tensor::randn({2, 3, 3}, rng::key(408, rng::kProbe, 0));
  Tensor eps = Tensor::randn({2, 3, 3}, rng::key(408, rng::kProbe, 1));
  Tensor z_a = Tensor::randn({2, 3, 12}, rng::key(408, rng::kProbe, 2));
  Tensor proprio = Tensor::randn({2, 4}, rng::key(408, rng::kProbe, 3));
  std::vector<Scalar> t = {0.25f, 0.75f};

  std::vector<NamedParameter> params;
  head.collect("head", 0, params);
  auto loss_fn = [&] { return head.fm_loss(a_clean, eps, t, z_a, proprio); };
  auto r = test::gradcheck(params, loss_fn, rng::key(408, rng::kProbe, 4), 20, 3e-3f);
  INFO("checked ", r.checked, " skipped ", r.skipped, " max_rel ", r.max_rel);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-2);
}

TEST_SUITE_END();
