#include "test_support.hpp"

#include "jepa/model/backbone.hpp"

using namespace jepa;
using test::same_bytes;

namespace {

BackboneConfig small_cfg() {
  BackboneConfig c;
  c.d_model = 16;
  c.layers = 2;
  c.heads = 2;
  c.mlp_mult = 2;
  c.frame_hw = 16;
  c.patch = 8;
  c.views = 2;
  c.horizon = 4;
  c.latent_k = 2;
  c.action_tokens = 3;
  c.vocab = 8;
  c.max_instruction = 4;
  return c;
}

Backbone make_backbone(const BackboneConfig& c, std::uint64_t seed) {
  Backbone bb;
  rng::KeyStream ks(seed, rng::kParamInit);
  bb.init(c, ks);
  return bb;
}

Tensor frames_at(std::uint64_t k) { return Tensor::randn({2, 16, 16, 3}, k); }

}  // namespace

TEST_SUITE_BEGIN("backbone");

TEST_CASE("latent replication count derives from the horizon unless overridden") {
  BackboneConfig c = small_cfg();
  c.latent_k = 0;
  c.horizon = 8;
  CHECK(c.latent_k_resolved() == 3);
  c.horizon = 4;
  CHECK(c.latent_k_resolved() == 6);
  c.horizon = 6;
  CHECK(c.latent_k_resolved() == 4);
  c.horizon = 24;
  CHECK(c.latent_k_resolved() == 1);

  // A horizon that does not divide the latent budget is rejected, never
  // silently rounded; an explicit count unlocks it.
  c.horizon = 16;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  std::string msg = test::thrown_message<std::invalid_argument>([&] { c.validate(); });
  CHECK(msg.find("16") != std::string::npos);
  c.latent_k = 2;
  c.validate();
  CHECK(c.latent_k_resolved() == 2);

  c = small_cfg();
  c.latent_k = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("the sequence lays out image, instruction, latent, and action spans") {
  BackboneConfig c = small_cfg();
  Backbone bb = make_backbone(c, 11);
  std::vector<Eigen::Index> instr = {1, 2, 3};
  BackboneSequence s = bb.build_sequence(frames_at(rng::key(21, rng::kProbe, 0)), instr);
  CHECK(s.n_image == 8);  // 2 views x (16/8)^2 patches
  CHECK(s.n_instr == 3);
  CHECK(s.t_steps == 4);
  CHECK(s.k_rep == 2);
  CHECK(s.m_action == 3);
  CHECK(s.length() == 8 + 3 + 4 * 2 + 3);
  CHECK(s.tokens.shape() == Shape{s.length(), 16});

  // An empty instruction is a valid degenerate span.
  BackboneSequence e = bb.build_sequence(frames_at(rng::key(21, rng::kProbe, 0)), {});
  CHECK(e.n_instr == 0);
  CHECK(e.length() == 8 + 4 * 2 + 3);

  CHECK_THROWS_AS(bb.build_sequence(frames_at(rng::key(21, rng::kProbe, 1)), {1, 2, 3, 4, 5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(bb.build_sequence(frames_at(rng::key(21, rng::kProbe, 1)), {7, 99}),
                  std::invalid_argument);
  CHECK_THROWS_AS(bb.build_sequence(Tensor::zeros({1, 16, 16, 3}), instr),
                  std::invalid_argument);
  CHECK_THROWS_AS(bb.build_sequence(Tensor::zeros({2, 8, 16, 3}), instr),
                  std::invalid_argument);
}

TEST_CASE("forward emits per-step latents and pooled action context") {
  BackboneConfig c = small_cfg();
  Backbone bb = make_backbone(c, 12);
  std::vector<BackboneSequence> batch;
  for (int b = 0; b < 2; ++b)
    batch.push_back(
        bb.build_sequence(frames_at(rng::key(22, rng::kProbe, b)), {1, 2}));

  BackboneOutput out = bb.forward(batch);
  CHECK(out.z.shape() == Shape{2, 4, 2, 16});
  CHECK(out.z_a.shape() == Shape{2, 3, 16});

  // Same inputs, same bits; the forward pass holds no hidden state.
  BackboneOutput again = bb.forward(batch);
  CHECK(same_bytes(out.z, again.z));
  CHECK(same_bytes(out.z_a, again.z_a));

  // Each batch row depends only on its own sequence.
  std::vector<BackboneSequence> swapped = {batch[1], batch[0]};
  BackboneOutput sw = bb.forward(swapped);
  CHECK(same_bytes(slice(sw.z, 0, 0, 1), slice(out.z, 0, 1, 1)));
  CHECK(same_bytes(slice(sw.z_a, 0, 1, 1), slice(out.z_a, 0, 0, 1)));

  std::vector<BackboneSequence> mixed = {
      batch[0], bb.build_sequence(frames_at(rng::key(22, rng::kProbe, 9)), {1})};
  CHECK_THROWS_AS(bb.forward(mixed), std::invalid_argument);
  CHECK_THROWS_AS(bb.forward({}), std::invalid_argument);
}

TEST_CASE("outputs respond to the observation and the instruction") {
  BackboneConfig c = small_cfg();
  Backbone bb = make_backbone(c, 13);
  Tensor f = frames_at(rng::key(23, rng::kProbe, 0));
  BackboneOutput base = bb.forward({bb.build_sequence(f, {1, 2})});

  BackboneOutput instr = bb.forward({bb.build_sequence(f, {1, 3})});
  CHECK_FALSE(same_bytes(base.z, instr.z));
  CHECK_FALSE(same_bytes(base.z_a, instr.z_a));

  Tensor f2 = frames_at(rng::key(23, rng::kProbe, 1));
  BackboneOutput obs = bb.forward({bb.build_sequence(f2, {1, 2})});
  CHECK_FALSE(same_bytes(base.z, obs.z));
  CHECK_FALSE(same_bytes(base.z_a, obs.z_a));
}

TEST_CASE("attention capture returns row-stochastic full-attention weights") {
  BackboneConfig c = small_cfg();
  Backbone bb = make_backbone(c, 14);
  std::vector<BackboneSequence> batch = {
      bb.build_sequence(frames_at(rng::key(24, rng::kProbe, 0)), {1, 2}),
      bb.build_sequence(frames_at(rng::key(24, rng::kProbe, 1)), {3, 4})};
  Tensor attn;
  bb.forward(batch, 1, &attn);
  Eigen::Index s = batch[0].length();
  REQUIRE(attn.shape() == Shape{2 * 2, s, s});
  for (Eigen::Index g = 0; g < attn.dim(0); ++g)
    for (Eigen::Index i = 0; i < s; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < s; ++j) row += attn.values()[(g * s + i) * s + j];
      REQUIRE(row == doctest::Approx(1.0).epsilon(1e-4));
    }

  CHECK_THROWS_AS(bb.forward(batch, c.layers, &attn), std::invalid_argument);
}

TEST_SUITE_END();
