#include "test_support.hpp"

#include "jepa/model/target_encoder.hpp"

using namespace jepa;
using test::same_bytes;

namespace {

TargetEncoderConfig small_cfg() {
  TargetEncoderConfig c;
  c.frame_hw = 16;
  c.patch = 8;
  c.d_v = 16;
  c.layers = 2;
  c.heads = 2;
  c.mlp_mult = 2;
  return c;
}

TargetEncoder make_encoder(std::uint64_t seed) {
  TargetEncoder enc;
  rng::KeyStream ks(seed, rng::kParamInit);
  enc.init(small_cfg(), ks);
  return enc;
}

}  // namespace

TEST_SUITE_BEGIN("targets");

TEST_CASE("encoding is a pure function of the seed and the frame") {
  TargetEncoder a = make_encoder(5);
  TargetEncoder b = make_encoder(5);
  TargetEncoder c = make_encoder(6);
  Tensor frame = Tensor::randn({16, 16, 3}, rng::key(1, rng::kProbe, 0));

  Tensor ea = a.encode_frame(frame);
  CHECK(ea.shape() == Shape{4, 16});
  CHECK(same_bytes(ea, b.encode_frame(frame)));
  CHECK(same_bytes(ea, a.encode_frame(frame)));
  CHECK_FALSE(same_bytes(ea, c.encode_frame(frame)));

  Tensor other = Tensor::randn({16, 16, 3}, rng::key(1, rng::kProbe, 1));
  CHECK_FALSE(same_bytes(ea, a.encode_frame(other)));
}

TEST_CASE("state encoding stacks the two views in order") {
  TargetEncoder enc = make_encoder(7);
  Tensor frames = Tensor::randn({2, 16, 16, 3}, rng::key(2, rng::kProbe, 0));
  Tensor state = enc.encode_state(frames);
  REQUIRE(state.shape() == Shape{8, 16});

  Tensor v0 = enc.encode_frame(reshape(slice(frames, 0, 0, 1), {16, 16, 3}));
  Tensor v1 = enc.encode_frame(reshape(slice(frames, 0, 1, 1), {16, 16, 3}));
  CHECK(same_bytes(slice(state, 0, 0, 4), v0));
  CHECK(same_bytes(slice(state, 0, 4, 4), v1));

  // Swapping the views swaps the token halves and nothing else.
  Tensor swapped = enc.encode_state(concat({slice(frames, 0, 1, 1), slice(frames, 0, 0, 1)}, 0));
  CHECK(same_bytes(slice(swapped, 0, 0, 4), v1));
  CHECK(same_bytes(slice(swapped, 0, 4, 4), v0));
}

TEST_CASE("the encoder is frozen and emits tape-free leaves") {
  TargetEncoder enc = make_encoder(8);
  std::vector<NamedParameter> params;
  enc.collect("target", params);
  CHECK(params.size() > 0);
  for (const NamedParameter& p : params) {
    CHECK_FALSE(p.param->trainable());
    CHECK_FALSE(p.param->value().requires_grad());
  }

  Tensor frames = Tensor::randn({2, 16, 16, 3}, rng::key(3, rng::kProbe, 0));
  Tensor state = enc.encode_state(frames);
  CHECK_FALSE(state.requires_grad());

  // Feeding the output through a differentiable consumer must leave every
  // encoder parameter without a gradient.
  Tensor w = Tensor::randn({16, 16}, rng::key(3, rng::kProbe, 1), 0.1f, true);
  backward(mse(matmul(state, w), Tensor::zeros({8, 16})));
  for (const NamedParameter& p : params) CHECK_FALSE(p.param->value().grad_touched());
  CHECK(w.grad_touched());
}

TEST_CASE("encoder inputs are validated") {
  TargetEncoder enc = make_encoder(9);
  CHECK_THROWS_AS(enc.encode_frame(Tensor::zeros({8, 16, 3})), std::invalid_argument);
  CHECK_THROWS_AS(enc.encode_frame(Tensor::zeros({16, 16})), std::invalid_argument);
  CHECK_THROWS_AS(enc.encode_state(Tensor::zeros({3, 16, 16, 3})), std::invalid_argument);
  CHECK_THROWS_AS(enc.encode_state(Tensor::zeros({16, 16, 3})), std::invalid_argument);

  TargetEncoderConfig bad = small_cfg();
  bad.patch = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = small_cfg();
  bad.layers = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("token count follows the patch grid") {
  TargetEncoderConfig c = small_cfg();
  CHECK(c.tokens_per_view() == 4);
  c.frame_hw = 64;
  c.patch = 8;
  CHECK(c.tokens_per_view() == 64);
}

TEST_SUITE_END();
