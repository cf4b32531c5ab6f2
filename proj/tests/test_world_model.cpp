#include "test_support.hpp"

#include "jepa/model/world_model.hpp"

#include <cstring>

using namespace jepa;
using test::same_bytes;

namespace {

WorldModelConfig small_cfg() {
  WorldModelConfig c;
  c.d_s = 8;
  c.d_model = 12;
  c.layers = 2;
  c.heads = 2;
  c.mlp_mult = 2;
  c.horizon = 4;
  c.latent_k = 2;
  c.n_state = 4;
  return c;
}

WorldModel make_wm(std::uint64_t seed) {
  WorldModel wm;
  rng::KeyStream ks(seed, rng::kParamInit);
  wm.init(small_cfg(), ks);
  return wm;
}

// Writes a fresh value into every element of one (t, k, n) block of a
// [B, T, X, D] tensor.
void bump_block(Tensor& x, int t) {
  Eigen::Index per = x.dim(2) * x.dim(3);
  for (Eigen::Index b = 0; b < x.dim(0); ++b) {
    Scalar* p = x.data() + (b * x.dim(1) + t) * per;
    for (Eigen::Index i = 0; i < per; ++i) p[i] += 0.5f + Scalar(i % 7) * 0.25f;
  }
}

bool blocks_equal(const Tensor& a, const Tensor& b, int t) {
  Eigen::Index per = a.dim(2) * a.dim(3);
  for (Eigen::Index bt = 0; bt < a.dim(0); ++bt) {
    const Scalar* pa = a.data() + (bt * a.dim(1) + t) * per;
    const Scalar* pb = b.data() + (bt * b.dim(1) + t) * per;
    if (std::memcmp(pa, pb, size_t(per) * sizeof(Scalar)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("world model");

TEST_CASE("the block mask matches its brute-force definition everywhere") {
  for (int t : {1, 2, 4, 8})
    for (int k : {1, 3, 6})
      for (int n_s : {1, 4, 128}) {
        CAPTURE(t);
        CAPTURE(k);
        CAPTURE(n_s);
        MaskPtr m = finalized(build_mask(t, k, n_s));
        Eigen::Index block = k + n_s;
        Eigen::Index s = Eigen::Index(t) * block;
        REQUIRE(m->rows == s);
        REQUIRE(m->cols == s);
        Eigen::Index bad = 0;
        for (Eigen::Index p = 0; p < s; ++p)
          for (Eigen::Index q = 0; q < s; ++q)
            if (m->at(p, q) != (q / block <= p / block)) ++bad;
        CHECK(bad == 0);
      }

  CHECK_THROWS_AS(build_mask(0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_mask(1, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_mask(1, 1, 0), std::invalid_argument);
}

TEST_CASE("predictions never respond to later blocks") {
  WorldModel wm = make_wm(31);
  const auto& c = wm.cfg;
  Tensor states =
      Tensor::randn({2, c.horizon, c.n_state, c.d_s}, rng::key(41, rng::kProbe, 0));
  Tensor z = Tensor::randn({2, c.horizon, Eigen::Index(c.latent_k), c.d_model},
                           rng::key(41, rng::kProbe, 1));
  Tensor base = wm.predict(states, z);
  REQUIRE(base.shape() == Shape{2, c.horizon, c.n_state, c.d_s});

  for (int m = 1; m < c.horizon; ++m) {
    // Tensors are shared handles, so perturbations need fresh storage.
    Tensor ps = Tensor::from_data(states.shape(), states.data());
    Tensor pz = Tensor::from_data(z.shape(), z.data());
    bump_block(ps, m);
    bump_block(pz, m);
    Tensor out = wm.predict(ps, pz);
    for (int i = 0; i < m; ++i) {
      CAPTURE(m);
      CAPTURE(i);
      CHECK(blocks_equal(base, out, i));
    }
    CHECK_FALSE(blocks_equal(base, out, m));
  }
}

TEST_CASE("a corrupted mask is exactly what the causality probe detects") {
  WorldModel wm = make_wm(32);
  const auto& c = wm.cfg;
  wm.override_mask(finalized(AttnMask::full(c.seq_len(), c.seq_len())));

  Tensor states =
      Tensor::randn({1, c.horizon, c.n_state, c.d_s}, rng::key(42, rng::kProbe, 0));
  Tensor z = Tensor::randn({1, c.horizon, Eigen::Index(c.latent_k), c.d_model},
                           rng::key(42, rng::kProbe, 1));
  Tensor base = wm.predict(states, z);
  Tensor ps = Tensor::from_data(states.shape(), states.data());
  bump_block(ps, c.horizon - 1);
  CHECK_FALSE(blocks_equal(base, wm.predict(ps, z), 0));
}

TEST_CASE("prediction loss equals the naive per-element mean") {
  Tensor pred = Tensor::randn({2, 3, 4, 5}, rng::key(43, rng::kProbe, 0));
  Tensor tgt = Tensor::randn({2, 3, 4, 5}, rng::key(43, rng::kProbe, 1));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pred.numel(); ++i) {
    double d = double(pred.values()[i]) - double(tgt.values()[i]);
    acc += d * d;
  }
  double want = acc / double(pred.numel());
  CHECK(double(wm_loss(pred, tgt).item()) == doctest::Approx(want).epsilon(1e-6));
  CHECK(wm_loss(pred, pred).item() == 0.0f);
  CHECK_THROWS_AS(wm_loss(pred, Tensor::zeros({2, 3, 4, 4})), std::invalid_argument);
}

TEST_CASE("prediction inputs are validated") {
  WorldModel wm = make_wm(33);
  const auto& c = wm.cfg;
  Tensor states =
      Tensor::randn({1, c.horizon, c.n_state, c.d_s}, rng::key(44, rng::kProbe, 0));
  Tensor z = Tensor::randn({1, c.horizon, Eigen::Index(c.latent_k), c.d_model},
                           rng::key(44, rng::kProbe, 1));
  CHECK_THROWS_AS(wm.predict(slice(states, 1, 0, c.horizon - 1), z), std::invalid_argument);
  CHECK_THROWS_AS(wm.predict(states, slice(z, 3, 0, c.d_model - 1)), std::invalid_argument);
  CHECK_THROWS_AS(wm.predict(states, concat({z, z}, 0)), std::invalid_argument);

  WorldModelConfig bad = small_cfg();
  bad.n_state = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = small_cfg();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("prediction is deterministic") {
  WorldModel wm = make_wm(34);
  const auto& c = wm.cfg;
  Tensor states =
      Tensor::randn({1, c.horizon, c.n_state, c.d_s}, rng::key(45, rng::kProbe, 0));
  Tensor z = Tensor::randn({1, c.horizon, Eigen::Index(c.latent_k), c.d_model},
                           rng::key(45, rng::kProbe, 1));
  CHECK(same_bytes(wm.predict(states, z), wm.predict(states, z)));
}

TEST_SUITE_END();
