#include "test_support.hpp"

#include <limits>

using namespace jepa;
using test::max_abs_diff;
using test::same_bytes;
using test::thrown_message;

namespace {

Tensor leaf(Shape s, std::uint64_t k, bool grad = false) {
  return Tensor::randn(std::move(s), k, 1.0f, grad);
}

}  // namespace

TEST_SUITE_BEGIN("numerics");

TEST_CASE("matmul matches the identity, zero, and triple-loop oracles") {
  Tensor eye = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
  Tensor col = Tensor::from_vector({2, 1}, {3, 4});
  Tensor r = matmul(eye, col);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.values()[0] == 3.0f);
  CHECK(r.values()[1] == 4.0f);

  Tensor z = matmul(Tensor::from_vector({1, 1}, {2}), Tensor::from_vector({1, 1}, {0}));
  CHECK(z.values()[0] == 0.0f);

  Tensor a = leaf({3, 4}, rng::key(11, rng::kProbe, 0));
  Tensor b = leaf({4, 2}, rng::key(11, rng::kProbe, 1));
  Tensor c = matmul(a, b);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      double s = 0;
      for (Eigen::Index k = 0; k < 4; ++k)
        s += double(a.values()[i * 4 + k]) * double(b.values()[k * 2 + j]);
      CHECK(std::abs(double(c.values()[i * 2 + j]) - s) < 1e-6);
    }
}

TEST_CASE("matmul names both shapes on dimension mismatch") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  std::string msg = thrown_message<std::invalid_argument>([&] { matmul(a, b); });
  CHECK(msg.find("[2,3]") != std::string::npos);
  CHECK(msg.find("[4,2]") != std::string::npos);
}

TEST_CASE("batched matmul multiplies batch by batch") {
  Tensor a = leaf({2, 3, 4}, rng::key(12, rng::kProbe, 0));
  Tensor b = leaf({2, 4, 2}, rng::key(12, rng::kProbe, 1));
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 2});
  for (Eigen::Index g = 0; g < 2; ++g) {
    Tensor ag = slice(a, 0, g, 1), bg = slice(b, 0, g, 1);
    Tensor cg = matmul(reshape(ag, {3, 4}), reshape(bg, {4, 2}));
    CHECK(max_abs_diff(reshape(slice(c, 0, g, 1), {3, 2}), cg) == 0.0);
  }
}

TEST_CASE("elementwise ops match their oracles") {
  Tensor a = leaf({2, 5}, rng::key(13, rng::kProbe, 0));
  Tensor b = leaf({2, 5}, rng::key(13, rng::kProbe, 1));
  Tensor s = add(a, b), d = sub(a, b), m = mul(a, b), c = scale(a, 2.5f);
  for (Eigen::Index i = 0; i < 10; ++i) {
    CHECK(s.values()[i] == a.values()[i] + b.values()[i]);
    CHECK(d.values()[i] == a.values()[i] - b.values()[i]);
    CHECK(m.values()[i] == a.values()[i] * b.values()[i]);
    CHECK(c.values()[i] == a.values()[i] * 2.5f);
  }
}

TEST_CASE("gelu matches the tanh-form oracle") {
  Tensor x = leaf({64}, rng::key(14, rng::kProbe, 0));
  Tensor y = gelu(x);
  for (Eigen::Index i = 0; i < 64; ++i) {
    double v = double(x.values()[i]);
    double o = 0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v)));
    CHECK(std::abs(double(y.values()[i]) - o) < 1e-6);
  }
}

TEST_CASE("layer_norm matches a per-row double oracle") {
  const Eigen::Index rows = 4, dim = 8;
  Tensor x = leaf({rows, dim}, rng::key(15, rng::kProbe, 0));
  Tensor g = leaf({dim}, rng::key(15, rng::kProbe, 1));
  Tensor b = leaf({dim}, rng::key(15, rng::kProbe, 2));
  Tensor y = layer_norm(x, g, b);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mu = 0, var = 0;
    for (Eigen::Index i = 0; i < dim; ++i) mu += double(x.values()[r * dim + i]);
    mu /= double(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      double dd = double(x.values()[r * dim + i]) - mu;
      var += dd * dd;
    }
    var /= double(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      double o = (double(x.values()[r * dim + i]) - mu) / std::sqrt(var + 1e-5) *
                     double(g.values()[i]) +
                 double(b.values()[i]);
      CHECK(std::abs(double(y.values()[r * dim + i]) - o) < 1e-6);
    }
  }
}

TEST_CASE("softmax_lastdim is a shift-invariant per-row softmax") {
  Tensor x = leaf({3, 7}, rng::key(16, rng::kProbe, 0));
  // Snap logits to a 1/64 grid so that adding 1024 stays exactly representable
  // and the max-subtracted differences are bit-identical across the shift.
  for (Eigen::Index i = 0; i < x.numel(); ++i)
    x.values()[i] = std::round(x.values()[i] * 64.0f) / 64.0f;
  Tensor y = softmax_lastdim(x);
  for (Eigen::Index r = 0; r < 3; ++r) {
    double mx = -1e300, sum = 0;
    for (Eigen::Index i = 0; i < 7; ++i) mx = std::max(mx, double(x.values()[r * 7 + i]));
    for (Eigen::Index i = 0; i < 7; ++i) sum += std::exp(double(x.values()[r * 7 + i]) - mx);
    double rowsum = 0;
    for (Eigen::Index i = 0; i < 7; ++i) {
      double o = std::exp(double(x.values()[r * 7 + i]) - mx) / sum;
      CHECK(std::abs(double(y.values()[r * 7 + i]) - o) < 1e-6);
      rowsum += double(y.values()[r * 7 + i]);
    }
    CHECK(std::abs(rowsum - 1.0) < 1e-6);
  }
  Tensor shifted = softmax_lastdim(add(x, Tensor::full({3, 7}, 1024.0f)));
  CHECK(same_bytes(shifted, y));
}

TEST_CASE("reductions accumulate in double and match loop oracles") {
  Tensor a = leaf({257}, rng::key(17, rng::kProbe, 0));
  Tensor b = leaf({257}, rng::key(17, rng::kProbe, 1));
  double s = 0, q = 0, e = 0;
  for (Eigen::Index i = 0; i < 257; ++i) {
    s += double(a.values()[i]);
    q += double(a.values()[i]) * double(a.values()[i]);
    double d = double(a.values()[i]) - double(b.values()[i]);
    e += d * d;
  }
  CHECK(sum(a).item() == doctest::Approx(s).epsilon(1e-6));
  CHECK(mean(a).item() == doctest::Approx(s / 257).epsilon(1e-6));
  CHECK(mse(a, b).item() == doctest::Approx(e / 257).epsilon(1e-6));
  CHECK(sum_squares_scaled(a, 0.25f).item() == doctest::Approx(q * 0.25).epsilon(1e-6));
}

TEST_CASE("non-finite values surface as errors instead of propagating") {
  Tensor nanv = Tensor::from_vector({3}, {1.0f, std::numeric_limits<float>::quiet_NaN(), 2.0f});
  CHECK_THROWS_AS(sum(nanv), std::runtime_error);
  Tensor infv = Tensor::from_vector({2}, {std::numeric_limits<float>::infinity(), 0.0f});
  CHECK_THROWS_AS(mean(infv), std::runtime_error);
  CHECK_THROWS_AS(mse(infv, Tensor::zeros({2})), std::runtime_error);
  CHECK_THROWS_AS(sum_squares_scaled(infv, 1.0f), std::runtime_error);
  Tensor nans = Tensor::from_vector({1}, {std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(nans.item(), std::runtime_error);
}

TEST_CASE("core ops emit finite values on random inputs") {
  Tensor x = leaf({4, 16}, rng::key(18, rng::kProbe, 0));
  Tensor g = leaf({16}, rng::key(18, rng::kProbe, 1));
  Tensor b = leaf({16}, rng::key(18, rng::kProbe, 2));
  std::vector<Tensor> outs = {gelu(x),     layer_norm(x, g, b),          softmax_lastdim(x),
                              mul(x, x),   matmul(x, leaf({16, 4}, 3)),  add_rows(x, g),
                              scale(x, 3)};
  for (const Tensor& t : outs)
    for (Eigen::Index i = 0; i < t.numel(); ++i) REQUIRE(std::isfinite(t.values()[i]));
}

TEST_CASE("reshape, slice, concat, and stack0 move values without change") {
  Tensor a = leaf({2, 3, 4}, rng::key(19, rng::kProbe, 0));
  Tensor r = reshape(a, {6, 4});
  CHECK(same_bytes(reshape(r, {2, 3, 4}), a));
  CHECK_THROWS_AS(reshape(a, {5, 5}), std::invalid_argument);

  Tensor s = slice(a, 1, 1, 2);
  REQUIRE(s.shape() == Shape{2, 2, 4});
  for (Eigen::Index o = 0; o < 2; ++o)
    for (Eigen::Index i = 0; i < 2; ++i)
      for (Eigen::Index j = 0; j < 4; ++j)
        CHECK(s.values()[(o * 2 + i) * 4 + j] == a.values()[(o * 3 + (i + 1)) * 4 + j]);
  CHECK_THROWS_AS(slice(a, 1, 2, 2), std::invalid_argument);

  Tensor c = concat({slice(a, 1, 0, 1), slice(a, 1, 1, 2)}, 1);
  CHECK(same_bytes(c, a));
  Tensor c2 = concat({a, a}, -1);
  REQUIRE(c2.shape() == Shape{2, 3, 8});
  CHECK(c2.values()[4] == a.values()[0]);

  Tensor p0 = leaf({3, 4}, rng::key(19, rng::kProbe, 1));
  Tensor p1 = leaf({3, 4}, rng::key(19, rng::kProbe, 2));
  Tensor st = stack0({p0, p1});
  REQUIRE(st.shape() == Shape{2, 3, 4});
  CHECK(same_bytes(reshape(slice(st, 0, 1, 1), {3, 4}), p1));
}

TEST_CASE("gather_tokens repeats rows and accumulates their gradients") {
  Tensor a = leaf({5, 3}, rng::key(20, rng::kProbe, 0), true);
  Tensor g = gather_tokens(a, {4, 1, 1});
  REQUIRE(g.shape() == Shape{3, 3});
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(g.values()[0 * 3 + j] == a.values()[4 * 3 + j]);
    CHECK(g.values()[1 * 3 + j] == a.values()[1 * 3 + j]);
    CHECK(g.values()[2 * 3 + j] == a.values()[1 * 3 + j]);
  }
  backward(sum(g));
  Tensor grad = a.grad();
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(grad.values()[4 * 3 + j] == 1.0f);
    CHECK(grad.values()[1 * 3 + j] == 2.0f);
    CHECK(grad.values()[0 * 3 + j] == 0.0f);
  }
  CHECK_THROWS_AS(gather_tokens(a, {5}), std::invalid_argument);
}

TEST_CASE("embedding looks up rows and accumulates repeated ids") {
  Tensor table = leaf({6, 4}, rng::key(21, rng::kProbe, 0), true);
  Tensor e = embedding(table, {2, 5, 2});
  REQUIRE(e.shape() == Shape{3, 4});
  for (Eigen::Index j = 0; j < 4; ++j) CHECK(e.values()[j] == table.values()[2 * 4 + j]);
  backward(sum(e));
  Tensor grad = table.grad();
  for (Eigen::Index j = 0; j < 4; ++j) {
    CHECK(grad.values()[2 * 4 + j] == 2.0f);
    CHECK(grad.values()[5 * 4 + j] == 1.0f);
    CHECK(grad.values()[0 * 4 + j] == 0.0f);
  }
  CHECK_THROWS_AS(embedding(table, {6}), std::invalid_argument);
  CHECK_THROWS_AS(embedding(table, {}), std::invalid_argument);
}

TEST_CASE("patchify lays patches out in row-major grid order") {
  const Eigen::Index h = 4, w = 4;
  std::vector<Scalar> px(size_t(h * w * 3));
  for (size_t i = 0; i < px.size(); ++i) px[i] = Scalar(i);
  Tensor frame = Tensor::from_vector({h, w, 3}, px);
  Tensor p = patchify(frame, 2);
  REQUIRE(p.shape() == Shape{4, 12});
  // Patch (1,0) holds pixel rows 2..3, cols 0..1.
  for (Eigen::Index pr = 0; pr < 2; ++pr)
    for (Eigen::Index pc = 0; pc < 2; ++pc)
      for (Eigen::Index ch = 0; ch < 3; ++ch)
        CHECK(p.values()[2 * 12 + (pr * 2 + pc) * 3 + ch] ==
              frame.values()[((2 + pr) * w + pc) * 3 + ch]);
  CHECK_THROWS_AS(patchify(frame, 3), std::invalid_argument);
  CHECK_THROWS_AS(patchify(Tensor::zeros({4, 4, 2}), 2), std::invalid_argument);
}

TEST_CASE("split_heads and merge_heads round-trip bitwise") {
  Tensor x = leaf({2, 6, 8}, rng::key(22, rng::kProbe, 0));
  Tensor h = split_heads(x, 4);
  REQUIRE(h.shape() == Shape{2, 4, 6, 2});
  CHECK(same_bytes(merge_heads(h), x));
  CHECK_THROWS_AS(split_heads(x, 3), std::invalid_argument);
}

TEST_CASE("broadcast adds repeat over the leading and row axes") {
  Tensor a = leaf({2, 3, 4}, rng::key(23, rng::kProbe, 0));
  Tensor e = leaf({3, 4}, rng::key(23, rng::kProbe, 1));
  Tensor y = add_bcast0(a, e);
  for (Eigen::Index o = 0; o < 2; ++o)
    for (Eigen::Index i = 0; i < 12; ++i)
      CHECK(y.values()[o * 12 + i] == a.values()[o * 12 + i] + e.values()[i]);

  Tensor rowe = leaf({2, 4}, rng::key(23, rng::kProbe, 2));
  Tensor yr = add_rows(a, rowe);
  for (Eigen::Index o = 0; o < 2; ++o)
    for (Eigen::Index s = 0; s < 3; ++s)
      for (Eigen::Index j = 0; j < 4; ++j)
        CHECK(yr.values()[(o * 3 + s) * 4 + j] ==
              a.values()[(o * 3 + s) * 4 + j] + rowe.values()[o * 4 + j]);
}

TEST_CASE("linear equals matmul plus bias broadcast") {
  Tensor x = leaf({3, 5}, rng::key(24, rng::kProbe, 0));
  Tensor w = leaf({5, 2}, rng::key(24, rng::kProbe, 1));
  Tensor b = leaf({2}, rng::key(24, rng::kProbe, 2));
  Tensor y = linear(x, w, b);
  Tensor oracle = add_rows(matmul(x, w), b);
  CHECK(max_abs_diff(y, oracle) < 1e-6);
  Tensor nobias = linear(x, w, Tensor());
  CHECK(max_abs_diff(nobias, matmul(x, w)) < 1e-6);
}

TEST_CASE("masked attention with one permitted key returns v exactly") {
  Tensor q = leaf({1, 1, 4}, rng::key(25, rng::kProbe, 0));
  Tensor k = leaf({1, 1, 4}, rng::key(25, rng::kProbe, 1));
  Tensor v = leaf({1, 1, 4}, rng::key(25, rng::kProbe, 2));
  Tensor out = masked_attention(q, k, v, finalized(AttnMask::full(1, 1)));
  CHECK(same_bytes(out, v));
}

TEST_CASE("masked attention matches a per-row softmax oracle under a causal mask") {
  const Eigen::Index s = 4, dh = 8;
  Tensor q = leaf({1, s, dh}, rng::key(26, rng::kProbe, 0));
  Tensor k = leaf({1, s, dh}, rng::key(26, rng::kProbe, 1));
  Tensor v = leaf({1, s, dh}, rng::key(26, rng::kProbe, 2));
  AttnMask mask = AttnMask::causal(s);
  Tensor out = masked_attention(q, k, v, finalized(mask));
  for (Eigen::Index i = 0; i < s; ++i) {
    std::vector<double> logits(size_t(s), 0);
    double mx = -1e300;
    for (Eigen::Index j = 0; j <= i; ++j) {
      double dot = 0;
      for (Eigen::Index e = 0; e < dh; ++e)
        dot += double(q.values()[i * dh + e]) * double(k.values()[j * dh + e]);
      logits[size_t(j)] = dot / std::sqrt(double(dh));
      mx = std::max(mx, logits[size_t(j)]);
    }
    double z = 0;
    for (Eigen::Index j = 0; j <= i; ++j) z += std::exp(logits[size_t(j)] - mx);
    for (Eigen::Index e = 0; e < dh; ++e) {
      double o = 0;
      for (Eigen::Index j = 0; j <= i; ++j)
        o += std::exp(logits[size_t(j)] - mx) / z * double(v.values()[j * dh + e]);
      CHECK(std::abs(double(out.values()[i * dh + e]) - o) < 1e-6);
    }
  }
}

TEST_CASE("masked keys have exactly zero influence on outputs and gradients") {
  const Eigen::Index s = 4, dh = 8;
  Tensor q = leaf({1, s, dh}, rng::key(27, rng::kProbe, 0));
  Tensor v0 = leaf({1, s, dh}, rng::key(27, rng::kProbe, 2));
  MaskPtr mask = finalized(AttnMask::causal(s));

  Tensor base, pert;
  {
    NoGradGuard guard;
    Tensor k = leaf({1, s, dh}, rng::key(27, rng::kProbe, 1));
    base = masked_attention(q, k, v0, mask);
    // Row 3 is invisible to queries 0..2 under the causal mask.
    Tensor k2 = Tensor::from_data(k.shape(), k.data());
    Tensor v2 = Tensor::from_data(v0.shape(), v0.data());
    for (Eigen::Index e = 0; e < dh; ++e) {
      k2.values()[3 * dh + e] += 50.0f;
      v2.values()[3 * dh + e] -= 70.0f;
    }
    pert = masked_attention(q, k2, v2, mask);
  }
  CHECK(std::memcmp(base.data(), pert.data(), size_t(3 * dh) * sizeof(Scalar)) == 0);
  CHECK(std::memcmp(base.data() + 3 * dh, pert.data() + 3 * dh, size_t(dh) * sizeof(Scalar)) != 0);

  Tensor kg = leaf({1, s, dh}, rng::key(27, rng::kProbe, 1), true);
  Tensor vg = leaf({1, s, dh}, rng::key(27, rng::kProbe, 2), true);
  Tensor out = masked_attention(q, kg, vg, mask);
  backward(sum(slice(out, 1, 1, 1)));  // loss reads query row 1 only
  Tensor kgrad = kg.grad(), vgrad = vg.grad();
  for (Eigen::Index j = 2; j < s; ++j)
    for (Eigen::Index e = 0; e < dh; ++e) {
      CHECK(kgrad.values()[j * dh + e] == 0.0f);
      CHECK(vgrad.values()[j * dh + e] == 0.0f);
    }
  bool any = false;
  for (Eigen::Index e = 0; e < 2 * dh; ++e) any = any || vgrad.values()[e] != 0.0f;
  CHECK(any);
}

TEST_CASE("attention capture returns weights that respect the mask") {
  const Eigen::Index s = 5, dh = 4;
  Tensor q = leaf({1, s, dh}, rng::key(28, rng::kProbe, 0));
  Tensor k = leaf({1, s, dh}, rng::key(28, rng::kProbe, 1));
  Tensor v = leaf({1, s, dh}, rng::key(28, rng::kProbe, 2));
  AttnMask m(s, s, false);
  for (Eigen::Index i = 0; i < s; ++i)
    for (Eigen::Index j = 0; j < s; ++j)
      if (j <= i || j == s - 1) m.set(i, j, true);
  MaskPtr mp = finalized(std::move(m));
  Tensor attn;
  {
    NoGradGuard guard;
    masked_attention(q, k, v, mp, &attn);
  }
  REQUIRE(attn.shape() == Shape{1, s, s});
  for (Eigen::Index i = 0; i < s; ++i) {
    double rowsum = 0;
    for (Eigen::Index j = 0; j < s; ++j) {
      double wij = double(attn.values()[i * s + j]);
      if (!mp->at(i, j)) CHECK(wij == 0.0);
      CHECK(wij >= 0.0);
      rowsum += wij;
    }
    CHECK(std::abs(rowsum - 1.0) < 1e-5);
  }
}

TEST_CASE("a mask row that permits nothing is rejected at finalize") {
  AttnMask m(2, 2, false);
  m.set(0, 0, true);
  std::string msg = thrown_message<std::invalid_argument>([&] { finalized(std::move(m)); });
  CHECK(msg.find("row 1") != std::string::npos);
}

TEST_CASE("attention rejects an unfinalized mask") {
  Tensor q = leaf({1, 2, 4}, rng::key(29, rng::kProbe, 0));
  auto raw = std::make_shared<AttnMask>(2, 2, true);
  CHECK_THROWS_AS(masked_attention(q, q, q, raw), std::invalid_argument);
}

TEST_CASE("backward fills trivial gradients and rejects non-scalars") {
  Tensor p = leaf({3, 3}, rng::key(30, rng::kProbe, 0), true);
  backward(sum(p));
  for (Eigen::Index i = 0; i < 9; ++i) CHECK(p.grad().values()[i] == 1.0f);
  p.zero_grad();
  CHECK_FALSE(p.grad_touched());

  backward(sum_squares_scaled(p, 0.5f));
  CHECK(same_bytes(p.grad(), p));
  p.zero_grad();

  CHECK_THROWS_AS(backward(add(p, p)), std::invalid_argument);
}

TEST_CASE("backward accumulates across calls and skips non-trainable leaves") {
  Tensor p = leaf({4}, rng::key(31, rng::kProbe, 0), true);
  Tensor frozen = leaf({4}, rng::key(31, rng::kProbe, 1), false);
  backward(sum(mul(p, frozen)));
  backward(sum(mul(p, frozen)));
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(p.grad().values()[i] == doctest::Approx(2.0f * frozen.values()[i]));
  CHECK_FALSE(frozen.grad_touched());
  CHECK(frozen.grad().values()[0] == 0.0f);
}

TEST_CASE("detach copies values and cuts the tape") {
  Tensor p = leaf({4}, rng::key(32, rng::kProbe, 0), true);
  Tensor d = detach(scale(p, 2.0f));
  CHECK_FALSE(d.requires_grad());
  backward(sum(mul(d, p)));
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(p.grad().values()[i] == doctest::Approx(2.0f * p.values()[i]));
}

TEST_CASE("randn is a pure function of its key") {
  Tensor a = Tensor::randn({16}, rng::key(33, rng::kProbe, 0));
  Tensor b = Tensor::randn({16}, rng::key(33, rng::kProbe, 0));
  Tensor c = Tensor::randn({16}, rng::key(33, rng::kProbe, 1));
  CHECK(same_bytes(a, b));
  CHECK_FALSE(same_bytes(a, c));
}

TEST_SUITE_END();
