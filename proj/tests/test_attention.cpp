#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sdtc/attention.hpp"
#include "sdtc/ops.hpp"

using namespace sdtc;

namespace {

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = nd(rng);
  return t;
}

// naive per-row reference: energies, exp/normalize, weighted sum of V
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  int tq = q.dim(0), tk = k.dim(0), dk = q.dim(1), dv = v.dim(1);
  Tensor out = Tensor::zeros({tq, dv});
  for (int t = 0; t < tq; ++t) {
    std::vector<double> e(static_cast<size_t>(tk));
    double mx = -1e300;
    for (int u = 0; u < tk; ++u) {
      double s = 0;
      for (int d = 0; d < dk; ++d) s += q.at(t, d) * k.at(u, d);
      e[static_cast<size_t>(u)] = s / std::sqrt(static_cast<double>(dk));
      mx = std::max(mx, e[static_cast<size_t>(u)]);
    }
    double z = 0;
    for (double& x : e) {
      x = std::exp(x - mx);
      z += x;
    }
    for (int u = 0; u < tk; ++u)
      for (int d = 0; d < dv; ++d)
        out.at(t, d) += e[static_cast<size_t>(u)] / z * v.at(u, d);
  }
  return out;
}

}  // namespace

TEST_CASE("uniform attention averages the values") {
  Tensor q = Tensor::from({1, 1}, {0});
  Tensor k = Tensor::from({2, 1}, {0, 0});
  Tensor v = Tensor::from({2, 1}, {1, 3});
  Tensor y = scaled_dot_attention(nullptr, q, k, v);
  CHECK(y.at(0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("single-survivor mask copies one value row exactly") {
  std::mt19937_64 rng(3);
  Tensor q = randn({2, 4}, rng);
  Tensor k = randn({3, 4}, rng);
  Tensor v = randn({3, 5}, rng);
  BoolMatrix mask{2, 3, std::vector<std::uint8_t>(6, 0)};
  mask.set(0, 2, true);
  mask.set(1, 0, true);
  Tensor y = scaled_dot_attention(nullptr, q, k, v, &mask);
  for (int d = 0; d < 5; ++d) {
    CHECK(y.at(0, d) == doctest::Approx(v.at(2, d)).epsilon(1e-12));
    CHECK(y.at(1, d) == doctest::Approx(v.at(0, d)).epsilon(1e-12));
  }
}

TEST_CASE("unmasked attention matches the naive reference") {
  std::mt19937_64 rng(7);
  Tensor q = randn({3, 4}, rng);
  Tensor k = randn({3, 4}, rng);
  Tensor v = randn({3, 2}, rng);
  Tensor y = scaled_dot_attention(nullptr, q, k, v);
  Tensor ref = naive_attention(q, k, v);
  for (int i = 0; i < y.size(); ++i) CHECK(std::abs(y.at(i) - ref.at(i)) < 1e-12);
}

TEST_CASE("band mask clipping at the left boundary") {
  BoolMatrix m = band_mask(20, 20, 10);
  for (int u = 0; u < 20; ++u) CHECK(static_cast<bool>(m.at(0, u)) == (u <= 5));
}

TEST_CASE("band mask interior row") {
  BoolMatrix m = band_mask(20, 20, 10);
  for (int u = 0; u < 20; ++u)
    CHECK(static_cast<bool>(m.at(7, u)) == (u >= 2 && u <= 12));
}

TEST_CASE("wide window degenerates to the all-true mask") {
  BoolMatrix m = band_mask(6, 9, 18);
  for (std::uint8_t b : m.v) CHECK(b == 1);
}

TEST_CASE("single-head identity projections with uniform weights") {
  // W^Q=W^K=W^V=W^O=I and Q.K^T = 0 -> each output row is the column mean
  MhaParams p;
  p.num_heads = 1;
  p.d_model = 2;
  p.d_k = 2;
  Tensor I = Tensor::from({2, 2}, {1, 0, 0, 1});
  p.wq = {I};
  p.wk = {I};
  p.wv = {I};
  p.wo = I;
  Tensor q = Tensor::zeros({3, 2});
  Tensor kv = Tensor::from({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor y = mha_forward(nullptr, q, kv, p);
  for (int t = 0; t < 3; ++t) {
    CHECK(y.at(t, 0) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(y.at(t, 1) == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("band mask wider than twice the length changes nothing") {
  std::mt19937_64 rng(11);
  MhaParams p = MhaParams::create(2, 4, rng);
  Tensor q = randn({5, 4}, rng);
  Tensor kv = randn({5, 4}, rng);
  BoolMatrix mask = band_mask(5, 5, 10);
  Tensor a = mha_forward(nullptr, q, kv, p, nullptr);
  Tensor b = mha_forward(nullptr, q, kv, p, &mask);
  for (int i = 0; i < a.size(); ++i) CHECK(std::abs(a.at(i) - b.at(i)) <= 1e-12);
}

TEST_CASE("two-head forward matches an explicit per-head reference") {
  std::mt19937_64 rng(13);
  MhaParams p = MhaParams::create(2, 4, rng);
  Tensor q = randn({3, 4}, rng);
  Tensor kv = randn({3, 4}, rng);
  Tensor y = mha_forward(nullptr, q, kv, p);

  // reference: project each head with plain loops, run the naive
  // attention, concatenate, multiply by wo
  Tensor heads = Tensor::zeros({3, 4});
  for (int h = 0; h < 2; ++h) {
    Tensor qh = ops::matmul(nullptr, q, p.wq[static_cast<size_t>(h)]);
    Tensor kh = ops::matmul(nullptr, kv, p.wk[static_cast<size_t>(h)]);
    Tensor vh = ops::matmul(nullptr, kv, p.wv[static_cast<size_t>(h)]);
    Tensor ah = naive_attention(qh, kh, vh);
    for (int t = 0; t < 3; ++t)
      for (int d = 0; d < 2; ++d) heads.at(t, h * 2 + d) = ah.at(t, d);
  }
  Tensor ref = ops::matmul(nullptr, heads, p.wo);
  for (int i = 0; i < y.size(); ++i) CHECK(std::abs(y.at(i) - ref.at(i)) < 1e-10);
}

TEST_CASE("head count must divide d_model") {
  std::mt19937_64 rng(1);
  CHECK_THROWS(MhaParams::create(3, 4, rng));
}

TEST_CASE("additive fusion identities") {
  std::mt19937_64 rng(17);
  Tensor a = randn({4, 3}, rng);
  Tensor zero = Tensor::zeros({4, 3});
  Tensor neg = Tensor::zeros({4, 3});
  for (int i = 0; i < 12; ++i) neg.at(i) = -a.at(i);

  CHECK(fuse_add(nullptr, zero, a).data() == a.data());
  Tensor z = fuse_add(nullptr, a, neg);
  for (int i = 0; i < 12; ++i) CHECK(z.at(i) == 0.0);

  Tensor wide = Tensor::zeros({4, 6});
  CHECK_THROWS(fuse_add(nullptr, a, wide));
}

TEST_CASE("concatenation fusion layout") {
  Tensor daf = Tensor::from({1, 2}, {1, 2});
  Tensor attn = Tensor::from({1, 2}, {3, 4});
  Tensor f = fuse_concat(nullptr, daf, attn);
  CHECK(f.shape() == std::vector<int>{1, 4});
  CHECK(f.data() == std::vector<double>{1, 2, 3, 4});

  std::mt19937_64 rng(19);
  Tensor a = randn({5, 3}, rng), b = randn({5, 3}, rng);
  Tensor fc = fuse_concat(nullptr, a, b);
  CHECK(fc.dim(1) == 6);
  for (int t = 0; t < 5; ++t)
    for (int d = 0; d < 3; ++d) CHECK(fc.at(t, d) == a.at(t, d));
}

TEST_CASE("banded attention weights vanish outside the band") {
  std::mt19937_64 rng(23);
  const int T = 64, L = 10;
  Tensor q = randn({T, 8}, rng);
  Tensor k = randn({T, 8}, rng);
  Tensor v = randn({T, 8}, rng);
  BoolMatrix mask = band_mask(T, T, L);
  Tensor w;
  scaled_dot_attention(nullptr, q, k, v, &mask, &w);
  for (int t = 0; t < T; ++t) {
    double s = 0;
    for (int u = 0; u < T; ++u) {
      if (!mask.at(t, u)) CHECK(w.at(t, u) == 0.0);
      s += w.at(t, u);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}
