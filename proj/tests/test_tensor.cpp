#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "scalechain/error.hpp"
#include "scalechain/parallel.hpp"
#include "scalechain/tensor.hpp"

using namespace scalechain;

namespace {

Tensor random_tensor(std::mt19937& rng, int c, int h, int w) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  Tensor t(c, h, w);
  for (float& v : t.data()) v = d(rng);
  return t;
}

ConvParams random_conv(std::mt19937& rng, int out, int in, int k, double zero_fraction = 0.0) {
  ConvParams p = ConvParams::zeros(out, in, k, k);
  std::normal_distribution<float> d(0.0f, 0.5f);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (float& w : p.weights) w = u(rng) < zero_fraction ? 0.0f : d(rng);
  for (float& b : p.bias) b = d(rng);
  return p;
}

void check_against_oracle(const Tensor& x, const ConvParams& p, const Tensor& y) {
  std::vector<float> xs(x.data().begin(), x.data().end());
  auto ref = oracle::conv2d(xs, x.channels(), x.height(), x.width(), p.weights, p.bias, p.out_channels, p.k_h, p.k_w);
  REQUIRE(y.size() == ref.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    worst = std::max(worst, std::abs(y.data()[i] - ref[i]) / std::max(1.0, std::abs(ref[i])));
  CHECK(worst < 1e-5);
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("conv2d matches the direct oracle across shapes") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> ch(1, 9), sz(1, 21);
    for (int trial = 0; trial < 40; ++trial) {
      int k = (trial % 3 == 0) ? 1 : ((trial % 3 == 1) ? 3 : 5);
      Tensor x = random_tensor(rng, ch(rng), sz(rng), sz(rng));
      ConvParams p = random_conv(rng, ch(rng), x.channels(), k, trial % 4 == 0 ? 0.6 : 0.0);
      check_against_oracle(x, p, conv2d(x, p));
    }
  }

  TEST_CASE("conv2d output is independent of the worker count") {
    std::mt19937 rng(4);
    Tensor x = random_tensor(rng, 7, 19, 23);
    ConvParams p = random_conv(rng, 13, 7, 3);
    set_max_threads(1);
    Tensor a = conv2d(x, p);
    set_max_threads(5);
    Tensor b = conv2d(x, p);
    set_max_threads(0);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }

  TEST_CASE("split accumulation equals conv2d on the concat bit for bit") {
    std::mt19937 rng(9);
    std::vector<Tensor> parts{random_tensor(rng, 3, 9, 11), random_tensor(rng, 5, 9, 11), random_tensor(rng, 2, 9, 11)};
    Tensor cat = concat_channels(parts);
    CHECK(cat.channels() == 10);
    ConvParams p = random_conv(rng, 6, 10, 3);
    Tensor whole = conv2d(cat, p);
    Tensor acc = conv2d_bias(p, 9, 11);
    int off = 0;
    for (const Tensor& t : parts) {
      conv2d_accumulate(acc, t, p, off);
      off += t.channels();
    }
    CHECK(std::equal(whole.data().begin(), whole.data().end(), acc.data().begin()));
  }

  TEST_CASE("concat, relu, add and pixel shuffle") {
    Tensor a(1, 2, 2, 1.0f), b(2, 2, 2, -2.0f);
    std::vector<Tensor> parts{a, b};
    Tensor c = concat_channels(parts);
    CHECK(c.at(0, 1, 1) == 1.0f);
    CHECK(c.at(2, 0, 0) == -2.0f);
    Tensor r = relu(c);
    CHECK(r.at(1, 0, 0) == 0.0f);
    CHECK(add(a, a).at(0, 0, 1) == 2.0f);
    CHECK_THROWS_AS(add(a, b), Error);

    Tensor x(8, 1, 2);
    for (int ch = 0; ch < 8; ++ch)
      for (int j = 0; j < 2; ++j) x.at(ch, 0, j) = static_cast<float>(ch * 10 + j);
    Tensor y = pixel_shuffle(x, 2);
    CHECK(y.channels() == 2);
    CHECK(y.height() == 2);
    CHECK(y.width() == 4);
    // out[c, 2i+di, 2j+dj] = in[4c + 2di + dj, i, j]
    for (int c2 = 0; c2 < 2; ++c2)
      for (int di = 0; di < 2; ++di)
        for (int j = 0; j < 2; ++j)
          for (int dj = 0; dj < 2; ++dj) CHECK(y.at(c2, di, 2 * j + dj) == x.at(4 * c2 + 2 * di + dj, 0, j));
    CHECK_THROWS_AS(pixel_shuffle(Tensor(3, 2, 2), 2), Error);
  }

  TEST_CASE("shape errors") {
    ConvParams even = ConvParams::zeros(1, 1, 3, 3);
    even.k_h = 2;
    even.k_w = 2;
    even.weights.resize(4);
    CHECK_THROWS_AS(even.validate(), Error);
    ConvParams p = ConvParams::zeros(2, 3, 3, 3);
    CHECK_THROWS_AS(conv2d(Tensor(2, 4, 4), p), Error);
    p.weights.pop_back();
    CHECK_THROWS_AS(p.validate(), Error);
    CHECK_THROWS_AS(Tensor(1, 2, 2, std::vector<float>(3)), Error);
  }

  TEST_CASE("nested parallel loops run every index once") {
    std::vector<int> hits(40 * 8, 0);
    set_max_threads(4);
    parallel_for(40, [&](std::size_t i) {
      parallel_for(8, [&](std::size_t j) { ++hits[i * 8 + j]; });
    });
    set_max_threads(0);
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                      if (i == 3) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
  }
}
