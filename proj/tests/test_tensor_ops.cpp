#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "seqft/errors.hpp"
#include "seqft/ops.hpp"
#include "seqft/tensor.hpp"

using namespace seqft;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                  double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng);
  return out;
}

// Random values bounded away from zero, so finite differences never straddle
// the relu kink.
std::vector<double> random_values_off_zero(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> out(n);
  for (double& v : out) v = sign(rng) ? mag(rng) : -mag(rng);
  return out;
}

template <typename E, typename Fn>
std::string thrown_message(Fn&& fn) {
  try {
    fn();
  } catch (const E& e) {
    return e.what();
  }
  return {};
}

// Records one taped run of `forward`, then checks every analytic gradient
// entry against a central finite difference of the same computation replayed
// eagerly.
void check_gradients(std::vector<Tensor> inputs, const std::function<Tensor()>& forward) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.drop_grad();
  }
  Graph graph;
  Tensor loss;
  {
    TapeScope scope(graph);
    loss = forward();
  }
  graph.backward(loss);
  auto value = [&forward]() { return forward().item(); };
  for (Tensor& t : inputs) {
    REQUIRE(t.has_grad());
    auto analytic = t.grad();
    auto slots = t.data();
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double numeric = oracles::central_difference(value, slots[i], 1e-5);
      const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-4});
      const double rel = std::fabs(analytic[i] - numeric) / denom;
      CAPTURE(i);
      CAPTURE(analytic[i]);
      CAPTURE(numeric);
      CHECK(rel < 1e-4);
    }
  }
}

}  // namespace

TEST_CASE("tensor factories validate their arguments") {
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ContractError);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  Tensor t = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t.numel() == 4);
  CHECK(t.at({1, 0}) == 3.0);
  CHECK(Tensor::scalar(7.0).item() == 7.0);
}

TEST_CASE("clone_values copies storage instead of aliasing it") {
  Tensor a = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor alias = a;
  Tensor copy = a.clone_values();
  CHECK(alias.same_storage(a));
  CHECK_FALSE(copy.same_storage(a));
  a.data()[0] = 9.0;
  CHECK(alias.data()[0] == 9.0);
  CHECK(copy.data()[0] == 1.0);
  CHECK_FALSE(copy.requires_grad());
}

TEST_CASE("matmul multiplies by the identity unchanged") {
  Tensor eye = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor b = Tensor::from_data({2, 2}, {3.0, 4.0, 5.0, 6.0});
  Tensor out = matmul(eye, b);
  REQUIRE(out.shape() == Shape{2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.data()[i] == b.data()[i]);
}

TEST_CASE("matmul computes a row times a column") {
  Tensor a = Tensor::from_data({1, 2}, {1.0, 2.0});
  Tensor b = Tensor::from_data({2, 1}, {3.0, 4.0});
  Tensor out = matmul(a, b);
  REQUIRE(out.shape() == Shape{1, 1});
  CHECK(out.item() == 11.0);
}

TEST_CASE("matmul matches the loop oracle on random matrices") {
  auto av = random_values(4 * 5, 11);
  auto bv = random_values(5 * 3, 12);
  Tensor a = Tensor::from_data({4, 5}, av);
  Tensor b = Tensor::from_data({5, 3}, bv);
  Tensor out = matmul(a, b);
  auto expected = oracles::matmul(av, bv, 4, 5, 3);
  REQUIRE(out.numel() == static_cast<int64_t>(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(out.data()[i] == expected[i]);
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  const std::string msg = thrown_message<DimensionError>([&] { matmul(a, b); });
  CHECK(msg.find("[2x3]") != std::string::npos);
  CHECK(msg.find("[2x2]") != std::string::npos);
}

TEST_CASE("conv2d scales by a one-by-one kernel") {
  Tensor input = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor kernel = Tensor::from_data({1, 1, 1, 1}, {2.0});
  Tensor out = conv2d(input, kernel, 1, 0);
  REQUIRE(out.shape() == Shape{1, 1, 3, 3});
  for (double v : out.data()) CHECK(v == 2.0);
}

TEST_CASE("conv2d slides a two-by-two sum over a ramp") {
  Tensor input = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor kernel = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor out = conv2d(input, kernel, 1, 0);
  REQUIRE(out.shape() == Shape{1, 1, 2, 2});
  CHECK(out.at({0, 0, 0, 0}) == 12.0);
  CHECK(out.at({0, 0, 0, 1}) == 16.0);
  CHECK(out.at({0, 0, 1, 0}) == 24.0);
  CHECK(out.at({0, 0, 1, 1}) == 28.0);
}

TEST_CASE("conv2d with an all-zero kernel annihilates any input") {
  Tensor input = Tensor::from_data({1, 1, 4, 4}, random_values(16, 21));
  Tensor kernel = Tensor::zeros({2, 1, 3, 3});
  Tensor out = conv2d(input, kernel, 1, 1);
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d matches the loop oracle across strides and paddings") {
  for (int stride = 1; stride <= 2; ++stride) {
    for (int padding = 0; padding <= 2; ++padding) {
      CAPTURE(stride);
      CAPTURE(padding);
      const int64_t n = 2, c = 3, h = 6, w = 5, f = 4, kh = 3, kw = 3;
      auto iv = random_values(static_cast<std::size_t>(n * c * h * w),
                              31 + static_cast<std::uint64_t>(stride * 10 + padding));
      auto kv = random_values(static_cast<std::size_t>(f * c * kh * kw),
                              41 + static_cast<std::uint64_t>(stride * 10 + padding));
      Tensor input = Tensor::from_data({n, c, h, w}, iv);
      Tensor kernel = Tensor::from_data({f, c, kh, kw}, kv);
      Tensor out = conv2d(input, kernel, stride, padding);
      auto expected = oracles::conv2d(iv, kv, n, c, h, w, f, kh, kw, stride, padding);
      REQUIRE(out.numel() == static_cast<int64_t>(expected.size()));
      for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(out.data()[i] == doctest::Approx(expected[i]).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("conv2d rejects impossible geometry") {
  Tensor input = Tensor::zeros({1, 2, 3, 3});
  CHECK_THROWS_AS(conv2d(input, Tensor::zeros({1, 3, 3, 3}), 1, 0), DimensionError);
  CHECK_THROWS_AS(conv2d(input, Tensor::zeros({1, 2, 5, 5}), 1, 0), DimensionError);
  CHECK_THROWS_AS(conv2d(input, Tensor::zeros({1, 2, 3, 3}), 0, 0), ContractError);
  CHECK_THROWS_AS(conv2d(input, Tensor::zeros({1, 2, 3, 3}), 1, -1), ContractError);
  // 5x5 kernel fits once the input is padded to 7x7.
  Tensor out = conv2d(input, Tensor::zeros({1, 2, 5, 5}), 1, 2);
  CHECK(out.shape() == Shape{1, 1, 3, 3});
}

TEST_CASE("relu clamps negatives and keeps positives") {
  Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
  Tensor out = relu(x);
  CHECK(out.data()[0] == 0.0);
  CHECK(out.data()[1] == 0.0);
  CHECK(out.data()[2] == 2.0);
}

TEST_CASE("avg_pool2d averages non-overlapping windows") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[static_cast<std::size_t>(i)] = i + 1.0;
  Tensor x = Tensor::from_data({1, 1, 4, 4}, v);
  Tensor out = avg_pool2d(x, 2, 2);
  REQUIRE(out.shape() == Shape{1, 1, 2, 2});
  CHECK(out.at({0, 0, 0, 0}) == 3.5);
  CHECK(out.at({0, 0, 0, 1}) == 5.5);
  CHECK(out.at({0, 0, 1, 0}) == 11.5);
  CHECK(out.at({0, 0, 1, 1}) == 13.5);
}

TEST_CASE("global_avg_pool reduces to per-channel means") {
  Tensor x = Tensor::from_data({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  Tensor out = global_avg_pool(x);
  REQUIRE(out.shape() == Shape{1, 2});
  CHECK(out.at({0, 0}) == 2.5);
  CHECK(out.at({0, 1}) == 25.0);
}

TEST_CASE("concat_channels stacks channels in argument order") {
  Tensor a = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({1, 2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12});
  Tensor out = concat_channels(a, b);
  REQUIRE(out.shape() == Shape{1, 3, 2, 2});
  for (int i = 0; i < 12; ++i) CHECK(out.data()[static_cast<std::size_t>(i)] == i + 1.0);
}

TEST_CASE("concat_channels rejects mismatched non-channel dims") {
  CHECK_THROWS_AS(concat_channels(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({2, 1, 2, 2})),
                  DimensionError);
  CHECK_THROWS_AS(concat_channels(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 2})),
                  DimensionError);
}

TEST_CASE("batch_norm normalizes the batch in training mode") {
  auto v = random_values(2 * 3 * 4 * 4, 55, -2.0, 5.0);
  Tensor x = Tensor::from_data({2, 3, 4, 4}, v);
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  std::vector<double> rm(3, 0.0), rv(3, 1.0);
  Tensor out = batch_norm(x, gamma, beta, rm, rv, true);
  for (int64_t ch = 0; ch < 3; ++ch) {
    double mean = 0.0, var = 0.0;
    int64_t count = 0;
    for (int64_t nImg = 0; nImg < 2; ++nImg) {
      for (int64_t yy = 0; yy < 4; ++yy) {
        for (int64_t xx = 0; xx < 4; ++xx) {
          mean += out.at({nImg, ch, yy, xx});
          ++count;
        }
      }
    }
    mean /= static_cast<double>(count);
    for (int64_t nImg = 0; nImg < 2; ++nImg) {
      for (int64_t yy = 0; yy < 4; ++yy) {
        for (int64_t xx = 0; xx < 4; ++xx) {
          const double d = out.at({nImg, ch, yy, xx}) - mean;
          var += d * d;
        }
      }
    }
    var /= static_cast<double>(count);
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(std::fabs(var - 1.0) < 1e-4);  // eps in the denominator shifts variance slightly
  }
}

TEST_CASE("batch_norm updates running statistics with momentum 0.9") {
  Tensor x = Tensor::from_data({2, 1, 1, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor gamma = Tensor::full({1}, 1.0);
  Tensor beta = Tensor::zeros({1});
  std::vector<double> rm(1, 0.0), rv(1, 1.0);
  batch_norm(x, gamma, beta, rm, rv, true);
  // batch mean 2.5, biased batch variance 1.25
  CHECK(rm[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(rv[0] == doctest::Approx(1.025).epsilon(1e-12));
}

TEST_CASE("batch_norm eval mode uses running statistics and leaves them untouched") {
  Tensor x = Tensor::from_data({1, 1, 1, 2}, {3.0, 5.0});
  Tensor gamma = Tensor::full({1}, 2.0);
  Tensor beta = Tensor::full({1}, 3.0);
  std::vector<double> rm(1, 1.0), rv(1, 4.0);
  Tensor out = batch_norm(x, gamma, beta, rm, rv, false);
  const double istd = 1.0 / std::sqrt(4.0 + 1e-5);
  CHECK(out.data()[0] == doctest::Approx(2.0 * (3.0 - 1.0) * istd + 3.0).epsilon(1e-12));
  CHECK(out.data()[1] == doctest::Approx(2.0 * (5.0 - 1.0) * istd + 3.0).epsilon(1e-12));
  CHECK(rm[0] == 1.0);
  CHECK(rv[0] == 4.0);
}

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x = Tensor::zeros({1, 3});
  Tensor out = softmax_rows(x);
  for (double v : out.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one with entries strictly inside (0,1)") {
  Tensor x = Tensor::from_data({4, 5}, random_values(20, 77, -30.0, 30.0));
  Tensor out = softmax_rows(x);
  for (int64_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (int64_t k = 0; k < 5; ++k) {
      const double p = out.at({r, k});
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      total += p;
    }
    CHECK(std::fabs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("add_bias_rows adds the bias to every row") {
  Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor bias = Tensor::from_data({2}, {10, 20});
  Tensor out = add_bias_rows(x, bias);
  CHECK(out.at({0, 0}) == 11.0);
  CHECK(out.at({0, 1}) == 22.0);
  CHECK(out.at({1, 0}) == 13.0);
  CHECK(out.at({1, 1}) == 24.0);
}

TEST_CASE("backward of a plain sum gives unit gradients") {
  Tensor w = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  Graph graph;
  Tensor loss;
  {
    TapeScope scope(graph);
    loss = sum(w);
  }
  graph.backward(loss);
  REQUIRE(w.has_grad());
  for (double g : w.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward through relu uses the zero subgradient") {
  Tensor w = Tensor::from_data({2}, {-1.0, 2.0}, true);
  Graph graph;
  Tensor loss;
  {
    TapeScope scope(graph);
    loss = sum(relu(w));
  }
  graph.backward(loss);
  CHECK(w.grad()[0] == 0.0);
  CHECK(w.grad()[1] == 1.0);
}

TEST_CASE("backward refuses a non-scalar or untracked loss") {
  Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
  Graph graph;
  Tensor vec;
  {
    TapeScope scope(graph);
    vec = relu(w);
  }
  CHECK_THROWS_AS(graph.backward(vec), ContractError);

  Tensor untracked = sum(w);  // no tape open, so nothing was recorded
  Graph other;
  CHECK_THROWS_AS(other.backward(untracked), ContractError);
}

TEST_CASE("tensors without requires_grad never receive a gradient buffer") {
  Tensor frozen = Tensor::from_data({2, 2}, random_values(4, 91));
  Tensor live = Tensor::from_data({2, 2}, random_values(4, 92), true);
  Graph graph;
  Tensor loss;
  {
    TapeScope scope(graph);
    loss = sum(matmul(frozen, live));
  }
  graph.backward(loss);
  CHECK(live.has_grad());
  CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("ops record on the tape only when it is open and an input is tracked") {
  Tensor a = Tensor::from_data({2, 2}, random_values(4, 93), true);
  Tensor b = Tensor::from_data({2, 2}, random_values(4, 94));

  Tensor eager = matmul(a, b);
  CHECK_FALSE(eager.requires_grad());

  Graph graph;
  {
    TapeScope scope(graph);
    Tensor tracked = matmul(a, b);
    CHECK(tracked.requires_grad());
    a.set_requires_grad(false);
    Tensor all_frozen = matmul(a, b);
    CHECK_FALSE(all_frozen.requires_grad());
    a.set_requires_grad(true);
  }
  CHECK(graph.size() == 1);
  CHECK(std::strcmp(graph.op_at(0), "matmul") == 0);
}

TEST_CASE("nested tape scopes are rejected") {
  Graph outer;
  TapeScope scope(outer);
  Graph inner;
  CHECK_THROWS_AS(TapeScope{inner}, ContractError);
}

TEST_CASE("gradients match central differences") {
  SUBCASE("matmul") {
    Tensor a = Tensor::from_data({3, 4}, random_values(12, 101));
    Tensor b = Tensor::from_data({4, 2}, random_values(8, 102));
    check_gradients({a, b}, [&] { return sum(matmul(a, b)); });
  }
  SUBCASE("matmul composed with relu") {
    Tensor a = Tensor::from_data({3, 4}, random_values_off_zero(12, 103));
    Tensor b = Tensor::from_data({4, 2}, random_values_off_zero(8, 104));
    check_gradients({a, b}, [&] { return sum(relu(matmul(a, b))); });
  }
  SUBCASE("conv2d") {
    Tensor input = Tensor::from_data({2, 2, 5, 5}, random_values(100, 105));
    Tensor kernel = Tensor::from_data({3, 2, 3, 3}, random_values(54, 106));
    check_gradients({input, kernel}, [&] { return sum(conv2d(input, kernel, 2, 1)); });
  }
  SUBCASE("relu") {
    Tensor x = Tensor::from_data({7}, random_values_off_zero(7, 107));
    check_gradients({x}, [&] { return sum(relu(x)); });
  }
  SUBCASE("avg_pool2d") {
    Tensor x = Tensor::from_data({1, 2, 4, 4}, random_values(32, 108));
    check_gradients({x}, [&] { return sum(avg_pool2d(x, 2, 2)); });
  }
  SUBCASE("global_avg_pool") {
    Tensor x = Tensor::from_data({2, 3, 2, 2}, random_values(24, 109));
    check_gradients({x}, [&] { return sum(global_avg_pool(x)); });
  }
  SUBCASE("concat_channels") {
    Tensor a = Tensor::from_data({1, 2, 3, 3}, random_values_off_zero(18, 110));
    Tensor b = Tensor::from_data({1, 1, 3, 3}, random_values_off_zero(9, 111));
    check_gradients({a, b}, [&] { return sum(relu(concat_channels(a, b))); });
  }
  SUBCASE("batch_norm") {
    Tensor x = Tensor::from_data({3, 2, 2, 2}, random_values(24, 112, -2.0, 2.0));
    Tensor gamma = Tensor::from_data({2}, {1.1, 0.9});
    Tensor beta = Tensor::from_data({2}, {0.1, -0.2});
    Tensor mixer = Tensor::from_data({2, 2, 2, 2}, random_values(16, 113));
    check_gradients({x, gamma, beta}, [&] {
      std::vector<double> rm(2, 0.0), rv(2, 1.0);
      return sum(conv2d(batch_norm(x, gamma, beta, rm, rv, true), mixer, 1, 0));
    });
  }
  SUBCASE("softmax_rows") {
    Tensor x = Tensor::from_data({3, 4}, random_values(12, 114, -3.0, 3.0));
    Tensor weights = Tensor::from_data({4, 1}, {0.3, -1.2, 2.0, 0.7});
    check_gradients({x}, [&] { return sum(matmul(softmax_rows(x), weights)); });
  }
  SUBCASE("add_bias_rows") {
    Tensor x = Tensor::from_data({3, 2}, random_values_off_zero(6, 115));
    Tensor bias = Tensor::from_data({2}, {0.4, -0.6});
    check_gradients({x, bias}, [&] { return sum(relu(add_bias_rows(x, bias))); });
  }
}
