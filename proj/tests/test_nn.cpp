#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "resq/nn.hpp"

using resq::nn::StageNet;

namespace {

StageNet<double> random_net(std::size_t d, std::size_t h, std::size_t l, std::uint64_t seed) {
  StageNet<double> net(d, h, l);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : net.params) p = u(rng);
  return net;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(StageNet, ParameterCount) {
  for (std::size_t d : {1, 8, 16}) {
    for (std::size_t h : {1, 32, 64}) {
      for (std::size_t l : {0, 1, 2, 4}) {
        const StageNet<float> net(d, h, l);
        const std::size_t expected = (2 * d + 1) * h + 2 * l * (h + 1) * h + (h + 1) * d;
        EXPECT_EQ(net.num_params(), expected) << d << " " << h << " " << l;
      }
    }
  }
}

TEST(StageNet, TensorsTileTheParameterVector) {
  const StageNet<float> net(5, 7, 3);
  std::size_t next = 0;
  for (const auto& t : net.layout.tensors()) {
    EXPECT_EQ(t.offset, next) << t.name;
    next += t.size();
  }
  EXPECT_EQ(next, net.num_params());
}

TEST(StageNet, FreshNetworkReturnsBaseCentroid) {
  StageNet<float> net(8, 32, 2);
  std::mt19937_64 rng(1);
  resq::nn::init_stage(net, rng);
  const auto x_hat = random_vec(8, 2);
  const auto base = random_vec(8, 3);
  const std::vector<float> xf(x_hat.begin(), x_hat.end()), bf(base.begin(), base.end());
  const auto out = net.forward(xf, bf);
  EXPECT_EQ(out, bf);
}

TEST(StageNet, InitBoundsAreInverseSqrtFanIn) {
  StageNet<double> net(4, 16, 1);
  std::mt19937_64 rng(4);
  resq::nn::init_stage(net, rng);
  auto check = [&](const resq::nn::AffineSlot& s) {
    const double bound = 1.0 / std::sqrt(double(s.in));
    for (std::size_t i = 0; i < s.in * s.out + s.out; ++i) {
      EXPECT_LE(std::abs(net.params[s.weight + i]), bound);
    }
  };
  check(net.layout.in_proj);
  check(net.layout.fc1[0]);
  check(net.layout.fc2[0]);
}

TEST(StageNet, ForwardMatchesDefinition) {
  const auto net = random_net(6, 12, 2, 5);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x_hat = random_vec(6, 100 + s);
    const auto base = random_vec(6, 200 + s);
    const auto got = net.forward(x_hat, base);
    const auto want = oracle::stage_forward(net, x_hat, base);
    for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(got[d], want[d], 1e-12);
  }
}

// Regression values for a fixed network and input, recorded once from the
// definition-level evaluator above.
TEST(StageNet, GoldenForward) {
  const auto net = random_net(4, 8, 2, 42);
  const std::vector<double> x_hat{0.5, -1.0, 0.25, 2.0};
  const std::vector<double> base{-0.75, 0.125, 1.5, -0.5};
  const auto out = net.forward(x_hat, base);
  const std::vector<double> golden{-0.79281129278691131, -0.18878060755501447, 1.2813552764494436,
                                     -0.039768094406834598};
  ASSERT_EQ(out.size(), golden.size());
  for (std::size_t d = 0; d < out.size(); ++d) EXPECT_NEAR(out[d], golden[d], 1e-12);
}

TEST(StageNet, BatchedCandidatesEqualSingleForwardBitwise) {
  StageNet<float> net(8, 32, 2);
  std::mt19937_64 rng(6);
  resq::nn::init_stage(net, rng);
  std::uniform_real_distribution<float> u(-0.2f, 0.2f);
  const auto& o = net.layout.out_proj;
  for (std::size_t i = 0; i < o.in * o.out + o.out; ++i) net.params[o.weight + i] = u(rng);

  const std::size_t k = 16;
  std::vector<float> bases(k * 8), x_hat(8);
  for (auto& v : bases) v = u(rng) * 10.0f;
  for (auto& v : x_hat) v = u(rng) * 10.0f;

  std::vector<float> pb(k * 32), px(32), h(k * 32), out(k * 8), a, b;
  net.project_base(bases.data(), k, pb.data());
  net.project_reconstruction(x_hat.data(), px.data());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < 32; ++j) h[c * 32 + j] = pb[c * 32 + j] + px[j];
  }
  net.run_trunk(h.data(), k, bases.data(), out.data(), a, b);
  for (std::size_t c = 0; c < k; ++c) {
    const auto single =
        net.forward(x_hat, std::span<const float>(bases.data() + c * 8, 8));
    for (std::size_t d = 0; d < 8; ++d) EXPECT_EQ(out[c * 8 + d], single[d]) << c << "," << d;
  }
}

TEST(StageNet, BackwardMatchesFiniteDifferences) {
  const auto net = random_net(3, 6, 2, 7);
  const auto x_hat = random_vec(3, 8);
  const auto base = random_vec(3, 9);
  const auto g_out = random_vec(3, 10);
  // Scalar probe: <g_out, f(x_hat, base)>.
  auto probe = [&](const StageNet<double>& n, const std::vector<double>& xh) {
    const auto y = n.forward(xh, base);
    double s = 0.0;
    for (std::size_t d = 0; d < 3; ++d) s += g_out[d] * y[d];
    return s;
  };
  resq::nn::StageCache<double> cache;
  net.forward_cached(x_hat, base, cache);
  std::vector<double> grad(net.num_params(), 0.0);
  const auto g_x = net.backward(cache, g_out, grad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < net.num_params(); ++i) {
    auto up = net, down = net;
    up.params[i] += h;
    down.params[i] -= h;
    const double numeric = (probe(up, x_hat) - probe(down, x_hat)) / (2 * h);
    EXPECT_NEAR(grad[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric))) << "param " << i;
  }
  for (std::size_t d = 0; d < 3; ++d) {
    auto up = x_hat, down = x_hat;
    up[d] += h;
    down[d] -= h;
    const double numeric = (probe(net, up) - probe(net, down)) / (2 * h);
    EXPECT_NEAR(g_x[d], numeric, 1e-6 * std::max(1.0, std::abs(numeric))) << "x_hat " << d;
  }
}

TEST(StageNet, BackwardAccumulatesIntoGradient) {
  const auto net = random_net(2, 4, 1, 11);
  const auto x_hat = random_vec(2, 12);
  const auto base = random_vec(2, 13);
  const std::vector<double> g_out{1.0, -2.0};
  resq::nn::StageCache<double> cache;
  net.forward_cached(x_hat, base, cache);
  std::vector<double> once(net.num_params(), 0.0), twice(net.num_params(), 0.0);
  net.backward(cache, g_out, once);
  net.backward(cache, g_out, twice);
  net.backward(cache, g_out, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

TEST(Adam, FirstStepMovesEachParameterByLearningRate) {
  std::vector<double> w{1.0, -2.0, 3.0};
  const std::vector<std::vector<double>> g{{0.5, -4.0, 1e-3}};
  const std::size_t sizes[] = {3};
  resq::nn::Adam<double> adam({0.01, 0.9, 0.999, 1e-8}, sizes);
  std::vector<std::vector<double>*> params{&w};
  adam.step(params, g);
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(w[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(w[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(w[2], 3.0 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-9);
}

TEST(Adam, ZeroLearningRateLeavesParametersUntouched) {
  std::vector<float> w{1.5f, -0.25f};
  const std::vector<std::vector<float>> g{{3.0f, -1.0f}};
  const std::size_t sizes[] = {2};
  resq::nn::Adam<float> adam({0.0, 0.9, 0.999, 1e-8}, sizes);
  std::vector<std::vector<float>*> params{&w};
  for (int i = 0; i < 5; ++i) adam.step(params, g);
  EXPECT_EQ(w, (std::vector<float>{1.5f, -0.25f}));
}
