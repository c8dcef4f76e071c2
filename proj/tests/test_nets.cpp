#include "drldo/nets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "drldo/errors.hpp"
#include "drldo/rng.hpp"

namespace drldo {
namespace {

TEST(Softmax, NormalizesAndOrders) {
  const std::vector<double> logits = {1.0, 2.0, 3.0};
  std::vector<double> probs(3);
  softmax(logits, probs);
  double sum = 0.0;
  for (double p : probs) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    sum += p;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_GT(probs[2], probs[1]);
  EXPECT_GT(probs[1], probs[0]);

  // large logits must not overflow
  const std::vector<double> huge = {1000.0, 1001.0};
  std::vector<double> safe(2);
  softmax(huge, safe);
  EXPECT_NEAR(safe[0] + safe[1], 1.0, 1e-12);
}

TEST(Mlp, ForwardIsDeterministic) {
  auto net = Mlp::initialize(MlpSpec{4, {8, 8}, 3}, 17);
  const std::vector<double> in = {0.1, 0.5, 0.9, 0.3};
  std::vector<double> out_a(3), out_b(3);
  net.forward(in, out_a);
  net.forward(in, out_b);
  EXPECT_EQ(out_a, out_b);
  EXPECT_THROW(net.forward(std::vector<double>{1.0}, out_a), ParameterError);
}

TEST(Mlp, HiddenRowsAreOrthonormalUpToGain) {
  const int in = 16, out = 8;
  auto net = Mlp::initialize(MlpSpec{in, {out}, 2}, 3, /*hidden_gain=*/2.0);
  const auto& p = net.params();
  for (int r = 0; r < out; ++r) {
    for (int r2 = 0; r2 <= r; ++r2) {
      double dot = 0.0;
      for (int c = 0; c < in; ++c)
        dot += p[static_cast<std::size_t>(r * in + c)] *
               p[static_cast<std::size_t>(r2 * in + c)];
      EXPECT_NEAR(dot, r == r2 ? 4.0 : 0.0, 1e-9);
    }
  }
}

TEST(Mlp, ZeroHiddenLayersIsAPlainAffineMap) {
  Mlp net(MlpSpec{2, {}, 1});
  net.params() = {3.0, -2.0, 0.5};  // w = [3, -2], b = 0.5
  const std::vector<double> in = {1.0, 2.0};
  double out = 0.0;
  net.forward(in, {&out, 1});
  EXPECT_DOUBLE_EQ(out, 3.0 * 1.0 - 2.0 * 2.0 + 0.5);
}

// gradient of a quadratic loss through the whole network vs central
// finite differences
TEST(Mlp, BackwardMatchesFiniteDifferences) {
  auto net = Mlp::initialize(MlpSpec{3, {6, 5}, 4}, 11, 5.0 / 3.0, 0.7);
  const std::vector<double> in = {0.2, -0.4, 0.8};
  const std::vector<double> target = {0.1, 0.2, 0.3, 0.4};

  auto loss_of = [&](const Mlp& m) {
    std::vector<double> out(4);
    m.forward(in, out);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      loss += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
    return loss;
  };

  MlpCache cache;
  std::vector<double> out(4);
  net.forward(in, out, &cache);
  std::vector<double> dout(4);
  for (std::size_t i = 0; i < out.size(); ++i) dout[i] = out[i] - target[i];
  std::vector<double> grad(net.param_count(), 0.0);
  std::vector<double> dinput(3, 0.0);
  net.backward(cache, dout, grad, dinput);

  const double h = 1e-6;
  Mlp probe = net;
  for (std::size_t i = 0; i < net.param_count(); ++i) {
    const double saved = probe.params()[i];
    probe.params()[i] = saved + h;
    const double up = loss_of(probe);
    probe.params()[i] = saved - h;
    const double down = loss_of(probe);
    probe.params()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    EXPECT_NEAR(grad[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(Adam, ConvergesOnAQuadratic) {
  std::vector<double> x = {0.0};
  AdamOptimizer adam(1, {.learning_rate = 0.1});
  for (int step = 0; step < 1000; ++step) {
    const std::vector<double> grad = {2.0 * (x[0] - 3.0)};
    adam.step(x, grad);
  }
  EXPECT_NEAR(x[0], 3.0, 1e-4);
}

}  // namespace
}  // namespace drldo
