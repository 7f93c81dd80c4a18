#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lbkd/optim.hpp"

using namespace lbkd;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto w = Tensor({3}, {1.0, -2.0, 3.0}, true);
  Adam opt({{"w", w}});
  backward(sum(w * 0.0));
  opt.step();
  opt.step();
  EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()), (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(opt.steps(), 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto w = Tensor({3}, {1.0, -2.0, 3.0}, true);
  Adam opt({{"w", w}}, {0.01, 0.9, 0.999, 0.0});
  backward(dot(w, Tensor({3}, {5.0, -0.001, 1e3})));
  opt.step();
  EXPECT_NEAR(w[0], 0.99, 1e-12);
  EXPECT_NEAR(w[1], -1.99, 1e-12);
  EXPECT_NEAR(w[2], 2.99, 1e-12);
}

TEST(Adam, MatchesHandComputedSecondStep) {
  auto w = Tensor({1}, {0.0}, true);
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  Adam opt({{"w", w}}, cfg);
  double ref = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : -3.0;
    opt.zero_grad();
    backward(w * g);
    opt.step();
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(w[0], ref, 1e-15);
}

TEST(Adam, MinimizesQuadratic) {
  auto w = Tensor({1}, {3.0}, true);
  Adam opt({{"w", w}}, {0.1});
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    backward(dot(w, w));
    opt.step();
  }
  EXPECT_LT(std::abs(w[0]), 0.5);
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdating) {
  auto a = Tensor({1}, {1.0}, true), b = Tensor({1}, {2.0}, true);
  Adam opt({{"a", a}, {"b", b}});
  backward(a * 1.0 + b * std::numeric_limits<double>::quiet_NaN());
  try {
    opt.step();
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(b[0], 2.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(EarlyStopping, PatienceOneStopsAfterTwoFlatEpochs) {
  EarlyStopping es(1, 1e-4);
  int epochs = 0;
  for (int e = 0; e < 10 && !es.should_stop(); ++e) {
    es.update(5.0);
    ++epochs;
  }
  EXPECT_EQ(epochs, 2);
  EXPECT_EQ(es.best(), 5.0);
}

TEST(EarlyStopping, MinDeltaAndReset) {
  EarlyStopping es(2, 0.1);
  EXPECT_TRUE(es.update(1.0));
  EXPECT_FALSE(es.update(0.95));
  EXPECT_TRUE(es.update(0.85));
  EXPECT_FALSE(es.update(0.9));
  EXPECT_FALSE(es.should_stop());
  EXPECT_FALSE(es.update(0.8));
  EXPECT_TRUE(es.should_stop());
  EXPECT_THROW(EarlyStopping(0), ConfigError);
}
