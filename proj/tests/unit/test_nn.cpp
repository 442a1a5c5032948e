#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "boundcf/errors.hpp"
#include "boundcf/nn.hpp"
#include "boundcf/rng.hpp"

namespace nn = boundcf::nn;
using boundcf::Rng;
using boundcf::ValidationError;
using nn::Activation;
using nn::Matrix;
using nn::Vector;

namespace {

nn::DenseLayer dense(Matrix w, Vector b, Activation act) {
  nn::DenseLayer layer;
  layer.weights = std::move(w);
  layer.biases = std::move(b);
  layer.activation = act;
  return layer;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

// Reference forward pass written with explicit loops.
std::vector<double> loop_forward(const std::vector<std::vector<std::vector<double>>>& ws,
                                 const std::vector<std::vector<double>>& bs,
                                 std::vector<double> x) {
  for (std::size_t k = 0; k < ws.size(); ++k) {
    std::vector<double> next(bs[k]);
    for (std::size_t r = 0; r < ws[k].size(); ++r)
      for (std::size_t c = 0; c < x.size(); ++c) next[r] += ws[k][r][c] * x[c];
    if (k + 1 < ws.size())
      for (double& v : next) v = std::tanh(v);
    x = next;
  }
  return x;
}

}  // namespace

TEST(Forward, IdentityLayerPassesInputThrough) {
  nn::Network net({dense(Matrix::Identity(2, 2), Vector::Zero(2), Activation::identity())});
  const Vector y = net.predict(vec({1.0, 2.0}));
  EXPECT_DOUBLE_EQ(y(0), 1.0);
  EXPECT_DOUBLE_EQ(y(1), 2.0);
}

TEST(Forward, SoftmaxHeadIsAProbabilityVector) {
  Rng rng(11);
  nn::Network net(5, {{7, Activation::relu()}, {3, Activation::softmax()}}, 3);
  for (int t = 0; t < 200; ++t) {
    const Vector p = net.predict(random_vector(rng, 5, -10.0, 10.0));
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_LE(p.maxCoeff(), 1.0);
  }
}

TEST(Forward, TwoLayerMatchesHandMatrixProduct) {
  const std::vector<std::vector<std::vector<double>>> ws = {
      {{0.5, -1.0, 2.0}, {1.5, 0.25, -0.75}},
      {{1.0, -2.0}},
  };
  const std::vector<std::vector<double>> bs = {{0.1, -0.2}, {0.3}};
  Matrix w1(2, 3);
  w1 << 0.5, -1.0, 2.0, 1.5, 0.25, -0.75;
  Matrix w2(1, 2);
  w2 << 1.0, -2.0;
  nn::Network net({dense(w1, vec({0.1, -0.2}), Activation::tanh()),
                   dense(w2, vec({0.3}), Activation::identity())});
  const std::vector<double> x = {0.3, -0.7, 1.1};
  const double expected = loop_forward(ws, bs, x)[0];
  EXPECT_NEAR(net.predict(vec({0.3, -0.7, 1.1}))(0), expected, 1e-14);
}

TEST(Forward, RejectsWrongInputLength) {
  nn::Network net(3, {{2, Activation::softmax()}}, 1);
  EXPECT_THROW(net.predict(vec({1.0, 2.0})), ValidationError);
}

TEST(Forward, SoftmaxMustBeTerminal) {
  EXPECT_THROW(nn::Network(3, {{4, Activation::softmax()}, {2, Activation::identity()}}, 1),
               ValidationError);
}

TEST(Forward, LayerDimensionsMustChain) {
  EXPECT_THROW(nn::Network({dense(Matrix::Zero(2, 3), Vector::Zero(2), Activation::relu()),
                            dense(Matrix::Zero(1, 4), Vector::Zero(1), Activation::identity())}),
               ValidationError);
}

TEST(Forward, DropoutOnlyActsInTrainingMode) {
  nn::Network net(4, {{32, Activation::relu(), 0.0, 0.5}, {2, Activation::softmax()}}, 5);
  Rng rng(1);
  const Vector x = random_vector(rng, 4);
  const Vector a = net.predict(x);
  const Vector b = net.forward(x).output();
  EXPECT_EQ(a, b);
  Rng drop(2);
  const Vector c = net.forward(x, true, &drop).output();
  EXPECT_NE(a, c);
}

TEST(Forward, InvertedDropoutScalesKeptUnits) {
  nn::Network net({dense(Matrix::Identity(200, 200), Vector::Zero(200), Activation::identity()),
                   dense(Matrix::Identity(200, 200), Vector::Zero(200), Activation::identity())});
  net.mutable_layers()[0].dropout_rate = 0.25;
  Rng rng(3);
  const Vector x = Vector::Ones(200);
  const nn::ForwardTrace t = net.forward(x, true, &rng);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const double v = t.output()(i);
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
  }
}

TEST(OneHot, Indicators) {
  EXPECT_EQ(nn::one_hot(0, 2), vec({1, 0}));
  EXPECT_EQ(nn::one_hot(1, 2), vec({0, 1}));
  EXPECT_EQ(nn::one_hot(3, 5), vec({0, 0, 0, 1, 0}));
  EXPECT_THROW(nn::one_hot(2, 2), ValidationError);
}

TEST(CrossEntropy, HandValues) {
  EXPECT_NEAR(nn::crossentropy(vec({1.0, 0.0}), vec({1.0, 0.0})), 0.0, 1e-12);
  EXPECT_NEAR(nn::crossentropy(vec({0.5, 0.5}), vec({0.0, 1.0})), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(nn::crossentropy(vec({0.9, 0.1}), vec({0.0, 1.0})), -std::log(0.1), 1e-12);
}

TEST(CrossEntropy, ClampsZeroProbability) {
  const double ce = nn::crossentropy(vec({1.0, 0.0}), vec({0.0, 1.0}));
  EXPECT_NEAR(ce, -std::log(nn::kProbabilityClamp), 1e-9);
  EXPECT_TRUE(std::isfinite(ce));
}

TEST(CrossEntropy, LengthMismatch) {
  EXPECT_THROW(nn::crossentropy(vec({0.5, 0.5}), vec({1.0, 0.0, 0.0})), ValidationError);
}

TEST(CrossEntropy, NonNegative) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    Vector p = random_vector(rng, 4, 0.0, 1.0);
    p /= p.sum();
    EXPECT_GE(nn::crossentropy(p, nn::one_hot(rng.index(4), 4)), 0.0);
  }
}

TEST(Mse, HandValues) {
  EXPECT_EQ(nn::mse(vec({1.5, -2.0}), vec({1.5, -2.0})), 0.0);
  EXPECT_DOUBLE_EQ(nn::mse(vec({0.0, 0.0}), vec({3.0, 4.0})), 25.0);
  EXPECT_DOUBLE_EQ(nn::mse(vec({1.0, -2.0}), vec({0.5, 3.0})), nn::mse(vec({-1.0, 2.0}), vec({-0.5, -3.0})));
  EXPECT_THROW(nn::mse(vec({1.0}), vec({1.0, 2.0})), ValidationError);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersUnchanged) {
  nn::Network net(3, {{4, Activation::elu()}, {2, Activation::softmax()}}, 9);
  const nn::Network before = net;
  nn::TrainConfig cfg;
  cfg.optimizer = nn::AdamConfig{0.0};
  nn::Trainer trainer(net, cfg);
  trainer.step({vec({0.1, 0.2, 0.3})}, {nn::one_hot(1, 2)}, nn::CrossEntropyLoss{});
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    EXPECT_EQ(net.layers()[k].weights, before.layers()[k].weights);
    EXPECT_EQ(net.layers()[k].biases, before.layers()[k].biases);
  }
}

TEST(TrainStep, LinearUnitSgdMatchesClosedFormGradient) {
  Matrix w(1, 2);
  w << 0.4, -0.3;
  nn::Network net({dense(w, vec({0.2}), Activation::identity())});
  nn::TrainConfig cfg;
  cfg.optimizer = nn::SgdConfig{0.05, 0.0};
  nn::Trainer trainer(net, cfg);
  const Vector x = vec({1.5, 2.0});
  const double y = 1.0;
  const double r = 0.4 * 1.5 - 0.3 * 2.0 + 0.2 - y;  // residual
  const double loss = trainer.step({x}, {vec({y})}, nn::MseLoss{}).loss;
  EXPECT_NEAR(loss, r * r, 1e-15);
  EXPECT_NEAR(net.layers()[0].weights(0, 0), 0.4 - 0.05 * 2.0 * r * 1.5, 1e-15);
  EXPECT_NEAR(net.layers()[0].weights(0, 1), -0.3 - 0.05 * 2.0 * r * 2.0, 1e-15);
  EXPECT_NEAR(net.layers()[0].biases(0), 0.2 - 0.05 * 2.0 * r, 1e-15);
}

TEST(TrainStep, FirstAdamStepMovesEachParameterByLearningRate) {
  Matrix w(1, 2);
  w << 0.4, -0.3;
  nn::Network net({dense(w, vec({0.2}), Activation::identity())});
  nn::TrainConfig cfg;
  cfg.optimizer = nn::AdamConfig{0.01};
  nn::Trainer trainer(net, cfg);
  trainer.step({vec({1.5, 2.0})}, {vec({1.0})}, nn::MseLoss{});
  // First bias-corrected step is lr * g / (|g| + eps); the gradient is negative here.
  const double g_w0 = 2.0 * (0.4 * 1.5 - 0.3 * 2.0 + 0.2 - 1.0) * 1.5;
  EXPECT_NEAR(net.layers()[0].weights(0, 0), 0.4 + 0.01 * std::abs(g_w0) / (std::abs(g_w0) + 1e-7), 1e-15);
}

TEST(TrainStep, SeparableToyReachesPerfectAccuracy) {
  std::vector<Vector> xs;
  std::vector<Vector> ys;
  Rng rng(21);
  for (int i = 0; i < 40; ++i) {
    const std::size_t label = static_cast<std::size_t>(i % 2);
    const double cx = label == 0 ? -2.0 : 2.0;
    xs.push_back(vec({cx + rng.uniform(-0.5, 0.5), rng.uniform(-1.0, 1.0)}));
    ys.push_back(nn::one_hot(label, 2));
  }
  nn::Network net(2, {{2, Activation::softmax()}}, 4);
  nn::TrainConfig cfg;
  cfg.optimizer = nn::AdamConfig{0.1};
  cfg.batch_size = 40;
  nn::Trainer trainer(net, cfg);
  for (int s = 0; s < 50; ++s) trainer.step(xs, ys, nn::CrossEntropyLoss{});
  int correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Vector p = net.predict(xs[i]);
    const int pred = p(1) > p(0) ? 1 : 0;
    correct += pred == static_cast<int>(i % 2) ? 1 : 0;
  }
  EXPECT_EQ(correct, 40);
}

TEST(TrainStep, NonFiniteLossAborts) {
  nn::Network net({dense(Matrix::Constant(1, 1, 1.0), vec({0.0}), Activation::identity())});
  nn::TrainConfig cfg;
  cfg.optimizer = nn::SgdConfig{0.1, 0.0};
  nn::Trainer trainer(net, cfg);
  EXPECT_THROW(trainer.step({vec({std::nan("")})}, {vec({0.0})}, nn::MseLoss{}), boundcf::NonFiniteLoss);
}

TEST(TrainStep, FixedSeedIsBitReproducible) {
  auto run = [] {
    nn::Network net(3, {{6, Activation::relu(), 0.01, 0.3}, {2, Activation::softmax()}}, 8);
    nn::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    cfg.seed = 99;
    Rng rng(5);
    std::vector<Vector> xs;
    std::vector<Vector> ys;
    for (int i = 0; i < 30; ++i) {
      xs.push_back(random_vector(rng, 3));
      ys.push_back(nn::one_hot(static_cast<std::size_t>(i % 2), 2));
    }
    nn::Trainer trainer(net, cfg);
    trainer.fit(xs, ys, nn::CrossEntropyLoss{});
    return nn::save_network(net);
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainConfig, RejectsDegenerateSettings) {
  nn::TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.epochs = 1;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

namespace {

// Random network whose ReLU-family pre-activations stay clear of the kink.
nn::Network probe_network(Rng& rng, std::size_t in, std::size_t out, Activation head,
                          const Vector& x) {
  const Activation hidden[] = {Activation::tanh(), Activation::elu(), Activation::relu(),
                               Activation::leaky_relu(0.2), Activation::sigmoid()};
  for (;;) {
    const std::size_t depth = 1 + rng.index(3);
    std::vector<nn::LayerSpec> specs;
    for (std::size_t d = 0; d < depth; ++d)
      specs.push_back({2 + rng.index(6), hidden[rng.index(5)], rng.uniform(0.0, 0.05), 0.0});
    specs.push_back({out, head});
    nn::Network net(in, specs, rng.next());
    for (auto& layer : net.mutable_layers())
      for (Eigen::Index i = 0; i < layer.biases.size(); ++i) layer.biases(i) = rng.uniform(-0.5, 0.5);
    if (!nn::gradient_check(net, nn::MseLoss{}, x, Vector::Zero(static_cast<Eigen::Index>(out))).near_kink)
      return net;
  }
}

}  // namespace

TEST(GradientCheck, CrossEntropyOnRandomNetworks) {
  Rng rng(101);
  for (int t = 0; t < 10; ++t) {
    const Vector x = random_vector(rng, 4);
    const nn::Network net = probe_network(rng, 4, 3, Activation::softmax(), x);
    const auto r = nn::gradient_check(net, nn::CrossEntropyLoss{}, x, nn::one_hot(rng.index(3), 3));
    EXPECT_LT(r.max_relative_error, 1e-4) << "network " << t;
    EXPECT_GT(r.parameters_checked, 0u);
  }
}

TEST(GradientCheck, MseOnRandomNetworks) {
  Rng rng(202);
  for (int t = 0; t < 10; ++t) {
    const Vector x = random_vector(rng, 5);
    const nn::Network net = probe_network(rng, 5, 5, Activation::sigmoid(), x);
    const auto r = nn::gradient_check(net, nn::MseLoss{}, x, random_vector(rng, 5, 0.0, 1.0));
    EXPECT_LT(r.max_relative_error, 1e-4) << "network " << t;
  }
}

TEST(GradientCheck, CompositeLossAlphaOne) {
  Rng rng(303);
  for (int t = 0; t < 10; ++t) {
    const Vector x = random_vector(rng, 4, 0.0, 1.0);
    const nn::Network clf(4, {{6, Activation::tanh()}, {2, Activation::softmax()}}, rng.next());
    const nn::Network ae = probe_network(rng, 4, 4, Activation::sigmoid(), x);
    const nn::CompositeLoss loss{&clf, 1.0, rng.index(2)};
    const auto r = nn::gradient_check(ae, loss, x, x);
    EXPECT_LT(r.max_relative_error, 1e-4) << "network " << t;
  }
}

TEST(GradientCheck, IdentityNetworkWithMatchingTargetHasZeroGradient) {
  nn::Network net({dense(Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity())});
  const Vector x = vec({0.2, -0.4, 0.9});
  const nn::ForwardTrace t = net.forward(x);
  nn::Gradients g = net.zero_gradients();
  net.backward(t, nn::evaluate_loss(nn::MseLoss{}, t.output(), x).grad_output, &g);
  EXPECT_EQ(g.max_abs(), 0.0);
}

TEST(CompositeLoss, ReportsBothTermsSeparately) {
  const nn::Network clf(2, {{2, Activation::softmax()}}, 3);
  const Vector out = vec({0.3, 0.6});
  const Vector target = vec({0.1, 0.2});
  const nn::CompositeLoss loss{&clf, 2.5, 1};
  const auto ev = nn::evaluate_loss(loss, out, target);
  EXPECT_NEAR(ev.reconstruction, 0.04 + 0.16, 1e-15);
  EXPECT_NEAR(ev.adversarial, -std::log(clf.predict(out)(1)), 1e-12);
  EXPECT_NEAR(ev.total, ev.reconstruction + 2.5 * ev.adversarial, 1e-12);
}

TEST(Persistence, RoundTripIsExact) {
  nn::Network net(6, {{5, Activation::leaky_relu(0.3), 0.01, 0.4}, {3, Activation::elu(0.7)},
                      {2, Activation::softmax()}},
                  77);
  const nn::Network back = nn::load_network(nn::save_network(net));
  ASSERT_EQ(back.layers().size(), net.layers().size());
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    EXPECT_EQ(back.layers()[k].weights, net.layers()[k].weights);
    EXPECT_EQ(back.layers()[k].biases, net.layers()[k].biases);
    EXPECT_EQ(back.layers()[k].activation, net.layers()[k].activation);
    EXPECT_EQ(back.layers()[k].l2_factor, net.layers()[k].l2_factor);
    EXPECT_EQ(back.layers()[k].dropout_rate, net.layers()[k].dropout_rate);
  }
  EXPECT_EQ(nn::save_network(back), nn::save_network(net));
}

TEST(Persistence, RejectsMalformedDocuments) {
  EXPECT_THROW(nn::load_network("not json"), ValidationError);
  EXPECT_THROW(nn::load_network("{\"kind\": \"something else\"}"), ValidationError);
}

TEST(Initialisation, HeUniformBoundsAndZeroBiases) {
  nn::Network net(50, {{40, Activation::relu()}, {2, Activation::softmax()}}, 12);
  const double limit = std::sqrt(6.0 / 50.0);
  EXPECT_LE(net.layers()[0].weights.cwiseAbs().maxCoeff(), limit);
  EXPECT_GT(net.layers()[0].weights.cwiseAbs().maxCoeff(), 0.8 * limit);
  EXPECT_EQ(net.layers()[0].biases.cwiseAbs().maxCoeff(), 0.0);
}

TEST(L2, PenaltyAndGradient) {
  Matrix w(1, 2);
  w << 1.0, -2.0;
  auto layer = dense(w, vec({5.0}), Activation::identity());
  layer.l2_factor = 0.1;
  nn::Network net({layer});
  EXPECT_NEAR(net.l2_penalty(), 0.1 * 5.0, 1e-15);
  nn::Gradients g = net.zero_gradients();
  net.add_l2_gradient(g);
  EXPECT_NEAR(g.weights[0](0, 1), 2.0 * 0.1 * -2.0, 1e-15);
  EXPECT_EQ(g.biases[0](0), 0.0);
}
