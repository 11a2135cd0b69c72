#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "sagin/nn.hpp"

using namespace sagin;
using namespace sagin::nn;

TEST_CASE("forward pass") {
  SUBCASE("zero network through a sigmoid head") {
    auto net = DenseNet::zeros({3, 4, 2}, {{HeadKind::Sigmoid, 0, 2}});
    const auto y = forward(net, std::vector<double>{1.0, -2.0, 3.0});
    CHECK(y[0] == 0.5);
    CHECK(y[1] == 0.5);
  }
  SUBCASE("1x1 tanh hidden unit") {
    auto net = DenseNet::zeros({1, 1, 1}, {});
    net.mutable_weights()[0] = 1.0;
    net.mutable_weights()[1] = 1.0;
    for (double x : {-2.0, 0.3, 1.7}) CHECK(forward(net, std::vector<double>{x})[0] == doctest::Approx(std::tanh(x)).epsilon(1e-15));
  }
  SUBCASE("random 4-2-1 net against a straight-line evaluation") {
    Rng rng(42);
    DenseNet net({4, 2, 1}, {}, rng);
    const std::vector<double> x{0.3, -0.7, 1.1, 0.05};
    const auto w = net.weights();
    const auto b = net.biases();
    double h[2];
    for (int j = 0; j < 2; ++j) {
      double z = b[static_cast<std::size_t>(j)];
      for (int i = 0; i < 4; ++i) z += w[static_cast<std::size_t>(j * 4 + i)] * x[static_cast<std::size_t>(i)];
      h[j] = std::tanh(z);
    }
    const double out = b[2] + w[8] * h[0] + w[9] * h[1];
    CHECK(std::abs(forward(net, x)[0] - out) < 1e-12);
  }
  SUBCASE("softmax head sums to one") {
    Rng rng(1);
    DenseNet net({3, 5, 4}, {{HeadKind::Softmax, 0, 3}, {HeadKind::Identity, 3, 1}}, rng);
    const auto y = forward(net, std::vector<double>{1, 2, 3});
    CHECK(y[0] + y[1] + y[2] == doctest::Approx(1.0));
  }
  auto net = DenseNet::zeros({3, 1}, {});
  CHECK_THROWS_AS(forward(net, std::vector<double>{1.0}), ContractViolation);
  CHECK_THROWS_AS(DenseNet::zeros({3, 2}, {{HeadKind::Softmax, 0, 1}}), ContractViolation);
}

TEST_CASE("backward pass") {
  SUBCASE("linear layer: weight gradient equals the input") {
    auto net = DenseNet::zeros({3, 1}, {});
    Matrix x(3, 1);
    x << 0.5, -1.5, 2.0;
    const auto g = backward(net, forward(net, x), Matrix::Ones(1, 1));
    CHECK(g.weights == std::vector<double>{0.5, -1.5, 2.0});
    CHECK(g.biases == std::vector<double>{1.0});
  }
  SUBCASE("zero output gradient") {
    Rng rng(2);
    DenseNet net({4, 6, 3}, {}, rng);
    const Matrix x = Matrix::Random(4, 5);
    const auto g = backward(net, forward(net, x), Matrix::Zero(3, 5));
    CHECK(g.max_abs() == 0.0);
  }
  SUBCASE("stale cache") {
    Rng rng(2);
    DenseNet net({2, 2}, {}, rng);
    const auto cache = forward(net, Matrix::Ones(2, 1));
    net.mutable_biases()[0] += 1.0;
    CHECK_THROWS_AS(backward(net, cache, Matrix::Ones(2, 1)), ContractViolation);
  }
  SUBCASE("finite differences on random networks") {
    const auto r = oracle::gradient_check(77, 100);
    INFO(r.detail);
    CHECK(r.pass);
  }
}

TEST_CASE("adam") {
  Rng rng(4);
  DenseNet net({3, 4, 2}, {}, rng);
  SUBCASE("zero gradient") {
    auto state = AdamState::for_net(net, 0.01);
    const std::vector<double> w0(net.weights().begin(), net.weights().end());
    Gradients g;
    g.weights.assign(net.weights().size(), 0.0);
    g.biases.assign(net.biases().size(), 0.0);
    adam_step(state, net, g);
    CHECK(state.step_count == 1);
    CHECK(std::equal(w0.begin(), w0.end(), net.weights().begin()));
  }
  SUBCASE("first step moves by the learning rate against the gradient") {
    auto state = AdamState::for_net(net, 0.01);
    const std::vector<double> w0(net.weights().begin(), net.weights().end());
    Gradients g;
    g.weights.assign(net.weights().size(), 0.5);
    g.biases.assign(net.biases().size(), -2.0);
    const std::vector<double> b0(net.biases().begin(), net.biases().end());
    adam_step(state, net, g);
    for (std::size_t i = 0; i < w0.size(); ++i) CHECK(net.weights()[i] - w0[i] == doctest::Approx(-0.01).epsilon(1e-6));
    for (std::size_t i = 0; i < b0.size(); ++i) CHECK(net.biases()[i] - b0[i] == doctest::Approx(0.01).epsilon(1e-6));
  }
  SUBCASE("determinism and non-finite rejection") {
    DenseNet twin = net;
    auto s1 = AdamState::for_net(net, 0.01);
    auto s2 = AdamState::for_net(twin, 0.01);
    Gradients g;
    g.weights.assign(net.weights().size(), 0.3);
    g.biases.assign(net.biases().size(), 0.1);
    adam_step(s1, net, g);
    adam_step(s2, twin, g);
    CHECK(std::equal(net.weights().begin(), net.weights().end(), twin.weights().begin()));
    g.weights[0] = std::nan("");
    const std::vector<double> w0(net.weights().begin(), net.weights().end());
    CHECK_THROWS_AS(adam_step(s1, net, g), NumericalError);
    CHECK(std::equal(w0.begin(), w0.end(), net.weights().begin()));
    CHECK(s1.step_count == 1);
  }
}

TEST_CASE("soft update") {
  const auto r = oracle::soft_update_blend(8);
  INFO(r.detail);
  CHECK(r.pass);
  Rng rng(1);
  DenseNet a({2, 2}, {}, rng), b({3, 2}, {}, rng);
  CHECK_THROWS_AS(soft_update(a, b, 0.5), ContractViolation);
  CHECK_THROWS_AS(soft_update(a, a, 1.5), ContractViolation);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(6);
  DenseNet net({5, 8, 4}, {{HeadKind::Softmax, 0, 3}, {HeadKind::Sigmoid, 3, 1}}, rng);
  const auto dir = std::filesystem::temp_directory_path() / "sagin_nn_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(net, dir / "actor");
  CHECK(std::filesystem::file_size(dir / "actor.bin") == net.parameter_count() * 8);
  const DenseNet back = load_checkpoint(dir / "actor");
  CHECK(back.same_shape(net));
  CHECK(std::equal(net.weights().begin(), net.weights().end(), back.weights().begin()));
  CHECK(std::equal(net.biases().begin(), net.biases().end(), back.biases().begin()));
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_checkpoint(dir / "missing"));
}
