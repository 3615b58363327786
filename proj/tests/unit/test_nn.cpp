#include <doctest.h>

#include <cmath>

#include "cefmr/error.hpp"
#include "cefmr/nn.hpp"
#include "cefmr/param_blob.hpp"
#include "support.hpp"

using namespace cefmr;
using nn::Activation;

namespace {

nn::MlpNetwork single_layer(Eigen::MatrixXd w, Eigen::VectorXd b, Activation act) {
  nn::Layer l;
  l.weights = std::move(w);
  l.bias = std::move(b);
  l.activation = act;
  return nn::MlpNetwork({l});
}

nn::MlpNetwork make(std::vector<std::size_t> dims, std::vector<Activation> acts, std::uint64_t seed) {
  return nn::mlp_init(dims, acts, seed);
}

}  // namespace

TEST_CASE("mlp_init zero biases and fan-in bound") {
  auto net = make({2, 2}, {Activation::identity}, 3);
  CHECK(net.layer(0).bias(0) == 0.0);
  CHECK(net.layer(0).bias(1) == 0.0);

  auto wide = make({4, 8, 4}, {Activation::relu, Activation::identity}, 7);
  CHECK(wide.layer(0).weights.cwiseAbs().maxCoeff() <= 0.5);
  CHECK(wide.layer(1).weights.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
}

TEST_CASE("mlp_init is deterministic per seed") {
  auto a = make({3, 5, 2}, {Activation::tanh, Activation::sigmoid}, 11);
  auto b = make({3, 5, 2}, {Activation::tanh, Activation::sigmoid}, 11);
  auto c = make({3, 5, 2}, {Activation::tanh, Activation::sigmoid}, 12);
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("mlp_init rejects mismatched activations") {
  CHECK_THROWS_AS(make({3, 5, 2}, {Activation::tanh}, 1), ConfigError);
  CHECK_THROWS_AS(make({3}, {}, 1), ConfigError);
}

TEST_CASE("forward on hand-built single layers") {
  auto ident = single_layer(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), Activation::identity);
  auto y = nn::forward_one(ident, Eigen::Vector2d(2, 3));
  CHECK(y(0) == 2.0);
  CHECK(y(1) == 3.0);

  auto zero = single_layer(Eigen::Matrix2d::Zero(), Eigen::Vector2d(1, -1), Activation::identity);
  y = nn::forward_one(zero, Eigen::Vector2d(7, -4));
  CHECK(y(0) == 1.0);
  CHECK(y(1) == -1.0);

  Eigen::MatrixXd w(1, 2);
  w << 1, 1;
  auto sig = single_layer(w, Eigen::VectorXd::Zero(1), Activation::sigmoid);
  CHECK(nn::forward_one(sig, Eigen::Vector2d(0, 0))(0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("forward rejects wrong input length") {
  auto net = make({3, 2}, {Activation::identity}, 1);
  CHECK_THROWS_AS(nn::forward_one(net, Eigen::Vector2d(1, 2)), ShapeError);
}

TEST_CASE("backward hand chain rule on identity layer") {
  auto net = single_layer(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), Activation::identity);
  nn::ActivationRecord rec;
  nn::forward(net, Eigen::Vector2d(1, 0), &rec);
  auto r = nn::backward(net, rec, Eigen::Vector2d(1, 0));
  Eigen::Matrix2d expect;
  expect << 1, 0, 0, 0;
  CHECK(r.grads.weights[0] == expect);
  CHECK(r.grads.bias[0] == Eigen::Vector2d(1, 0));
}

TEST_CASE("backward of zero output gradient is zero") {
  auto net = make({3, 4, 2}, {Activation::tanh, Activation::sigmoid}, 5);
  nn::ActivationRecord rec;
  nn::forward(net, Eigen::Vector3d(0.1, -0.2, 0.3), &rec);
  auto r = nn::backward(net, rec, Eigen::Vector2d::Zero());
  CHECK(r.grads.squared_norm() == 0.0);
}

TEST_CASE("backward rejects a stale activation record") {
  auto net = make({2, 2}, {Activation::identity}, 5);
  nn::ActivationRecord rec;
  nn::forward(net, Eigen::Vector2d(1, 1), &rec);
  nn::sgd_step(net, nn::GradientBundle::zeros_like(net), {});
  CHECK_THROWS_AS(nn::backward(net, rec, Eigen::Vector2d(1, 1)), ContractError);
}

TEST_CASE("backprop matches central finite differences") {
  const std::vector<std::vector<Activation>> stacks = {
      {Activation::tanh, Activation::sigmoid, Activation::identity},
      {Activation::sigmoid, Activation::tanh},
      {Activation::relu, Activation::identity},
  };
  std::uint64_t seed = 1;
  for (const auto& acts : stacks) {
    std::vector<std::size_t> dims{5};
    for (std::size_t i = 0; i < acts.size(); ++i) dims.push_back(i + 1 == acts.size() ? 3 : 16);
    auto net = nn::mlp_init(dims, acts, seed);
    std::mt19937_64 rng(seed++);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(5, 4, [&] { return n01(rng); });
    Eigen::MatrixXd target = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return n01(rng); });
    auto loss = [&] { return 0.5 * (nn::forward(net, x) - target).squaredNorm(); };
    nn::ActivationRecord rec;
    Eigen::MatrixXd y = nn::forward(net, x, &rec);
    auto r = nn::backward(net, rec, y - target);
    CHECK(testing::max_fd_error(net, r.grads, loss, 100, seed) < 1e-4);

    // Input gradient by the same oracle.
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double saved = x(i, 0);
      x(i, 0) = saved + 1e-5;
      const double up = loss();
      x(i, 0) = saved - 1e-5;
      const double down = loss();
      x(i, 0) = saved;
      worst = std::max(worst, testing::relative_error(r.input_grad(i, 0), (up - down) / 2e-5));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("sgd_step arithmetic") {
  auto net = single_layer(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1), Activation::identity);
  auto g = nn::GradientBundle::zeros_like(net);
  g.weights[0](0, 0) = 1.0;
  nn::sgd_step(net, g, {0.01});
  CHECK(net.layer(0).weights(0, 0) == doctest::Approx(0.99).epsilon(1e-15));
  nn::sgd_step(net, g, {0.01});
  CHECK(net.layer(0).weights(0, 0) == doctest::Approx(1.0 - 2 * 0.01).epsilon(1e-15));

  auto before = net;
  nn::sgd_step(net, nn::GradientBundle::zeros_like(net), {0.01});
  CHECK(net == before);
}

TEST_CASE("sgd_step rejects non-finite gradients with the layer index") {
  auto net = make({2, 3, 1}, {Activation::relu, Activation::identity}, 2);
  auto g = nn::GradientBundle::zeros_like(net);
  g.bias[1](0) = std::nan("");
  try {
    nn::sgd_step(net, g, {});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("sgd converges on a scalar quadratic") {
  auto net = single_layer(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), Activation::identity);
  const double c = 3.7;
  int steps = 0;
  while (std::abs(net.layer(0).bias(0) - c) > 1e-6 && steps < 200) {
    auto g = nn::GradientBundle::zeros_like(net);
    g.bias[0](0) = 2.0 * (net.layer(0).bias(0) - c);
    nn::sgd_step(net, g, {0.1});
    ++steps;
  }
  CHECK(std::abs(net.layer(0).bias(0) - c) <= 1e-6);
  CHECK(steps <= 200);
}

TEST_CASE("soft_update examples") {
  auto zero = single_layer(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), Activation::identity);
  auto one = single_layer(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1), Activation::identity);
  auto t = zero;
  nn::soft_update(t, one, 0.001);
  CHECK(t.layer(0).weights(0, 0) == doctest::Approx(0.001).epsilon(1e-15));

  t = zero;
  nn::soft_update(t, one, 1.0);
  CHECK(t == one);

  auto s = make({3, 4, 2}, {Activation::relu, Activation::identity}, 9);
  auto fixed = s;
  nn::soft_update(fixed, s, 0.3);
  CHECK(fixed == s);
}

TEST_CASE("soft_update is element-wise convex") {
  auto target = make({3, 8, 2}, {Activation::relu, Activation::identity}, 1);
  auto source = make({3, 8, 2}, {Activation::relu, Activation::identity}, 2);
  auto updated = target;
  nn::soft_update(updated, source, 0.37);
  for (std::size_t l = 0; l < target.layer_count(); ++l) {
    const auto& a = target.layer(l).weights;
    const auto& b = source.layer(l).weights;
    const auto& u = updated.layer(l).weights;
    CHECK((u.array() >= a.cwiseMin(b).array()).all());
    CHECK((u.array() <= a.cwiseMax(b).array()).all());
  }
}

TEST_CASE("soft_update rejects architecture mismatch") {
  auto a = make({3, 2}, {Activation::identity}, 1);
  auto b = make({3, 4}, {Activation::identity}, 1);
  CHECK_THROWS_AS(nn::soft_update(a, b, 0.5), ShapeError);
}

TEST_CASE("parameter blobs round-trip bit-exactly") {
  auto net = make({6, 7, 3}, {Activation::tanh, Activation::sigmoid}, 4);
  net.mutable_layer(0).weights(0, 0) = 1.0 / 3.0;
  net.mutable_layer(1).bias(2) = -0.0;
  auto back = nn::deserialize_params(nn::serialize_params(net));
  CHECK(back == net);
  CHECK(std::signbit(back.layer(1).bias(2)));
}

TEST_CASE("distinct networks give distinct blobs") {
  auto a = make({3, 2}, {Activation::identity}, 1);
  auto b = make({3, 2}, {Activation::identity}, 2);
  CHECK(nn::serialize_params(a) != nn::serialize_params(b));
}

TEST_CASE("corrupt and mismatched blobs") {
  auto net = make({3, 4, 2}, {Activation::relu, Activation::identity}, 1);
  const auto blob = nn::serialize_params(net);
  CHECK_THROWS_AS(nn::deserialize_params(blob.substr(0, blob.size() - 5)), ParseError);
  CHECK_THROWS_AS(nn::deserialize_params(std::string_view(blob).substr(0, 12)), ParseError);
  std::string bad = blob;
  bad[0] = 'X';
  CHECK_THROWS_AS(nn::deserialize_params(bad), ParseError);

  auto other = make({3, 5, 2}, {Activation::relu, Activation::identity}, 1);
  CHECK_THROWS_AS(nn::load_params_into(other, blob), SchemaError);
  auto same = make({3, 4, 2}, {Activation::relu, Activation::identity}, 99);
  nn::load_params_into(same, blob);
  CHECK(same == net);
}

TEST_CASE("param blob container keeps names, shapes and meta") {
  ParamBlob b;
  b.meta["kind"] = "demo";
  b.arrays.push_back({"w", {2, 3}, {1, 2, 3, 4, 5, 6}});
  b.arrays.push_back({"v", {1}, {-2.5}});
  auto d = ParamBlob::decode(b.encode());
  CHECK(d.meta["kind"] == "demo");
  CHECK(d.find("w").shape == std::vector<std::size_t>{2, 3});
  CHECK(d.find("w").values == b.arrays[0].values);
  CHECK(d.find("v").values[0] == -2.5);
  CHECK_THROWS_AS(d.find("missing"), SchemaError);
}

TEST_CASE("forward, backward and updates are deterministic") {
  auto run = [] {
    auto net = make({4, 6, 2}, {Activation::tanh, Activation::identity}, 21);
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(4, 3, 0.25);
    nn::ActivationRecord rec;
    Eigen::MatrixXd y = nn::forward(net, x, &rec);
    auto r = nn::backward(net, rec, y);
    nn::sgd_step(net, r.grads, {0.05});
    return nn::checksum(net);
  };
  CHECK(run() == run());
}
