#include <doctest.h>

#include <cmath>

#include "cefmr/aae.hpp"
#include "cefmr/error.hpp"
#include "support.hpp"

using namespace cefmr;
using aae::AaeModel;

namespace {

AaeModel toy(std::uint64_t seed, nn::Activation hidden = nn::Activation::tanh) {
  aae::Architecture a;
  a.catalog_size = 5;
  a.hidden = 6;
  a.latent = 3;
  a.discriminator_hidden = 4;
  a.hidden_activation = hidden;
  return aae::make_model(a, seed);
}

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return u(rng); });
}

// Makes the last layer's pre-activation output the constant `pre_activation`.
void pin_output(nn::MlpNetwork& net, double pre_activation) {
  auto& last = net.mutable_layer(net.layer_count() - 1);
  last.weights.setZero();
  last.bias.setConstant(pre_activation);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("model shapes chain") {
  auto m = toy(1);
  m.validate();
  CHECK(m.latent_dim() == 3);
  CHECK(m.catalog_size() == 5);
  CHECK(m.decoder.output_dim() == 5);
  CHECK(m.discriminator.input_dim() == 3);
  CHECK(m.discriminator.output_dim() == 1);
}

TEST_CASE("reconstruct keeps length and range") {
  auto m = toy(2);
  auto x = random_batch(5, 1, 3).col(0).eval();
  auto y = aae::reconstruct(m, x);
  CHECK(y.size() == 5);
  auto batch = aae::reconstruct_batch(m, random_batch(5, 30, 4) * 10.0);
  CHECK((batch.array() >= 0.0).all());
  CHECK((batch.array() <= 1.0).all());
  CHECK_THROWS_AS(aae::reconstruct(m, Eigen::VectorXd::Zero(4)), ShapeError);
}

TEST_CASE("zero decoder outputs one half") {
  auto m = toy(3);
  pin_output(m.decoder, 0.0);
  auto y = aae::reconstruct(m, Eigen::VectorXd::Constant(5, 0.3));
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(y(i) == 0.5);
}

TEST_CASE("reconstruction loss formula") {
  auto m = toy(4);
  pin_output(m.decoder, 0.0);
  Eigen::MatrixXd perfect = Eigen::MatrixXd::Constant(5, 3, 0.5);
  const auto before = m;
  CHECK(aae::reconstruction_step(m, perfect, 0.1) == 0.0);
  CHECK(m == before);

  Eigen::MatrixXd off = Eigen::MatrixXd::Constant(5, 1, 0.5);
  off(0, 0) = 0.6;
  CHECK(aae::reconstruction_loss(m, off) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("reconstruction loss descends on a fixed batch") {
  auto m = toy(5);
  auto batch = random_batch(5, 8, 6);
  double prev = aae::reconstruction_loss(m, batch);
  for (int i = 0; i < 10; ++i) {
    aae::reconstruction_step(m, batch, 0.05);
    const double now = aae::reconstruction_loss(m, batch);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("discriminator loss at D = 1/2 is 2 ln 2") {
  auto m = toy(6);
  pin_output(m.discriminator, 0.0);
  auto batch = random_batch(5, 4, 1);
  auto prior = aae::PriorSpec{aae::PriorKind::standard_normal, 3}.sample(4, 9);
  CHECK(aae::discriminator_loss(m, batch, prior) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("perfect discriminator drives its loss to zero") {
  auto m = toy(7);
  pin_output(m.encoder, -10.0);
  nn::Layer sharp;
  sharp.weights = Eigen::MatrixXd::Constant(1, 3, 5.0);
  sharp.bias = Eigen::VectorXd::Zero(1);
  sharp.activation = nn::Activation::sigmoid;
  m.discriminator = nn::MlpNetwork({sharp});
  Eigen::MatrixXd prior = Eigen::MatrixXd::Constant(3, 4, 10.0);
  const double loss = aae::discriminator_loss(m, random_batch(5, 4, 2), prior);
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-9);
}

TEST_CASE("generator loss at fooled and 1/e discriminators") {
  auto m = toy(8);
  auto batch = random_batch(5, 4, 3);
  pin_output(m.discriminator, 40.0);
  CHECK(aae::generator_loss(m, batch) == doctest::Approx(0.0).epsilon(1e-12));
  pin_output(m.discriminator, logit(std::exp(-1.0)));
  CHECK(aae::generator_loss(m, batch) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("losses stay finite at saturated discriminators") {
  auto m = toy(9);
  auto batch = random_batch(5, 4, 4);
  auto prior = aae::PriorSpec{aae::PriorKind::standard_normal, 3}.sample(4, 1);
  for (double b : {-800.0, 800.0}) {
    pin_output(m.discriminator, b);
    CHECK(std::isfinite(aae::discriminator_loss(m, batch, prior)));
    CHECK(std::isfinite(aae::generator_loss(m, batch)));
  }
}

TEST_CASE("empty minibatches are contract errors") {
  auto m = toy(10);
  Eigen::MatrixXd empty(5, 0);
  CHECK_THROWS_AS(aae::reconstruction_step(m, empty, 0.01), ContractError);
  CHECK_THROWS_AS(aae::generator_step(m, empty, 0.01), ContractError);
  CHECK_THROWS_AS(aae::discriminator_step(m, empty, {aae::PriorKind::standard_normal, 3}, 0.01, 1),
                  ContractError);
}

TEST_CASE("AAE gradients match finite differences") {
  auto m = toy(11);
  auto batch = random_batch(5, 6, 12);
  auto prior = aae::PriorSpec{aae::PriorKind::standard_normal, 3}.sample(6, 13);

  auto rec = aae::reconstruction_gradients(m, batch);
  auto rec_loss = [&] { return aae::reconstruction_loss(m, batch); };
  CHECK(rec.loss == doctest::Approx(rec_loss()));
  CHECK(testing::max_fd_error(m.encoder, rec.encoder, rec_loss, 100, 1) < 1e-4);
  CHECK(testing::max_fd_error(m.decoder, rec.decoder, rec_loss, 100, 2) < 1e-4);

  auto dis = aae::discriminator_gradients(m, batch, prior);
  auto dis_loss = [&] { return aae::discriminator_loss(m, batch, prior); };
  CHECK(testing::max_fd_error(m.discriminator, dis.grads, dis_loss, 100, 3) < 1e-4);

  auto gen = aae::generator_gradients(m, batch);
  auto gen_loss = [&] { return aae::generator_loss(m, batch); };
  CHECK(testing::max_fd_error(m.encoder, gen.grads, gen_loss, 100, 4) < 1e-4);
}

TEST_CASE("each step touches only its own networks") {
  auto m = toy(12);
  auto batch = random_batch(5, 4, 5);
  auto sums = [](const AaeModel& x) {
    return std::array{nn::checksum(x.encoder), nn::checksum(x.decoder), nn::checksum(x.discriminator)};
  };
  auto before = sums(m);
  aae::reconstruction_step(m, batch, 0.1);
  auto after = sums(m);
  CHECK(after[0] != before[0]);
  CHECK(after[1] != before[1]);
  CHECK(after[2] == before[2]);

  before = after;
  aae::discriminator_step(m, batch, {aae::PriorKind::standard_normal, 3}, 0.1, 7);
  after = sums(m);
  CHECK(after[0] == before[0]);
  CHECK(after[1] == before[1]);
  CHECK(after[2] != before[2]);

  before = after;
  aae::generator_step(m, batch, 0.1);
  after = sums(m);
  CHECK(after[0] != before[0]);
  CHECK(after[1] == before[1]);
  CHECK(after[2] == before[2]);
}

TEST_CASE("prior samples are seeded standard normal") {
  aae::PriorSpec p{aae::PriorKind::standard_normal, 2};
  auto a = p.sample(20000, 3);
  CHECK(a == p.sample(20000, 3));
  CHECK(std::abs(a.mean()) < 0.03);
  const double var = (a.array() - a.mean()).square().mean();
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS_AS((aae::PriorSpec{aae::PriorKind::standard_normal, 0}.sample(1, 1)), ConfigError);
}

TEST_CASE("local_train with zero iterations is a no-op") {
  auto m = toy(13);
  auto before = m;
  aae::LocalTrainConfig cfg;
  cfg.iterations = 0;
  aae::local_train(m, random_batch(10, 5, 1), cfg, 4);
  CHECK(m == before);
}

TEST_CASE("local_train is deterministic under a seed") {
  aae::LocalTrainConfig cfg;
  cfg.iterations = 15;
  cfg.minibatch_size = 4;
  auto rows = random_batch(10, 5, 2);
  auto a = toy(14);
  auto b = toy(14);
  aae::local_train(a, rows, cfg, 21);
  aae::local_train(b, rows, cfg, 21);
  CHECK(a == b);
  auto c = toy(14);
  aae::local_train(c, rows, cfg, 22);
  CHECK_FALSE(a == c);
}

TEST_CASE("model blobs round-trip") {
  auto m = toy(15, nn::Activation::relu);
  auto back = aae::deserialize_model(aae::serialize_model(m));
  CHECK(back == m);
  CHECK_THROWS_AS(aae::deserialize_model(nn::serialize_params(m.encoder)), SchemaError);
}
