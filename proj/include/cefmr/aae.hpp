#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>

#include "cefmr/nn.hpp"

namespace cefmr::aae {

// Log arguments are clamped to [kLogClamp, 1 - kLogClamp].
inline constexpr double kLogClamp = 1e-12;

struct Architecture {
  std::size_t catalog_size = 0;
  std::size_t hidden = 128;
  std::size_t latent = 32;
  std::size_t discriminator_hidden = 64;
  nn::Activation hidden_activation = nn::Activation::relu;
};

// encoder: catalog -> hidden -> latent (identity output so codes can match
// the standard-normal prior); decoder: latent -> hidden -> catalog (sigmoid);
// discriminator: latent -> discriminator_hidden -> 1 (sigmoid).
struct AaeModel {
  nn::MlpNetwork encoder;
  nn::MlpNetwork decoder;
  nn::MlpNetwork discriminator;

  std::size_t latent_dim() const { return encoder.output_dim(); }
  std::size_t catalog_size() const { return encoder.input_dim(); }
  void validate() const;
  bool same_architecture(const AaeModel& other) const;

  friend bool operator==(const AaeModel&, const AaeModel&) = default;
};

AaeModel make_model(const Architecture& arch, std::uint64_t seed);

enum class PriorKind { standard_normal };

struct PriorSpec {
  PriorKind kind = PriorKind::standard_normal;
  std::size_t dim = 0;

  // One sample per column.
  Eigen::MatrixXd sample(std::size_t count, std::uint64_t seed) const;
};

struct LocalTrainConfig {
  int iterations = 20;            // e
  std::size_t minibatch_size = 16;
  double learning_rate = 0.01;    // eta

  void validate() const;
};

// Batches are (catalog_size x d) with one rating row per column.

Eigen::VectorXd reconstruct(const AaeModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd reconstruct_batch(const AaeModel& model, const Eigen::MatrixXd& batch);

// (1/d) * sum_x ||x - x_tilde||^2
double reconstruction_loss(const AaeModel& model, const Eigen::MatrixXd& batch);
// (1/d) * sum [-log D(z_prior) - log(1 - D(encoder(x)))]
double discriminator_loss(const AaeModel& model, const Eigen::MatrixXd& batch,
                          const Eigen::MatrixXd& prior_samples);
// (1/d) * sum -log D(encoder(x))
double generator_loss(const AaeModel& model, const Eigen::MatrixXd& batch);

struct ReconstructionGrads {
  nn::GradientBundle encoder;
  nn::GradientBundle decoder;
  double loss = 0.0;
};
ReconstructionGrads reconstruction_gradients(const AaeModel& model, const Eigen::MatrixXd& batch);

struct SingleNetGrads {
  nn::GradientBundle grads;
  double loss = 0.0;
};
SingleNetGrads discriminator_gradients(const AaeModel& model, const Eigen::MatrixXd& batch,
                                       const Eigen::MatrixXd& prior_samples);
SingleNetGrads generator_gradients(const AaeModel& model, const Eigen::MatrixXd& batch);

// Each step returns the loss evaluated before its update.

// One SGD step on encoder and decoder.
double reconstruction_step(AaeModel& model, const Eigen::MatrixXd& batch, double learning_rate);

// One SGD step on the discriminator only; one prior sample per datum.
double discriminator_step(AaeModel& model, const Eigen::MatrixXd& batch, const PriorSpec& prior,
                          double learning_rate, std::uint64_t seed);
double discriminator_step_with_samples(AaeModel& model, const Eigen::MatrixXd& batch,
                                       const Eigen::MatrixXd& prior_samples, double learning_rate);

// One SGD step on the encoder only; the gradient flows through the
// discriminator without updating it.
double generator_step(AaeModel& model, const Eigen::MatrixXd& batch, double learning_rate);

struct LocalTrainStats {
  double last_reconstruction_loss = 0.0;
  double last_discriminator_loss = 0.0;
  double last_generator_loss = 0.0;
};

// `rows` is users x catalog. For k = 1..e: sample a minibatch of rows without
// replacement, then reconstruction, discriminator and generator steps.
LocalTrainStats local_train(AaeModel& model, const Eigen::MatrixXd& rows,
                            const LocalTrainConfig& cfg, std::uint64_t seed);

// Mean over rows of the per-entry squared error.
double mean_squared_error(const AaeModel& model, const Eigen::MatrixXd& rows);

std::string serialize_model(const AaeModel& model);
AaeModel deserialize_model(std::string_view blob);

}  // namespace cefmr::aae
