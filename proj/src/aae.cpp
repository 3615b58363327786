#include "cefmr/aae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cefmr/error.hpp"
#include "cefmr/param_blob.hpp"
#include "cefmr/rng.hpp"

namespace cefmr::aae {
namespace {

void require_batch(const AaeModel& model, const Eigen::MatrixXd& batch) {
  if (batch.cols() == 0) throw ContractError("AAE step: empty minibatch");
  if (static_cast<std::size_t>(batch.rows()) != model.catalog_size()) {
    throw ShapeError("AAE step: batch has " + std::to_string(batch.rows()) +
                     " rows, model catalog size is " + std::to_string(model.catalog_size()));
  }
}

// Validates discriminator outputs and returns them clamped for the log terms.
Eigen::RowVectorXd clamp_confidence(const Eigen::MatrixXd& d) {
  Eigen::RowVectorXd out(d.cols());
  for (Eigen::Index i = 0; i < d.cols(); ++i) {
    const double v = d(0, i);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw NumericError("discriminator output outside [0, 1]: " + std::to_string(v));
    }
    out(i) = std::clamp(v, kLogClamp, 1.0 - kLogClamp);
  }
  return out;
}

bool inside_clamp(double v) { return v > kLogClamp && v < 1.0 - kLogClamp; }

}  // namespace

void AaeModel::validate() const {
  if (encoder.output_dim() != decoder.input_dim() ||
      encoder.output_dim() != discriminator.input_dim()) {
    throw ShapeError("AAE: latent dimensions do not agree");
  }
  if (decoder.output_dim() != encoder.input_dim()) {
    throw ShapeError("AAE: decoder output must match the encoder input (catalog size)");
  }
  if (discriminator.output_dim() != 1) throw ShapeError("AAE: discriminator must output a scalar");
}

bool AaeModel::same_architecture(const AaeModel& other) const {
  return encoder.same_architecture(other.encoder) && decoder.same_architecture(other.decoder) &&
         discriminator.same_architecture(other.discriminator);
}

AaeModel make_model(const Architecture& arch, std::uint64_t seed) {
  if (arch.catalog_size == 0 || arch.hidden == 0 || arch.latent == 0 ||
      arch.discriminator_hidden == 0) {
    throw ConfigError("AAE architecture dimensions must be positive");
  }
  using nn::Activation;
  const std::size_t enc_dims[] = {arch.catalog_size, arch.hidden, arch.latent};
  const Activation enc_act[] = {arch.hidden_activation, Activation::identity};
  const std::size_t dec_dims[] = {arch.latent, arch.hidden, arch.catalog_size};
  const Activation dec_act[] = {arch.hidden_activation, Activation::sigmoid};
  const std::size_t dis_dims[] = {arch.latent, arch.discriminator_hidden, 1};
  const Activation dis_act[] = {arch.hidden_activation, Activation::sigmoid};
  AaeModel m{nn::mlp_init(enc_dims, enc_act, derive_seed(seed, {1})),
             nn::mlp_init(dec_dims, dec_act, derive_seed(seed, {2})),
             nn::mlp_init(dis_dims, dis_act, derive_seed(seed, {3}))};
  m.validate();
  return m;
}

Eigen::MatrixXd PriorSpec::sample(std::size_t count, std::uint64_t seed) const {
  if (dim == 0) throw ConfigError("prior dimension must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, c) = normal(rng);
  }
  return z;
}

void LocalTrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("local iterations must be >= 0");
  if (minibatch_size == 0) throw ConfigError("minibatch size must be positive");
  nn::OptimizerConfig{learning_rate}.validate();
}

Eigen::VectorXd reconstruct(const AaeModel& model, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.catalog_size()) {
    throw ShapeError("reconstruct: rating row length does not match catalog size");
  }
  return reconstruct_batch(model, Eigen::MatrixXd(x)).col(0);
}

Eigen::MatrixXd reconstruct_batch(const AaeModel& model, const Eigen::MatrixXd& batch) {
  return nn::forward(model.decoder, nn::forward(model.encoder, batch));
}

double reconstruction_loss(const AaeModel& model, const Eigen::MatrixXd& batch) {
  require_batch(model, batch);
  return (reconstruct_batch(model, batch) - batch).squaredNorm() / static_cast<double>(batch.cols());
}

double discriminator_loss(const AaeModel& model, const Eigen::MatrixXd& batch,
                          const Eigen::MatrixXd& prior_samples) {
  require_batch(model, batch);
  const auto real = clamp_confidence(nn::forward(model.discriminator, prior_samples));
  const auto fake = clamp_confidence(nn::forward(model.discriminator, nn::forward(model.encoder, batch)));
  double total = 0.0;
  for (Eigen::Index i = 0; i < real.size(); ++i) total -= std::log(real(i));
  for (Eigen::Index i = 0; i < fake.size(); ++i) total -= std::log(1.0 - fake(i));
  return total / static_cast<double>(batch.cols());
}

double generator_loss(const AaeModel& model, const Eigen::MatrixXd& batch) {
  require_batch(model, batch);
  const auto fake = clamp_confidence(nn::forward(model.discriminator, nn::forward(model.encoder, batch)));
  double total = 0.0;
  for (Eigen::Index i = 0; i < fake.size(); ++i) total -= std::log(fake(i));
  return total / static_cast<double>(batch.cols());
}

ReconstructionGrads reconstruction_gradients(const AaeModel& model, const Eigen::MatrixXd& batch) {
  require_batch(model, batch);
  const double d = static_cast<double>(batch.cols());
  nn::ActivationRecord enc_rec;
  nn::ActivationRecord dec_rec;
  const Eigen::MatrixXd z = nn::forward(model.encoder, batch, &enc_rec);
  const Eigen::MatrixXd x_tilde = nn::forward(model.decoder, z, &dec_rec);
  const Eigen::MatrixXd diff = x_tilde - batch;
  ReconstructionGrads out;
  out.loss = diff.squaredNorm() / d;
  auto dec = nn::backward(model.decoder, dec_rec, (2.0 / d) * diff);
  auto enc = nn::backward(model.encoder, enc_rec, dec.input_grad);
  out.decoder = std::move(dec.grads);
  out.encoder = std::move(enc.grads);
  return out;
}

SingleNetGrads discriminator_gradients(const AaeModel& model, const Eigen::MatrixXd& batch,
                                       const Eigen::MatrixXd& prior_samples) {
  require_batch(model, batch);
  if (prior_samples.cols() != batch.cols() ||
      static_cast<std::size_t>(prior_samples.rows()) != model.latent_dim()) {
    throw ShapeError("discriminator step: need one latent prior sample per datum");
  }
  const double d = static_cast<double>(batch.cols());
  const Eigen::MatrixXd codes = nn::forward(model.encoder, batch);
  // Real (prior) and fake (encoded) samples go through one batched pass.
  Eigen::MatrixXd joint(codes.rows(), 2 * codes.cols());
  joint << prior_samples, codes;
  nn::ActivationRecord rec;
  const Eigen::MatrixXd conf = nn::forward(model.discriminator, joint, &rec);
  const auto clamped = clamp_confidence(conf);
  Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(1, joint.cols());
  double loss = 0.0;
  const Eigen::Index n = codes.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    loss -= std::log(clamped(i));
    if (inside_clamp(conf(0, i))) grad_out(0, i) = -1.0 / (conf(0, i) * d);
    loss -= std::log(1.0 - clamped(n + i));
    if (inside_clamp(conf(0, n + i))) grad_out(0, n + i) = 1.0 / ((1.0 - conf(0, n + i)) * d);
  }
  SingleNetGrads out;
  out.loss = loss / d;
  out.grads = nn::backward(model.discriminator, rec, grad_out).grads;
  return out;
}

SingleNetGrads generator_gradients(const AaeModel& model, const Eigen::MatrixXd& batch) {
  require_batch(model, batch);
  const double d = static_cast<double>(batch.cols());
  nn::ActivationRecord enc_rec;
  nn::ActivationRecord dis_rec;
  const Eigen::MatrixXd codes = nn::forward(model.encoder, batch, &enc_rec);
  const Eigen::MatrixXd conf = nn::forward(model.discriminator, codes, &dis_rec);
  const auto clamped = clamp_confidence(conf);
  Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(1, conf.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < conf.cols(); ++i) {
    loss -= std::log(clamped(i));
    if (inside_clamp(conf(0, i))) grad_out(0, i) = -1.0 / (conf(0, i) * d);
  }
  const auto through_disc = nn::backward(model.discriminator, dis_rec, grad_out);
  SingleNetGrads out;
  out.loss = loss / d;
  out.grads = nn::backward(model.encoder, enc_rec, through_disc.input_grad).grads;
  return out;
}

double reconstruction_step(AaeModel& model, const Eigen::MatrixXd& batch, double learning_rate) {
  auto g = reconstruction_gradients(model, batch);
  const nn::OptimizerConfig opt{learning_rate};
  nn::sgd_step(model.encoder, g.encoder, opt);
  nn::sgd_step(model.decoder, g.decoder, opt);
  return g.loss;
}

double discriminator_step_with_samples(AaeModel& model, const Eigen::MatrixXd& batch,
                                       const Eigen::MatrixXd& prior_samples, double learning_rate) {
  auto g = discriminator_gradients(model, batch, prior_samples);
  nn::sgd_step(model.discriminator, g.grads, nn::OptimizerConfig{learning_rate});
  return g.loss;
}

double discriminator_step(AaeModel& model, const Eigen::MatrixXd& batch, const PriorSpec& prior,
                          double learning_rate, std::uint64_t seed) {
  return discriminator_step_with_samples(
      model, batch, prior.sample(static_cast<std::size_t>(batch.cols()), seed), learning_rate);
}

double generator_step(AaeModel& model, const Eigen::MatrixXd& batch, double learning_rate) {
  auto g = generator_gradients(model, batch);
  nn::sgd_step(model.encoder, g.grads, nn::OptimizerConfig{learning_rate});
  return g.loss;
}

LocalTrainStats local_train(AaeModel& model, const Eigen::MatrixXd& rows,
                            const LocalTrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (rows.rows() == 0) throw ContractError("local_train: empty training matrix");
  if (static_cast<std::size_t>(rows.cols()) != model.catalog_size()) {
    throw ShapeError("local_train: training matrix width does not match catalog size");
  }
  Rng rng(seed);
  const PriorSpec prior{PriorKind::standard_normal, model.latent_dim()};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t batch_size = std::min(cfg.minibatch_size, order.size());

  LocalTrainStats stats;
  Eigen::MatrixXd batch(rows.cols(), static_cast<Eigen::Index>(batch_size));
  for (int k = 0; k < cfg.iterations; ++k) {
    // Partial Fisher-Yates: the first batch_size entries form a uniform sample.
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
      batch.col(static_cast<Eigen::Index>(i)) = rows.row(order[i]).transpose();
    }
    stats.last_reconstruction_loss = reconstruction_step(model, batch, cfg.learning_rate);
    stats.last_discriminator_loss = discriminator_step(model, batch, prior, cfg.learning_rate, rng());
    stats.last_generator_loss = generator_step(model, batch, cfg.learning_rate);
  }
  return stats;
}

double mean_squared_error(const AaeModel& model, const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw ContractError("mean_squared_error: empty matrix");
  const Eigen::MatrixXd recon = reconstruct_batch(model, rows.transpose());
  return (recon - rows.transpose()).squaredNorm() / static_cast<double>(rows.size());
}

std::string serialize_model(const AaeModel& model) {
  ParamBlob blob;
  blob.meta["kind"] = "aae";
  const std::pair<const char*, const nn::MlpNetwork*> parts[] = {
      {"encoder", &model.encoder}, {"decoder", &model.decoder}, {"discriminator", &model.discriminator}};
  for (const auto& [name, net] : parts) {
    const ParamBlob sub = ParamBlob::decode(nn::serialize_params(*net));
    blob.meta[name] = sub.meta;
    for (auto a : sub.arrays) {
      a.name = std::string(name) + "/" + a.name;
      blob.arrays.push_back(std::move(a));
    }
  }
  return blob.encode();
}

AaeModel deserialize_model(std::string_view bytes) {
  const ParamBlob blob = ParamBlob::decode(bytes);
  if (blob.meta.value("kind", std::string()) != "aae") throw SchemaError("param blob is not an AAE blob");
  auto part = [&](const std::string& name) {
    if (!blob.meta.contains(name)) throw SchemaError("AAE blob missing " + name);
    ParamBlob sub;
    sub.meta = blob.meta[name];
    const std::string prefix = name + "/";
    for (const auto& a : blob.arrays) {
      if (a.name.starts_with(prefix)) {
        NamedArray copy = a;
        copy.name = a.name.substr(prefix.size());
        sub.arrays.push_back(std::move(copy));
      }
    }
    return nn::deserialize_params(sub.encode());
  };
  AaeModel m{part("encoder"), part("decoder"), part("discriminator")};
  try {
    m.validate();
  } catch (const ShapeError& e) {
    throw SchemaError(e.what());
  }
  return m;
}

}  // namespace cefmr::aae
