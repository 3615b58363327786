#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cefmr::nn {

enum class Activation { relu, sigmoid, tanh, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct Layer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

// A stack of affine + activation layers. Samples are columns throughout:
// a batch of d inputs is an (input_dim x d) matrix.
//
// Every mutation through the non-const accessors bumps a process-wide
// revision number, which lets backward() reject activation records that were
// produced before the parameters changed.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  explicit MlpNetwork(std::vector<Layer> layers);

  std::size_t layer_count() const { return layers_.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Layer& mutable_layer(std::size_t i);

  std::uint64_t revision() const { return revision_; }
  void touch();

  bool same_architecture(const MlpNetwork& other) const;

  friend bool operator==(const MlpNetwork& a, const MlpNetwork& b);

 private:
  std::vector<Layer> layers_;
  std::uint64_t revision_ = 0;
};

struct GradientBundle {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;

  static GradientBundle zeros_like(const MlpNetwork& net);
  GradientBundle& operator+=(const GradientBundle& other);
  GradientBundle& operator*=(double s);
  double squared_norm() const;
  double norm() const;
  bool all_finite() const;
};

// Per-layer inputs and post-activations recorded during forward().
struct ActivationRecord {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> outputs;
  std::uint64_t revision = 0;
  std::vector<std::size_t> dims;
};

struct BackwardResult {
  GradientBundle grads;
  Eigen::MatrixXd input_grad;  // dLoss/dInput, same shape as the forward input
};

struct OptimizerConfig {
  double learning_rate = 0.01;

  void validate() const;
};

// Weights ~ U[-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
MlpNetwork mlp_init(std::span<const std::size_t> layer_dims,
                    std::span<const Activation> activations, std::uint64_t seed);

Eigen::MatrixXd forward(const MlpNetwork& net, const Eigen::MatrixXd& x,
                        ActivationRecord* record = nullptr);
Eigen::VectorXd forward_one(const MlpNetwork& net, const Eigen::VectorXd& x);

BackwardResult backward(const MlpNetwork& net, const ActivationRecord& record,
                        const Eigen::MatrixXd& output_grad);

// p <- p - lr * g. Throws NumericError naming the first layer with a
// non-finite gradient entry.
void sgd_step(MlpNetwork& net, const GradientBundle& grads, const OptimizerConfig& cfg);

// p <- p + scale * g with no sign convention; sgd_step and gradient ascent are
// both expressed through it.
void apply_gradient(MlpNetwork& net, const GradientBundle& grads, double scale);

// target <- tau * source + (1 - tau) * target
void soft_update(MlpNetwork& target, const MlpNetwork& source, double tau);

// Element-wise a * x + b * y over two networks of identical architecture.
MlpNetwork combine(const MlpNetwork& x, double a, const MlpNetwork& y, double b);

std::string serialize_params(const MlpNetwork& net);
MlpNetwork deserialize_params(std::string_view blob);

// Replaces the parameters of `net` with those in `blob`; the architecture
// must match exactly (SchemaError otherwise).
void load_params_into(MlpNetwork& net, std::string_view blob);

// Order-sensitive FNV-1a digest over the raw parameter bytes. Used to assert
// that an update left a network untouched.
std::uint64_t checksum(const MlpNetwork& net);

}  // namespace cefmr::nn
