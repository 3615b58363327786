#include "cefmr/nn.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#include "cefmr/error.hpp"
#include "cefmr/param_blob.hpp"
#include "cefmr/rng.hpp"

namespace cefmr::nn {
namespace {

std::atomic<std::uint64_t> g_revision{1};

std::uint64_t next_revision() { return g_revision.fetch_add(1, std::memory_order_relaxed); }

void apply_activation(Activation a, Eigen::MatrixXd& m) {
  switch (a) {
    case Activation::relu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      m = m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
    case Activation::tanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::identity:
      break;
  }
}

// d(post)/d(pre) expressed through the post-activation values.
void scale_by_activation_derivative(Activation a, const Eigen::MatrixXd& post,
                                    Eigen::MatrixXd& grad) {
  switch (a) {
    case Activation::relu:
      grad = (post.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::sigmoid:
      grad = (grad.array() * post.array() * (1.0 - post.array())).matrix();
      break;
    case Activation::tanh:
      grad = (grad.array() * (1.0 - post.array().square())).matrix();
      break;
    case Activation::identity:
      break;
  }
}

void require_same_architecture(const MlpNetwork& a, const MlpNetwork& b, const char* what) {
  if (!a.same_architecture(b)) {
    throw ShapeError(std::string(what) + ": network architectures differ");
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

MlpNetwork::MlpNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("MlpNetwork needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) {
      throw ConfigError("MlpNetwork layer " + std::to_string(i) + " has an empty dimension");
    }
    if (l.bias.size() != l.weights.rows()) {
      throw ConfigError("MlpNetwork layer " + std::to_string(i) + " bias length mismatch");
    }
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
      throw ConfigError("MlpNetwork layer " + std::to_string(i) + " does not chain");
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) {
      throw NumericError("MlpNetwork layer " + std::to_string(i) + " has non-finite values");
    }
  }
  revision_ = next_revision();
}

std::size_t MlpNetwork::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }

std::size_t MlpNetwork::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

Layer& MlpNetwork::mutable_layer(std::size_t i) {
  touch();
  return layers_.at(i);
}

void MlpNetwork::touch() { revision_ = next_revision(); }

bool MlpNetwork::same_architecture(const MlpNetwork& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& a = layers_[i];
    const Layer& b = other.layers_[i];
    if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
        a.activation != b.activation) {
      return false;
    }
  }
  return true;
}

bool operator==(const MlpNetwork& a, const MlpNetwork& b) {
  if (!a.same_architecture(b)) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (a.layers_[i].weights != b.layers_[i].weights || a.layers_[i].bias != b.layers_[i].bias) {
      return false;
    }
  }
  return true;
}

GradientBundle GradientBundle::zeros_like(const MlpNetwork& net) {
  GradientBundle g;
  for (const auto& l : net.layers()) {
    g.weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  if (other.weights.size() != weights.size()) throw ShapeError("GradientBundle: layer count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    bias[i] += other.bias[i];
  }
  return *this;
}

GradientBundle& GradientBundle::operator*=(double s) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] *= s;
    bias[i] *= s;
  }
  return *this;
}

double GradientBundle::squared_norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    s += weights[i].squaredNorm() + bias[i].squaredNorm();
  }
  return s;
}

double GradientBundle::norm() const { return std::sqrt(squared_norm()); }

bool GradientBundle::all_finite() const {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!weights[i].allFinite() || !bias[i].allFinite()) return false;
  }
  return true;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("learning rate must lie in (0, 1]");
  }
}

MlpNetwork mlp_init(std::span<const std::size_t> layer_dims,
                    std::span<const Activation> activations, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw ConfigError("mlp_init: need at least input and output dims");
  if (activations.size() != layer_dims.size() - 1) {
    throw ConfigError("mlp_init: expected one activation per layer");
  }
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ConfigError("mlp_init: zero-width layer");
  }
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    const std::size_t fan_in = layer_dims[i];
    const std::size_t fan_out = layer_dims[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer l;
    l.weights.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = dist(rng);
    }
    l.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fan_out));
    l.activation = activations[i];
    layers.push_back(std::move(l));
  }
  return MlpNetwork(std::move(layers));
}

Eigen::MatrixXd forward(const MlpNetwork& net, const Eigen::MatrixXd& x, ActivationRecord* record) {
  if (net.layer_count() == 0) throw ContractError("forward: empty network");
  if (static_cast<std::size_t>(x.rows()) != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(net.input_dim()));
  }
  if (record) {
    record->inputs.clear();
    record->outputs.clear();
    record->dims.clear();
    record->revision = net.revision();
    record->dims.push_back(net.input_dim());
  }
  Eigen::MatrixXd h = x;
  for (const Layer& l : net.layers()) {
    Eigen::MatrixXd z = l.weights * h;
    z.colwise() += l.bias;
    apply_activation(l.activation, z);
    if (record) {
      record->inputs.push_back(std::move(h));
      record->dims.push_back(l.out_dim());
    }
    h = std::move(z);
    if (record) record->outputs.push_back(h);
  }
  return h;
}

Eigen::VectorXd forward_one(const MlpNetwork& net, const Eigen::VectorXd& x) {
  return forward(net, Eigen::MatrixXd(x)).col(0);
}

BackwardResult backward(const MlpNetwork& net, const ActivationRecord& record,
                        const Eigen::MatrixXd& output_grad) {
  const std::size_t n_layers = net.layer_count();
  if (record.revision != net.revision() || record.outputs.size() != n_layers ||
      record.inputs.size() != n_layers) {
    throw ContractError("backward: activation record does not belong to this network state");
  }
  const Eigen::MatrixXd& out = record.outputs.back();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
    throw ShapeError("backward: output gradient shape mismatch");
  }
  BackwardResult result;
  result.grads.weights.resize(n_layers);
  result.grads.bias.resize(n_layers);
  Eigen::MatrixXd grad = output_grad;
  for (std::size_t k = n_layers; k-- > 0;) {
    const Layer& l = net.layer(k);
    scale_by_activation_derivative(l.activation, record.outputs[k], grad);
    result.grads.weights[k] = grad * record.inputs[k].transpose();
    result.grads.bias[k] = grad.rowwise().sum();
    grad = l.weights.transpose() * grad;
  }
  result.input_grad = std::move(grad);
  return result;
}

void apply_gradient(MlpNetwork& net, const GradientBundle& grads, double scale) {
  if (grads.weights.size() != net.layer_count() || grads.bias.size() != net.layer_count()) {
    throw ShapeError("apply_gradient: gradient bundle layer count mismatch");
  }
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const Layer& l = net.layer(i);
    if (grads.weights[i].rows() != l.weights.rows() || grads.weights[i].cols() != l.weights.cols() ||
        grads.bias[i].size() != l.bias.size()) {
      throw ShapeError("apply_gradient: gradient shape mismatch at layer " + std::to_string(i));
    }
    if (!grads.weights[i].allFinite() || !grads.bias[i].allFinite()) {
      throw NumericError("non-finite gradient entry at layer " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    Layer& l = net.mutable_layer(i);
    l.weights += scale * grads.weights[i];
    l.bias += scale * grads.bias[i];
  }
}

void sgd_step(MlpNetwork& net, const GradientBundle& grads, const OptimizerConfig& cfg) {
  cfg.validate();
  apply_gradient(net, grads, -cfg.learning_rate);
}

void soft_update(MlpNetwork& target, const MlpNetwork& source, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("soft_update: tau must lie in (0, 1]");
  require_same_architecture(target, source, "soft_update");
  for (std::size_t i = 0; i < target.layer_count(); ++i) {
    Layer& t = target.mutable_layer(i);
    const Layer& s = source.layer(i);
    if (tau == 1.0) {
      t.weights = s.weights;
      t.bias = s.bias;
    } else {
      // Written as a step toward the source so equal networks stay fixed.
      t.weights += tau * (s.weights - t.weights);
      t.bias += tau * (s.bias - t.bias);
    }
  }
}

MlpNetwork combine(const MlpNetwork& x, double a, const MlpNetwork& y, double b) {
  require_same_architecture(x, y, "combine");
  std::vector<Layer> layers;
  layers.reserve(x.layer_count());
  for (std::size_t i = 0; i < x.layer_count(); ++i) {
    Layer l;
    l.weights = a * x.layer(i).weights + b * y.layer(i).weights;
    l.bias = a * x.layer(i).bias + b * y.layer(i).bias;
    l.activation = x.layer(i).activation;
    layers.push_back(std::move(l));
  }
  return MlpNetwork(std::move(layers));
}

std::string serialize_params(const MlpNetwork& net) {
  ParamBlob blob;
  blob.meta["kind"] = "mlp";
  blob.meta["activations"] = nlohmann::json::array();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const Layer& l = net.layer(i);
    blob.meta["activations"].push_back(std::string(to_string(l.activation)));
    NamedArray w{"layer" + std::to_string(i) + ".weight", {l.out_dim(), l.in_dim()}, {}};
    w.values.reserve(l.weights.size());
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.values.push_back(l.weights(r, c));
    }
    NamedArray b{"layer" + std::to_string(i) + ".bias", {l.out_dim()},
                 std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())};
    blob.arrays.push_back(std::move(w));
    blob.arrays.push_back(std::move(b));
  }
  return blob.encode();
}

MlpNetwork deserialize_params(std::string_view bytes) {
  const ParamBlob blob = ParamBlob::decode(bytes);
  if (blob.meta.value("kind", std::string()) != "mlp" || !blob.meta.contains("activations")) {
    throw SchemaError("param blob is not an MLP blob");
  }
  const auto activations = blob.meta["activations"].get<std::vector<std::string>>();
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < activations.size(); ++i) {
    const NamedArray& w = blob.find("layer" + std::to_string(i) + ".weight");
    const NamedArray& b = blob.find("layer" + std::to_string(i) + ".bias");
    if (w.shape.size() != 2 || b.shape.size() != 1 || b.shape[0] != w.shape[0]) {
      throw SchemaError("param blob: layer " + std::to_string(i) + " has inconsistent shapes");
    }
    Layer l;
    l.weights.resize(static_cast<Eigen::Index>(w.shape[0]), static_cast<Eigen::Index>(w.shape[1]));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = w.values[k++];
    }
    l.bias = Eigen::Map<const Eigen::VectorXd>(b.values.data(), static_cast<Eigen::Index>(b.values.size()));
    l.activation = activation_from_string(activations[i]);
    layers.push_back(std::move(l));
  }
  try {
    return MlpNetwork(std::move(layers));
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("param blob: ") + e.what());
  }
}

void load_params_into(MlpNetwork& net, std::string_view blob) {
  MlpNetwork loaded = deserialize_params(blob);
  if (!loaded.same_architecture(net)) {
    throw SchemaError("load_params_into: blob architecture does not match the target network");
  }
  net = std::move(loaded);
}

std::uint64_t checksum(const MlpNetwork& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const double* data, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Layer& l : net.layers()) {
    mix(l.weights.data(), l.weights.size());
    mix(l.bias.data(), l.bias.size());
  }
  return h;
}

}  // namespace cefmr::nn
