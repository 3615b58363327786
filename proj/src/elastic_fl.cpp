#include "cefmr/elastic_fl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "cefmr/error.hpp"
#include "cefmr/rng.hpp"

namespace cefmr::fl {
namespace {

void require_same(const aae::AaeModel& a, const aae::AaeModel& b, const char* what) {
  if (!a.same_architecture(b)) throw ShapeError(std::string(what) + ": AAE architectures differ");
}

aae::AaeModel combine_models(const aae::AaeModel& x, double a, const aae::AaeModel& y, double b) {
  return {nn::combine(x.encoder, a, y.encoder, b), nn::combine(x.decoder, a, y.decoder, b),
          nn::combine(x.discriminator, a, y.discriminator, b)};
}

}  // namespace

std::string_view to_string(AggregationMode m) {
  return m == AggregationMode::weighted_average ? "weighted_average" : "literal_equation";
}

AggregationMode aggregation_from_string(std::string_view name) {
  if (name == "weighted_average") return AggregationMode::weighted_average;
  if (name == "literal_equation") return AggregationMode::literal_equation;
  throw ConfigError("unknown aggregation mode '" + std::string(name) + "'");
}

double weight_distance(const nn::Layer& local, const nn::Layer& global) {
  if (local.weights.rows() != global.weights.rows() || local.weights.cols() != global.weights.cols() ||
      local.bias.size() != global.bias.size()) {
    throw ShapeError("weight_distance: layer shapes differ");
  }
  const double global_sq = global.weights.squaredNorm() + global.bias.squaredNorm();
  if (global_sq == 0.0) throw NumericError("weight_distance: global layer has zero norm");
  const double diff_sq =
      (local.weights - global.weights).squaredNorm() + (local.bias - global.bias).squaredNorm();
  return std::sqrt(diff_sq) / std::sqrt(global_sq);
}

std::vector<LayerDistance> layer_distances(const aae::AaeModel& local, const aae::AaeModel& global) {
  require_same(local, global, "layer_distances");
  std::vector<LayerDistance> out;
  const std::pair<const char*, std::pair<const nn::MlpNetwork*, const nn::MlpNetwork*>> groups[] = {
      {"encoder", {&local.encoder, &global.encoder}},
      {"decoder", {&local.decoder, &global.decoder}},
      {"discriminator", {&local.discriminator, &global.discriminator}}};
  for (const auto& [name, nets] : groups) {
    for (std::size_t l = 0; l < nets.first->layer_count(); ++l) {
      out.push_back({name, l, weight_distance(nets.first->layer(l), nets.second->layer(l))});
    }
  }
  return out;
}

double elastic_coefficient(const aae::AaeModel& local, const aae::AaeModel& global, int n_b,
                           bool normalize_by_ue_count) {
  if (n_b < 1) throw ConfigError("elastic_coefficient: n_b must be >= 1");
  const auto distances = layer_distances(local, global);
  double sum = 0.0;
  for (const auto& d : distances) sum += d.distance;
  double alpha = sum / static_cast<double>(distances.size());
  if (normalize_by_ue_count) alpha /= static_cast<double>(n_b);
  return std::clamp(alpha, 0.0, 1.0);
}

aae::AaeModel elastic_blend(const aae::AaeModel& local, const aae::AaeModel& global, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("elastic_blend: alpha must lie in [0, 1]");
  require_same(local, global, "elastic_blend");
  if (alpha == 0.0) return local;
  if (alpha == 1.0) return global;
  return combine_models(global, alpha, local, 1.0 - alpha);
}

aae::AaeModel aggregate(const aae::AaeModel& global, std::span<const WeightedModel> locals,
                        double learning_rate, AggregationMode mode) {
  if (locals.empty()) throw ContractError("aggregate: no local models");
  double total = 0.0;
  for (const auto& l : locals) {
    if (l.data_size < 0.0) throw ContractError("aggregate: negative data size");
    require_same(l.model, global, "aggregate");
    total += l.data_size;
  }
  if (total <= 0.0) throw ContractError("aggregate: total data size must be positive");

  aae::AaeModel avg = combine_models(locals[0].model, locals[0].data_size / total, locals[0].model, 0.0);
  for (std::size_t i = 1; i < locals.size(); ++i) {
    avg = combine_models(avg, 1.0, locals[i].model, locals[i].data_size / total);
  }
  if (mode == AggregationMode::weighted_average) return avg;
  return combine_models(global, 1.0, avg, -learning_rate);
}

void FlConfig::validate() const {
  if (rounds < 0) throw ConfigError("fl rounds must be >= 0");
  local.validate();
}

UeClient::UeClient(int ue_id, Eigen::MatrixXd train_rows)
    : ue_id_(ue_id), train_rows_(std::move(train_rows)) {}

const aae::AaeModel& UeClient::local_model() const {
  if (!local_) throw ContractError("UE " + std::to_string(ue_id_) + " has no local model yet");
  return *local_;
}

UplinkMessage UeClient::local_update(std::string_view global_blob, int n_b, int round,
                                     const FlConfig& cfg, UeRoundLog* log) {
  const aae::AaeModel global = aae::deserialize_model(global_blob);
  // The first download seeds w_i^0 with the initial global model.
  if (!local_) local_ = global;

  const double alpha =
      cfg.elastic ? elastic_coefficient(*local_, global, n_b, cfg.normalize_by_ue_count) : 1.0;
  if (log) {
    log->round = round;
    log->ue_id = ue_id_;
    log->alpha = alpha;
    log->distances = layer_distances(*local_, global);
  }
  aae::AaeModel model = elastic_blend(*local_, global, alpha);
  aae::LocalTrainStats stats;
  if (train_rows_.rows() > 0 && cfg.local.iterations > 0) {
    stats = aae::local_train(model, train_rows_, cfg.local,
                             derive_seed(cfg.seed, {static_cast<std::uint64_t>(round),
                                                    static_cast<std::uint64_t>(ue_id_)}));
  }
  if (log) {
    log->reconstruction_loss = stats.last_reconstruction_loss;
    log->discriminator_loss = stats.last_discriminator_loss;
    log->generator_loss = stats.last_generator_loss;
  }
  local_ = std::move(model);
  return {UplinkMessage::Kind::model_blob, ue_id_, aae::serialize_model(*local_)};
}

FlRoundState run_round(const FlRoundState& state, std::span<UeClient> clients, const FlConfig& cfg,
                       std::vector<UeRoundLog>* log, TrafficLog* traffic) {
  if (clients.empty()) throw ContractError("run_round: no UEs attached");
  const std::string download = aae::serialize_model(state.global);
  const int n_b = static_cast<int>(clients.size());
  const int round = state.round + 1;

  std::vector<WeightedModel> uploads;
  uploads.reserve(clients.size());
  for (auto& client : clients) {
    UeRoundLog entry;
    UplinkMessage msg = client.local_update(download, n_b, round, cfg, log ? &entry : nullptr);
    if (traffic) {
      traffic->uplinks.push_back(msg.kind);
      traffic->uplink_bytes += msg.payload.size();
    }
    if (msg.kind != UplinkMessage::Kind::model_blob) {
      throw ContractError("run_round: expected a model upload");
    }
    uploads.push_back({aae::deserialize_model(msg.payload), client.data_size()});
    if (log) log->push_back(std::move(entry));
  }
  return {round, aggregate(state.global, uploads, cfg.local.learning_rate, cfg.aggregation)};
}

FlResult run_fl(const aae::AaeModel& initial_global, std::span<UeClient> clients, const FlConfig& cfg) {
  cfg.validate();
  FlResult result;
  FlRoundState state{0, initial_global};
  for (int r = 0; r < cfg.rounds; ++r) {
    state = run_round(state, clients, cfg, &result.log, &result.traffic);
  }
  result.global = std::move(state.global);
  return result;
}

void write_round_log_csv(const std::filesystem::path& path, std::span<const UeRoundLog> log,
                         int sbs_id) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sbs,round,ue,layer,distance,alpha,reconstruction_loss,discriminator_loss,generator_loss\n";
  out << std::setprecision(17);
  for (const auto& e : log) {
    for (const auto& d : e.distances) {
      out << sbs_id << ',' << e.round << ',' << e.ue_id << ',' << d.group << d.layer << ','
          << d.distance << ',' << e.alpha << ',' << e.reconstruction_loss << ','
          << e.discriminator_loss << ',' << e.generator_loss << '\n';
    }
  }
}

}  // namespace cefmr::fl
