#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cefmr/aae.hpp"
#include "cefmr/nn.hpp"

namespace cefmr::fl {

enum class AggregationMode { weighted_average, literal_equation };

std::string_view to_string(AggregationMode m);
AggregationMode aggregation_from_string(std::string_view name);

// ||local - global||_F / ||global||_F with weights and bias of the layer
// concatenated.
double weight_distance(const nn::Layer& local, const nn::Layer& global);

struct LayerDistance {
  std::string group;  // encoder | decoder | discriminator
  std::size_t layer = 0;
  double distance = 0.0;
};

// One entry per layer across encoder, decoder and discriminator, in that order.
std::vector<LayerDistance> layer_distances(const aae::AaeModel& local, const aae::AaeModel& global);

// Mean layer distance, divided by n_b when normalize_by_ue_count is set,
// clamped to [0, 1].
double elastic_coefficient(const aae::AaeModel& local, const aae::AaeModel& global, int n_b,
                           bool normalize_by_ue_count = true);

// alpha * global + (1 - alpha) * local
aae::AaeModel elastic_blend(const aae::AaeModel& local, const aae::AaeModel& global, double alpha);

struct WeightedModel {
  aae::AaeModel model;
  double data_size = 0.0;
};

// weighted_average: sum_i (d_i / d) w_i.
// literal_equation: w - lr * sum_i (d_i / d) w_i.
aae::AaeModel aggregate(const aae::AaeModel& global, std::span<const WeightedModel> locals,
                        double learning_rate, AggregationMode mode);

struct FlConfig {
  int rounds = 10;  // R_max
  aae::LocalTrainConfig local;
  AggregationMode aggregation = AggregationMode::weighted_average;
  bool normalize_by_ue_count = true;
  // false pins alpha to 1: every UE starts local training from the
  // downloaded global model, i.e. conventional federated averaging.
  bool elastic = true;
  std::uint64_t seed = 1;

  void validate() const;
};

struct UeRoundLog {
  int round = 0;
  int ue_id = 0;
  double alpha = 0.0;
  std::vector<LayerDistance> distances;  // dis(w_i^{r-1}, w^r) at download time
  double reconstruction_loss = 0.0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
};

// Everything that crosses from a UE to its SBS goes through one of these.
struct UplinkMessage {
  enum class Kind { model_blob, content_ids };
  Kind kind = Kind::model_blob;
  int ue_id = 0;
  std::string payload;
};

// A federated client. Its rating data stays private: the only outputs are
// serialized model uploads and, after training, predicted content lists.
class UeClient {
 public:
  UeClient(int ue_id, Eigen::MatrixXd train_rows);

  int ue_id() const { return ue_id_; }
  // d_i: number of training rows (users).
  double data_size() const { return static_cast<double>(train_rows_.rows()); }

  // Download -> elastic blend -> local training -> upload.
  UplinkMessage local_update(std::string_view global_blob, int n_b, int round, const FlConfig& cfg,
                             UeRoundLog* log = nullptr);

  bool has_local_model() const { return local_.has_value(); }
  // The personalized model w_i^r from the most recent round.
  const aae::AaeModel& local_model() const;
  void set_local_model(aae::AaeModel model) { local_ = std::move(model); }

 private:
  int ue_id_;
  Eigen::MatrixXd train_rows_;
  std::optional<aae::AaeModel> local_;
};

struct FlRoundState {
  int round = 0;  // number of completed rounds
  aae::AaeModel global;
};

struct TrafficLog {
  std::vector<UplinkMessage::Kind> uplinks;
  std::size_t uplink_bytes = 0;
};

FlRoundState run_round(const FlRoundState& state, std::span<UeClient> clients, const FlConfig& cfg,
                       std::vector<UeRoundLog>* log = nullptr, TrafficLog* traffic = nullptr);

struct FlResult {
  aae::AaeModel global;
  std::vector<UeRoundLog> log;
  TrafficLog traffic;
};

FlResult run_fl(const aae::AaeModel& initial_global, std::span<UeClient> clients, const FlConfig& cfg);

// Columns: sbs,round,ue,layer,distance,alpha,reconstruction_loss,discriminator_loss,generator_loss
void write_round_log_csv(const std::filesystem::path& path, std::span<const UeRoundLog> log,
                         int sbs_id = 0);

}  // namespace cefmr::fl
