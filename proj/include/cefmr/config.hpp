#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cefmr/aae.hpp"
#include "cefmr/baselines.hpp"
#include "cefmr/cache_env.hpp"
#include "cefmr/dataset.hpp"
#include "cefmr/elastic_fl.hpp"
#include "cefmr/maddpg.hpp"
#include "cefmr/prediction.hpp"

namespace cefmr::config {

enum class DataSource { synthetic, movielens };
// Which AAE reconstructs a UE's test ratings for prediction: its
// personalized local model or the SBS's global model.
enum class ModelSource { local, global };

struct ExperimentConfig {
  DataSource source = DataSource::synthetic;
  std::filesystem::path dataset_path;  // directory with ratings.dat, users.dat, movies.dat
  std::size_t top_contents = 0;        // 0 keeps the whole catalog
  data::SyntheticConfig synthetic;
  data::PartitionConfig partition;

  aae::Architecture aae;
  fl::FlConfig fl = [] {
    fl::FlConfig f;
    f.rounds = 1000;
    return f;
  }();

  predict::PredictionConfig prediction = [] {
    predict::PredictionConfig p;
    p.popular_count = 0;  // resolves to 2C
    return p;
  }();
  ModelSource model_source = ModelSource::local;

  std::size_t capacity = 5;  // C
  env::CostParams costs;
  data::WorkloadConfig workload;

  maddpg::TrainConfig maddpg;
  int test_episodes = 100;  // E'
  int test_slots = 0;       // 0 uses maddpg.slots

  double epsilon = 0.1;
  bool cumulative_counts = true;

  baselines::PolicyKind scheme = baselines::PolicyKind::cefmr;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "runs/default";

  std::size_t popular_count() const;
  int slots_for_test() const { return test_slots > 0 ? test_slots : maddpg.slots; }
  // Throws ConfigError on any violated constraint, including C >= F_p.
  void validate() const;
};

struct KeyInfo {
  std::string key;
  std::string default_value;
  std::string description;
};

// Every accepted key with its default, in file order.
std::vector<KeyInfo> describe_keys();

// key = value lines; '#' starts a comment. Unknown keys, malformed values and
// duplicate keys are ConfigErrors naming the line. The result is validated.
ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_value(const ExperimentConfig& cfg, std::string_view key);

// All keys with their current values, F_p resolved.
std::vector<std::pair<std::string, std::string>> to_pairs(const ExperimentConfig& cfg);
std::string to_text(const ExperimentConfig& cfg);

}  // namespace cefmr::config
