#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cefmr/config.hpp"

namespace cefmr::harness {

namespace fs = std::filesystem;

// Seeds of the pipeline stages, all derived from one run seed.
struct StageSeeds {
  std::uint64_t data, partition, fl, model, workload, maddpg, test, baseline;
  static StageSeeds from(std::uint64_t run_seed);
};

struct PreparedData {
  data::RatingData data;
  std::vector<data::UeDataset> ues;
};

// Loads or synthesizes ratings, truncates the catalog and partitions users.
PreparedData ingest(const config::ExperimentConfig& cfg, std::uint64_t run_seed);

struct FlOutputs {
  std::vector<aae::AaeModel> globals;  // one per SBS
  std::vector<aae::AaeModel> locals;   // one per UE, in ingest order
  std::vector<std::vector<fl::UeRoundLog>> logs;  // per SBS
  std::vector<fl::TrafficLog> traffic;            // per SBS
};

// One federation per SBS over its UEs.
FlOutputs train_fl(const config::ExperimentConfig& cfg, const PreparedData& prepared, std::uint64_t run_seed);

// Per-UE prediction on the test split, merged per SBS into p_b.
std::vector<predict::PopularSet> predict_popular(const config::ExperimentConfig& cfg, const PreparedData& prepared,
                                                 const FlOutputs& models);

// p_b = the F_p highest-ranked catalog entries at every SBS. Used by schemes
// that never consult predictions; it only seeds the initial caches.
std::vector<predict::PopularSet> catalog_popular(const config::ExperimentConfig& cfg, const PreparedData& prepared);

// The caching task over the configured workload. Slot t of episode e draws
// the workload's slot e * T + t.
maddpg::CachingTask make_task(const config::ExperimentConfig& cfg, const PreparedData& prepared,
                              std::span<const predict::PopularSet> popular, std::uint64_t run_seed);

struct MetricsRecord {
  std::string scheme;
  std::uint64_t seed = 0;
  std::size_t capacity = 0;
  int n_sbs = 0;
  int episode = 0;
  double mean_cost = 0.0;    // total over SBSs, per slot
  double mean_reward = 0.0;  // R per slot
  double mean_ch = 0.0;
};

// Columns: scheme,seed,C,B,episode,mean_cost,mean_reward,mean_ch
void write_metrics_csv(const fs::path& path, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(const fs::path& path);

// Git blob hash of `content`: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_sha1(std::string_view content);

struct RunResult {
  std::vector<MetricsRecord> records;
  fs::path output_dir;
};

// Runs every configured seed end to end under cfg.output_dir/seed_<s>, then
// writes cfg.output_dir/metrics.csv and cfg.output_dir/manifest.json.
RunResult run_experiment(const config::ExperimentConfig& cfg);

// Re-runs the configuration stored in a manifest, optionally into another
// output directory.
RunResult rerun_manifest(const fs::path& manifest, const fs::path& output_dir = {});

enum class SweepAxis { cache_capacity, n_sbs };
SweepAxis sweep_axis_from_string(std::string_view name);
std::string_view to_string(SweepAxis a);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string scheme;
  std::size_t runs = 0;  // seeds aggregated
  double mean_cost = 0.0, std_cost = 0.0;
  double mean_reward = 0.0, std_reward = 0.0;
  double mean_ch = 0.0, std_ch = 0.0;
};

// One run per (value, scheme, seed); per-seed episode means are aggregated to
// mean and sample std across seeds.
std::vector<SweepRow> sweep(const config::ExperimentConfig& cfg, SweepAxis axis, std::span<const double> values,
                            std::span<const baselines::PolicyKind> schemes);

// Columns: axis,value,scheme,runs,mean_cost,std_cost,mean_reward,std_reward,mean_ch,std_ch
void write_sweep_csv(const fs::path& path, std::span<const SweepRow> rows);
std::vector<SweepRow> read_sweep_csv(const fs::path& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Long-format plot data: series,x,y
void write_series_csv(const fs::path& path, std::span<const Series> series);
void write_line_svg(const fs::path& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, std::span<const Series> series);

// Per-scheme curves of episode-averaged metrics (mean over seeds).
std::vector<Series> episode_series(std::span<const MetricsRecord> records, std::string_view metric);
// One series per scheme from a sweep.
std::vector<Series> sweep_series(std::span<const SweepRow> rows, std::string_view metric);

// Writes <stem>.csv and <stem>.svg for reward/cost/CH per episode and, when
// sweep rows are given, for cost and CH against the swept axis. Returns the
// written paths.
std::vector<fs::path> emit_plots(const fs::path& dir, std::span<const MetricsRecord> records,
                                 std::span<const SweepRow> sweep_rows = {});

// Training curves (reward and critic losses against episode) from a MADDPG
// episode log.
std::vector<fs::path> emit_training_plots(const fs::path& dir, std::span<const maddpg::EpisodeLog> log);

}  // namespace cefmr::harness
