#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cefmr::data {

using ContentId = std::int64_t;
using UserId = std::int64_t;

// Content ids in a fixed order. For truncated or synthetic catalogs the order
// is popularity rank (position 0 = most popular), which is what the Zipf
// request mode samples against.
class ContentCatalog {
 public:
  ContentCatalog() = default;
  explicit ContentCatalog(std::vector<ContentId> ids);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<ContentId>& ids() const { return ids_; }
  ContentId at(std::size_t rank) const { return ids_.at(rank); }
  bool contains(ContentId id) const { return index_.contains(id); }
  // Throws SchemaError for unknown ids.
  std::size_t index_of(ContentId id) const;

 private:
  std::vector<ContentId> ids_;
  std::unordered_map<ContentId, std::size_t> index_;
};

struct Interaction {
  UserId user_id = 0;
  ContentId content_id = 0;
  double rating = 0.0;  // normalized to [0, 1]
  std::int64_t timestamp = 0;
};

// Fixed column order: gender (F=0, M=1), age (code / 56), occupation (code / 20).
struct Demographics {
  double gender = 0.0;
  double age = 0.0;
  double occupation = 0.0;

  static constexpr std::size_t kColumns = 3;
};

struct RatingData {
  ContentCatalog catalog;
  std::vector<Interaction> interactions;  // ordered by (user_id, timestamp)
  std::map<UserId, Demographics> users;
};

double normalize_stars(double stars);

// Reads the MovieLens 1M "::"-delimited ratings.dat / users.dat / movies.dat.
RatingData load_movielens(const std::filesystem::path& ratings_path,
                          const std::filesystem::path& users_path,
                          const std::filesystem::path& movies_path);

// Keeps the `top_n` most-rated contents (ties by ascending id) and drops
// interactions outside them. The resulting catalog is ordered by rating count.
RatingData truncate_catalog(const RatingData& data, std::size_t top_n);

struct SyntheticConfig {
  std::size_t users = 400;
  std::size_t contents = 50;
  std::size_t ratings_per_user = 15;
  double zipf_exponent = 1.0;
  std::size_t taste_clusters = 4;
  std::uint64_t seed = 1;
};

// MovieLens-shaped synthetic data: each user rates `ratings_per_user` distinct
// contents drawn from a Zipf popularity law over the catalog, with star
// ratings that depend on the user's taste cluster.
RatingData synthesize(const SyntheticConfig& cfg);

struct UeDataset {
  int ue_id = 0;
  int sbs_id = 0;
  std::vector<UserId> user_ids;
  std::vector<Interaction> train;
  std::vector<Interaction> test;
  std::map<UserId, Demographics> demographics;
};

struct PartitionConfig {
  int n_sbs = 2;
  int ues_per_sbs = 2;
  std::size_t users_per_ue = 20;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
};

// Disjoint random assignment of users to UEs (UE ids are sbs * ues_per_sbs +
// local index). Each UE's interactions are shuffled and the first
// floor(train_fraction * n) become the training split.
std::vector<UeDataset> partition(const RatingData& data, const PartitionConfig& cfg);

nlohmann::json partition_manifest(std::span<const UeDataset> ues);

enum class Split { train, test };

struct RatingMatrix {
  std::vector<UserId> user_index;
  std::vector<ContentId> content_index;
  Eigen::MatrixXd values;  // users x contents, 0 = unrated

  std::size_t rows() const { return user_index.size(); }
  std::size_t cols() const { return content_index.size(); }
};

RatingMatrix build_rating_matrix(const UeDataset& ue, Split split, const ContentCatalog& catalog);

enum class RequestMode { test_replay, zipf };

struct RequestBatch {
  std::int64_t slot = 0;
  std::vector<int> ue_ids;
  std::vector<std::vector<ContentId>> requests;  // one list per entry of ue_ids
};

// Draws ids with probability proportional to (rank + 1)^(-s) over the
// catalog order.
class ZipfSampler {
 public:
  ZipfSampler(const ContentCatalog& catalog, double exponent);
  template <class Gen>
  ContentId operator()(Gen& rng) const {
    return ids_[dist_(rng)];
  }
  const std::vector<double>& probabilities() const { return probs_; }

 private:
  std::vector<ContentId> ids_;
  std::vector<double> probs_;
  mutable std::discrete_distribution<std::size_t> dist_;
};

// Deterministic per (ue, slot, seed).
RequestBatch sample_requests(const UeDataset& ue, std::int64_t slot, std::size_t n_requests,
                             RequestMode mode, const ContentCatalog& catalog,
                             double zipf_exponent, std::uint64_t seed);

struct WorkloadConfig {
  RequestMode mode = RequestMode::zipf;
  std::size_t requests_per_ue = 20;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 1;
};

// Per-slot request generator for every SBS. Holds only what request
// generation needs from each UE (its test-split content set), so the
// environment never sees raw ratings.
class Workload {
 public:
  Workload(std::span<const UeDataset> ues, const ContentCatalog& catalog, WorkloadConfig cfg);

  int n_sbs() const { return n_sbs_; }
  const WorkloadConfig& config() const { return cfg_; }
  // Concatenated requests of all UEs attached to each SBS.
  std::vector<std::vector<ContentId>> per_sbs(std::int64_t slot) const;
  // Same workload with an independent request stream.
  Workload with_seed(std::uint64_t seed) const;

 private:
  struct UeSource {
    int ue_id;
    int sbs_id;
    std::vector<ContentId> replay_pool;
  };
  std::vector<UeSource> sources_;
  ZipfSampler zipf_;
  WorkloadConfig cfg_;
  int n_sbs_ = 0;
};

}  // namespace cefmr::data
