#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <map>
#include <span>
#include <vector>

#include "cefmr/aae.hpp"
#include "cefmr/dataset.hpp"

namespace cefmr::predict {

using data::ContentId;
using data::UserId;

struct PredictionConfig {
  std::size_t active_divisor = 5;  // m: the top 1/m of users by rating count are active
  std::size_t neighbors = 10;      // K
  std::size_t popular_count = 10;  // F_p

  void validate() const;
};

// Reconstructed ratings share the RatingMatrix indexing.
using ReconstructedRatings = data::RatingMatrix;

// Rows are [reconstructed ratings | gender, age, occupation].
struct MergedProfile {
  std::vector<UserId> user_index;
  Eigen::MatrixXd rows;
};

using PopularityTable = std::map<ContentId, std::size_t>;

ReconstructedRatings reconstruct_ratings(const aae::AaeModel& model, const data::RatingMatrix& test);

// Top ceil(rows / m) users by nonzero-rating count; ties by ascending user id.
std::vector<UserId> select_active_users(const data::RatingMatrix& matrix, std::size_t m);

// Zero when either vector is all zeros.
double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& u,
                         const Eigen::Ref<const Eigen::VectorXd>& v);

MergedProfile merge_profile(const ReconstructedRatings& reconstructed,
                            const std::map<UserId, data::Demographics>& demographics);

// Top-K users by similarity to `active_user`, excluding itself; ties by
// ascending user id.
std::vector<UserId> k_nearest_neighbors(const MergedProfile& profile, UserId active_user,
                                        std::size_t k);

// Counts, per content, the listed neighbor rows of the ORIGINAL matrix that
// rate it nonzero. A neighbor listed twice (shared by two active users) is
// counted twice.
PopularityTable score_interested_contents(const data::RatingMatrix& original,
                                          std::span<const UserId> neighbors);

// Contents ordered by nonzero-rating count in `original`, ties by ascending
// id, followed by the rest of the catalog in catalog order.
std::vector<ContentId> fallback_order(const data::RatingMatrix& original);

// Top F_p by count (ties ascending id), padded from `fallback` to exactly F_p.
std::vector<ContentId> top_fp_contents(const PopularityTable& table, std::size_t fp,
                                       std::span<const ContentId> fallback);

struct PopularSet {
  std::vector<ContentId> ids;     // p_b, most voted first
  std::vector<std::size_t> votes; // parallel to ids
};

// One vote per appearance; top F_p by vote, ties ascending id.
PopularSet sbs_merge_popular(std::span<const std::vector<ContentId>> per_ue_lists, std::size_t fp);

struct UePrediction {
  std::vector<UserId> active_users;
  PopularityTable table;
  std::vector<ContentId> interested;  // length F_p
};

// The full per-UE pipeline: reconstruct, select active users, K nearest
// neighbors on the merged profile, count interested contents, take top F_p.
UePrediction predict_ue(const aae::AaeModel& model, const data::RatingMatrix& test,
                        const std::map<UserId, data::Demographics>& demographics,
                        const PredictionConfig& cfg);

nlohmann::json popular_sets_to_json(std::span<const PopularSet> sets);
std::vector<PopularSet> popular_sets_from_json(const nlohmann::json& j);

}  // namespace cefmr::predict
