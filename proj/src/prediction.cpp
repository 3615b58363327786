#include "cefmr/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cefmr/error.hpp"

namespace cefmr::predict {

void PredictionConfig::validate() const {
  if (active_divisor < 1) throw ConfigError("prediction: m must be >= 1");
  if (neighbors < 1) throw ConfigError("prediction: K must be >= 1");
  if (popular_count < 1) throw ConfigError("prediction: F_p must be >= 1");
}

ReconstructedRatings reconstruct_ratings(const aae::AaeModel& model, const data::RatingMatrix& test) {
  if (test.cols() != model.catalog_size()) {
    throw ShapeError("reconstruct_ratings: matrix has " + std::to_string(test.cols()) +
                     " contents, model expects " + std::to_string(model.catalog_size()));
  }
  ReconstructedRatings out;
  out.user_index = test.user_index;
  out.content_index = test.content_index;
  if (test.rows() == 0) {
    out.values = Eigen::MatrixXd::Zero(0, static_cast<Eigen::Index>(test.cols()));
    return out;
  }
  out.values = aae::reconstruct_batch(model, test.values.transpose()).transpose();
  return out;
}

std::vector<UserId> select_active_users(const data::RatingMatrix& matrix, std::size_t m) {
  if (m < 1) throw ConfigError("select_active_users: m must be >= 1");
  if (matrix.rows() == 0) throw ContractError("select_active_users: empty matrix");
  std::vector<std::pair<std::size_t, UserId>> ranked;
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    const auto nonzero = static_cast<std::size_t>(
        (matrix.values.row(static_cast<Eigen::Index>(r)).array() != 0.0).count());
    ranked.emplace_back(nonzero, matrix.user_index[r]);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const std::size_t keep = (matrix.rows() + m - 1) / m;
  std::vector<UserId> out;
  for (std::size_t i = 0; i < keep; ++i) out.push_back(ranked[i].second);
  return out;
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& u,
                         const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != v.size()) throw ShapeError("cosine_similarity: length mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

MergedProfile merge_profile(const ReconstructedRatings& reconstructed,
                            const std::map<UserId, data::Demographics>& demographics) {
  MergedProfile p;
  p.user_index = reconstructed.user_index;
  const auto n_cols = static_cast<Eigen::Index>(reconstructed.cols() + data::Demographics::kColumns);
  p.rows.resize(static_cast<Eigen::Index>(reconstructed.rows()), n_cols);
  for (std::size_t r = 0; r < reconstructed.rows(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    p.rows.row(row).head(reconstructed.values.cols()) = reconstructed.values.row(row);
    auto it = demographics.find(reconstructed.user_index[r]);
    const data::Demographics d = it == demographics.end() ? data::Demographics{} : it->second;
    p.rows(row, n_cols - 3) = d.gender;
    p.rows(row, n_cols - 2) = d.age;
    p.rows(row, n_cols - 1) = d.occupation;
  }
  return p;
}

std::vector<UserId> k_nearest_neighbors(const MergedProfile& profile, UserId active_user,
                                        std::size_t k) {
  const std::size_t n = profile.user_index.size();
  if (k >= n) {
    throw ConfigError("k_nearest_neighbors: K=" + std::to_string(k) + " needs more than " +
                      std::to_string(n) + " users");
  }
  auto self = std::find(profile.user_index.begin(), profile.user_index.end(), active_user);
  if (self == profile.user_index.end()) throw ContractError("k_nearest_neighbors: unknown active user");
  const auto self_row = static_cast<Eigen::Index>(self - profile.user_index.begin());

  std::vector<std::pair<double, UserId>> scored;
  for (std::size_t r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(r) == self_row) continue;
    scored.emplace_back(cosine_similarity(profile.rows.row(self_row).transpose(),
                                          profile.rows.row(static_cast<Eigen::Index>(r)).transpose()),
                        profile.user_index[r]);
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<UserId> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

PopularityTable score_interested_contents(const data::RatingMatrix& original,
                                          std::span<const UserId> neighbors) {
  PopularityTable table;
  for (UserId u : neighbors) {
    auto it = std::find(original.user_index.begin(), original.user_index.end(), u);
    if (it == original.user_index.end()) throw ContractError("score_interested_contents: unknown user");
    const auto row = static_cast<Eigen::Index>(it - original.user_index.begin());
    for (Eigen::Index c = 0; c < original.values.cols(); ++c) {
      if (original.values(row, c) != 0.0) ++table[original.content_index[static_cast<std::size_t>(c)]];
    }
  }
  return table;
}

std::vector<ContentId> fallback_order(const data::RatingMatrix& original) {
  std::vector<std::pair<std::size_t, ContentId>> rated;
  std::vector<ContentId> unrated;
  for (std::size_t c = 0; c < original.cols(); ++c) {
    const auto count = static_cast<std::size_t>(
        (original.values.col(static_cast<Eigen::Index>(c)).array() != 0.0).count());
    if (count > 0) {
      rated.emplace_back(count, original.content_index[c]);
    } else {
      unrated.push_back(original.content_index[c]);
    }
  }
  std::sort(rated.begin(), rated.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<ContentId> out;
  for (const auto& [_, id] : rated) out.push_back(id);
  out.insert(out.end(), unrated.begin(), unrated.end());
  return out;
}

std::vector<ContentId> top_fp_contents(const PopularityTable& table, std::size_t fp,
                                       std::span<const ContentId> fallback) {
  std::vector<std::pair<std::size_t, ContentId>> ranked;
  for (const auto& [id, count] : table) {
    if (count > 0) ranked.emplace_back(count, id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<ContentId> out;
  std::set<ContentId> taken;
  for (const auto& [_, id] : ranked) {
    if (out.size() == fp) break;
    out.push_back(id);
    taken.insert(id);
  }
  for (ContentId id : fallback) {
    if (out.size() == fp) break;
    if (taken.insert(id).second) out.push_back(id);
  }
  if (out.size() != fp) {
    throw ConfigError("top_fp_contents: cannot fill " + std::to_string(fp) +
                      " slots; catalog too small");
  }
  return out;
}

PopularSet sbs_merge_popular(std::span<const std::vector<ContentId>> per_ue_lists, std::size_t fp) {
  std::map<ContentId, std::size_t> votes;
  for (const auto& list : per_ue_lists) {
    for (ContentId id : list) ++votes[id];
  }
  std::vector<std::pair<std::size_t, ContentId>> ranked;
  for (const auto& [id, v] : votes) ranked.emplace_back(v, id);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (ranked.size() < fp) {
    throw ContractError("sbs_merge_popular: only " + std::to_string(ranked.size()) +
                        " distinct candidates for F_p=" + std::to_string(fp));
  }
  PopularSet out;
  for (std::size_t i = 0; i < fp; ++i) {
    out.ids.push_back(ranked[i].second);
    out.votes.push_back(ranked[i].first);
  }
  return out;
}

UePrediction predict_ue(const aae::AaeModel& model, const data::RatingMatrix& test,
                        const std::map<UserId, data::Demographics>& demographics,
                        const PredictionConfig& cfg) {
  cfg.validate();
  UePrediction out;
  const auto reconstructed = reconstruct_ratings(model, test);
  const auto profile = merge_profile(reconstructed, demographics);
  out.active_users = select_active_users(test, cfg.active_divisor);
  const std::size_t k = std::min(cfg.neighbors, test.rows() - 1);
  std::vector<UserId> neighbor_rows;
  if (k > 0) {
    for (UserId u : out.active_users) {
      const auto nn = k_nearest_neighbors(profile, u, k);
      neighbor_rows.insert(neighbor_rows.end(), nn.begin(), nn.end());
    }
  }
  out.table = score_interested_contents(test, neighbor_rows);
  const auto fallback = fallback_order(test);
  out.interested = top_fp_contents(out.table, cfg.popular_count, fallback);
  return out;
}

nlohmann::json popular_sets_to_json(std::span<const PopularSet> sets) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t b = 0; b < sets.size(); ++b) {
    out.push_back({{"sbs", b}, {"popular", sets[b].ids}, {"votes", sets[b].votes}});
  }
  return out;
}

std::vector<PopularSet> popular_sets_from_json(const nlohmann::json& j) {
  std::vector<PopularSet> out;
  try {
    for (const auto& entry : j) {
      PopularSet s;
      s.ids = entry.at("popular").get<std::vector<ContentId>>();
      s.votes = entry.at("votes").get<std::vector<std::size_t>>();
      if (s.ids.size() != s.votes.size()) throw SchemaError("popular set: ids/votes length mismatch");
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("popular sets json: ") + e.what());
  }
  return out;
}

}  // namespace cefmr::predict
