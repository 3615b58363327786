#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cefmr/error.hpp"
#include "cefmr/prediction.hpp"
#include "support.hpp"

using namespace cefmr;
using namespace cefmr::predict;

namespace {

data::RatingMatrix matrix(std::vector<UserId> users, std::vector<ContentId> contents,
                          std::initializer_list<std::initializer_list<double>> values) {
  data::RatingMatrix m;
  m.user_index = std::move(users);
  m.content_index = std::move(contents);
  m.values.resize(static_cast<Eigen::Index>(m.user_index.size()), static_cast<Eigen::Index>(m.content_index.size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m.values(r, c++) = v;
    ++r;
  }
  return m;
}

MergedProfile profile(std::vector<UserId> users, Eigen::MatrixXd rows) {
  return {std::move(users), std::move(rows)};
}

aae::AaeModel small_model(std::size_t catalog, std::uint64_t seed) {
  aae::Architecture a;
  a.catalog_size = catalog;
  a.hidden = 16;
  a.latent = 4;
  a.discriminator_hidden = 8;
  return aae::make_model(a, seed);
}

}  // namespace

TEST_CASE("reconstruct_ratings shapes and range") {
  auto model = small_model(3, 1);
  auto empty = matrix({}, {1, 2, 3}, {});
  CHECK(reconstruct_ratings(model, empty).rows() == 0);
  auto m = matrix({4, 5}, {1, 2, 3}, {{1, 0, 0.5}, {0, 0.25, 0}});
  auto r = reconstruct_ratings(model, m);
  CHECK(r.user_index == m.user_index);
  CHECK(r.content_index == m.content_index);
  CHECK((r.values.array() >= 0.0).all());
  CHECK((r.values.array() <= 1.0).all());
  auto wrong = matrix({4}, {1, 2}, {{1, 0}});
  CHECK_THROWS_AS(reconstruct_ratings(model, wrong), ShapeError);
}

TEST_CASE("trained reconstruction densifies the ratings") {
  data::SyntheticConfig s;
  s.users = 60;
  s.contents = 20;
  s.ratings_per_user = 5;
  auto d = data::synthesize(s);
  data::PartitionConfig pc;
  pc.n_sbs = 1;
  pc.ues_per_sbs = 1;
  pc.users_per_ue = 60;
  auto ue = data::partition(d, pc)[0];
  auto train = data::build_rating_matrix(ue, data::Split::train, d.catalog);
  auto model = small_model(20, 3);
  aae::LocalTrainConfig cfg;
  cfg.iterations = 100;
  aae::local_train(model, train.values, cfg, 5);
  auto test = data::build_rating_matrix(ue, data::Split::test, d.catalog);
  auto r = reconstruct_ratings(model, test);
  CHECK((r.values.array() > 0.01).count() >= (test.values.array() != 0.0).count());
}

TEST_CASE("active users") {
  std::vector<UserId> ids;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(10, 10);
  for (int u = 0; u < 10; ++u) {
    ids.push_back(u + 1);
    for (int c = 0; c <= u % 7; ++c) v(u, c) = 0.5;
  }
  data::RatingMatrix m{ids, std::vector<ContentId>(10), v};
  CHECK(select_active_users(m, 1).size() == 10);

  auto top = select_active_users(m, 5);
  REQUIRE(top.size() == 2);
  std::vector<std::pair<long, UserId>> oracle;
  for (int u = 0; u < 10; ++u) oracle.push_back({-(v.row(u).array() != 0.0).count(), ids[u]});
  std::sort(oracle.begin(), oracle.end());
  CHECK(top[0] == oracle[0].second);
  CHECK(top[1] == oracle[1].second);

  auto tie = matrix({9, 3, 5}, {1, 2}, {{1, 0}, {0, 1}, {0, 0}});
  CHECK(select_active_users(tie, 3) == std::vector<UserId>{3});
  CHECK_THROWS_AS(select_active_users(matrix({}, {1}, {}), 5), ContractError);
}

TEST_CASE("cosine similarity examples") {
  Eigen::Vector3d a(0.3, 0.1, 0.7);
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == 0.0);
  CHECK(cosine_similarity(Eigen::Vector3d(1, 1, 0), Eigen::Vector3d(1, 0, 1)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cosine_similarity(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)) == 0.0);
  CHECK(cosine_similarity(Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)) == doctest::Approx(-1.0));
}

TEST_CASE("merged profile appends demographics in fixed order") {
  auto r = matrix({1, 2}, {10, 20}, {{0.1, 0.2}, {0.3, 0.4}});
  std::map<UserId, data::Demographics> demo{{1, {1.0, 0.5, 0.25}}, {2, {0.0, 0.75, 0.1}}};
  auto p = merge_profile(r, demo);
  CHECK(p.rows.rows() == 2);
  CHECK(p.rows.cols() == 5);
  CHECK(p.rows(0, 2) == 1.0);
  CHECK(p.rows(0, 3) == 0.5);
  CHECK(p.rows(1, 4) == 0.1);
}

TEST_CASE("k nearest neighbors") {
  Eigen::MatrixXd rows(4, 3);
  rows << 1, 2, 3, 0, 1, 0, 1, 2, 3, 5, 0, 0;
  auto p = profile({1, 2, 3, 4}, rows);
  CHECK(k_nearest_neighbors(p, 1, 1) == std::vector<UserId>{3});

  auto ortho = profile({5, 2, 8, 4}, Eigen::MatrixXd::Identity(4, 4));
  CHECK(k_nearest_neighbors(ortho, 8, 2) == std::vector<UserId>{2, 4});

  CHECK_THROWS_AS(k_nearest_neighbors(p, 1, 4), ConfigError);
}

TEST_CASE("k nearest neighbors matches an exhaustive sort") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd rows = Eigen::MatrixXd::NullaryExpr(5, 4, [&] { return u(rng); });
  std::vector<UserId> ids{11, 12, 13, 14, 15};
  auto p = profile(ids, rows);
  for (std::size_t a = 0; a < ids.size(); ++a) {
    std::vector<std::pair<double, UserId>> all;
    for (std::size_t b = 0; b < ids.size(); ++b) {
      if (a == b) continue;
      const double sim = rows.row(static_cast<Eigen::Index>(a)).dot(rows.row(static_cast<Eigen::Index>(b))) /
                         (rows.row(static_cast<Eigen::Index>(a)).norm() * rows.row(static_cast<Eigen::Index>(b)).norm());
      all.push_back({-sim, ids[b]});
    }
    std::sort(all.begin(), all.end());
    auto got = k_nearest_neighbors(p, ids[a], 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(got[k] == all[k].second);
  }
}

TEST_CASE("interested content scoring") {
  auto orig = matrix({1, 2, 3, 4}, {5, 7, 9}, {{0, 1, 0}, {0.5, 0.25, 0}, {0, 0.75, 0}, {1, 0, 0}});
  CHECK(score_interested_contents(orig, {}).empty());
  std::vector<UserId> nb{1, 2, 3};
  auto t = score_interested_contents(orig, nb);
  CHECK(t.at(7) == 3);
  CHECK(t.at(5) == 1);
  CHECK((!t.contains(9) || t.at(9) == 0));
  std::vector<UserId> twice{4, 4};
  CHECK(score_interested_contents(orig, twice).at(5) == 2);
}

TEST_CASE("top F_p contents") {
  PopularityTable t{{1, 5}, {2, 9}, {3, 7}};
  std::vector<ContentId> fallback{3, 8, 2, 6, 1};
  CHECK(top_fp_contents(t, 2, fallback) == std::vector<ContentId>{2, 3});
  auto padded = top_fp_contents(t, 5, fallback);
  CHECK(padded == std::vector<ContentId>{2, 3, 1, 8, 6});

  PopularityTable six{{10, 2}, {11, 5}, {12, 2}, {13, 9}, {14, 1}, {15, 5}};
  std::vector<std::pair<long, ContentId>> oracle;
  for (auto [id, n] : six) oracle.push_back({-static_cast<long>(n), id});
  std::sort(oracle.begin(), oracle.end());
  auto top3 = top_fp_contents(six, 3, {});
  for (std::size_t k = 0; k < 3; ++k) CHECK(top3[k] == oracle[k].second);
}

TEST_CASE("fallback order ranks by rating count then catalog order") {
  auto orig = matrix({1, 2}, {30, 10, 20, 40}, {{0, 1, 1, 0}, {0, 0, 1, 0}});
  CHECK(fallback_order(orig) == std::vector<ContentId>{20, 10, 30, 40});
}

TEST_CASE("SBS merge of per-UE lists") {
  std::vector<std::vector<ContentId>> one{{4, 9, 2}};
  auto single = sbs_merge_popular(one, 3).ids;
  CHECK(std::set<ContentId>(single.begin(), single.end()) == std::set<ContentId>{4, 9, 2});

  std::vector<std::vector<ContentId>> disjoint{{8, 5, 6}, {1, 7, 3}};
  CHECK(sbs_merge_popular(disjoint, 3).ids == std::vector<ContentId>{1, 3, 5});

  std::vector<std::vector<ContentId>> overlap{{1, 2, 3, 4}, {3, 4, 5, 6}, {4, 6, 7, 1}};
  std::map<ContentId, std::size_t> votes;
  for (const auto& l : overlap)
    for (ContentId c : l) votes[c]++;
  std::vector<std::pair<long, ContentId>> oracle;
  for (auto [c, v] : votes) oracle.push_back({-static_cast<long>(v), c});
  std::sort(oracle.begin(), oracle.end());
  auto p = sbs_merge_popular(overlap, 4);
  REQUIRE(p.ids.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(p.ids[k] == oracle[k].second);
    CHECK(p.votes[k] == static_cast<std::size_t>(-oracle[k].first));
  }
}

TEST_CASE("popular sets json round-trip") {
  std::vector<PopularSet> sets{{{3, 1, 2}, {4, 2, 2}}, {{7, 8}, {1, 1}}};
  auto back = popular_sets_from_json(popular_sets_to_json(sets));
  REQUIRE(back.size() == 2);
  CHECK(back[0].ids == sets[0].ids);
  CHECK(back[1].votes == sets[1].votes);
  CHECK_THROWS_AS(popular_sets_from_json(nlohmann::json::parse(R"([{"ids":[1],"votes":[]}])")), SchemaError);
}

TEST_CASE("predicted sets beat random subsets on a Zipf workload") {
  const std::size_t fp = 10, n = 50;
  double predicted = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    data::SyntheticConfig s;
    s.users = 100;
    s.contents = n;
    s.seed = seed;
    auto d = data::synthesize(s);
    data::PartitionConfig pc;
    pc.n_sbs = 1;
    pc.ues_per_sbs = 2;
    pc.users_per_ue = 25;
    pc.seed = seed;
    std::vector<std::vector<ContentId>> lists;
    PredictionConfig cfg;
    cfg.popular_count = fp;
    for (const auto& ue : data::partition(d, pc)) {
      auto model = small_model(n, seed);
      aae::LocalTrainConfig lt;
      lt.iterations = 10;
      aae::local_train(model, data::build_rating_matrix(ue, data::Split::train, d.catalog).values, lt, seed);
      auto test = data::build_rating_matrix(ue, data::Split::test, d.catalog);
      lists.push_back(predict_ue(model, test, ue.demographics, cfg).interested);
    }
    auto p = sbs_merge_popular(lists, fp);
    std::set<ContentId> truth(d.catalog.ids().begin(), d.catalog.ids().begin() + fp);
    for (ContentId c : p.ids) predicted += truth.contains(c);
    for (ContentId c : p.ids) CHECK(d.catalog.contains(c));
  }
  const double random_expectation = static_cast<double>(fp * fp) / n;
  CHECK(predicted / 20.0 > random_expectation);
}

TEST_CASE("prediction is a pure function of its inputs") {
  data::SyntheticConfig s;
  s.users = 40;
  s.contents = 30;
  auto d = data::synthesize(s);
  data::PartitionConfig pc;
  pc.n_sbs = 1;
  pc.ues_per_sbs = 1;
  pc.users_per_ue = 30;
  auto ue = data::partition(d, pc)[0];
  auto model = small_model(30, 2);
  auto test = data::build_rating_matrix(ue, data::Split::test, d.catalog);
  PredictionConfig cfg;
  auto a = predict_ue(model, test, ue.demographics, cfg);
  auto b = predict_ue(model, test, ue.demographics, cfg);
  CHECK(a.interested == b.interested);
  CHECK(a.interested.size() == cfg.popular_count);
  CHECK(a.active_users.size() == 6);
}
