#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "cefmr/dataset.hpp"
#include "cefmr/error.hpp"
#include "support.hpp"

using namespace cefmr;
using namespace cefmr::data;

namespace {

struct MovieLensFiles {
  std::filesystem::path dir;
  std::filesystem::path ratings() const { return dir / "ratings.dat"; }
  std::filesystem::path users() const { return dir / "users.dat"; }
  std::filesystem::path movies() const { return dir / "movies.dat"; }
};

MovieLensFiles write_fixture(const std::string& name, const std::string& ratings) {
  MovieLensFiles f{testing::scratch_dir(name)};
  std::ofstream(f.movies()) << "1::Toy Story (1995)::Animation\n2::Jumanji (1995)::Adventure\n"
                               "3::Heat (1995)::Action\n";
  std::ofstream(f.users()) << "1::F::1::10::48067\n2::M::56::16::70072\n3::M::25::15::55117\n";
  std::ofstream(f.ratings()) << ratings;
  return f;
}

RatingData one_user(std::size_t n_interactions) {
  RatingData d;
  std::vector<ContentId> ids;
  for (std::size_t i = 0; i < n_interactions; ++i) ids.push_back(static_cast<ContentId>(i + 1));
  d.catalog = ContentCatalog(ids);
  for (std::size_t i = 0; i < n_interactions; ++i) {
    d.interactions.push_back({7, static_cast<ContentId>(i + 1), 0.5, static_cast<std::int64_t>(i)});
  }
  return d;
}

}  // namespace

TEST_CASE("star normalization") {
  CHECK(normalize_stars(5) == 1.0);
  CHECK(normalize_stars(1) == 0.0);
  double prev = -1.0;
  for (int s = 1; s <= 5; ++s) {
    CHECK(normalize_stars(s) > prev);
    prev = normalize_stars(s);
  }
}

TEST_CASE("load_movielens parses, normalizes and orders") {
  auto f = write_fixture("ml_ok", "2::3::5::200\n1::2::1::300\n1::1::4::100\n");
  auto d = load_movielens(f.ratings(), f.users(), f.movies());
  CHECK(d.catalog.size() == 3);
  REQUIRE(d.interactions.size() == 3);
  CHECK(d.interactions[0].user_id == 1);
  CHECK(d.interactions[0].content_id == 1);
  CHECK(d.interactions[0].rating == 0.75);
  CHECK(d.interactions[1].rating == 0.0);
  CHECK(d.interactions[2].rating == 1.0);
  CHECK(d.users.at(1).gender == 0.0);
  CHECK(d.users.at(2).gender == 1.0);
  CHECK(d.users.at(2).occupation == doctest::Approx(16.0 / 20.0));
}

TEST_CASE("load_movielens errors") {
  auto f = write_fixture("ml_bad", "1::1::4::100\n1::2::x::100\n");
  try {
    load_movielens(f.ratings(), f.users(), f.movies());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  auto g = write_fixture("ml_stars", "1::1::6::100\n");
  CHECK_THROWS_AS(load_movielens(g.ratings(), g.users(), g.movies()), ParseError);
  CHECK_THROWS_AS(load_movielens(f.dir / "nope.dat", f.users(), f.movies()), IoError);
}

TEST_CASE("truncate_catalog keeps the most rated contents") {
  RatingData d;
  d.catalog = ContentCatalog({1, 2, 3, 4});
  for (UserId u = 1; u <= 3; ++u) d.interactions.push_back({u, 3, 0.5, 0});
  for (UserId u = 1; u <= 2; ++u) d.interactions.push_back({u, 4, 0.5, 1});
  for (UserId u = 1; u <= 2; ++u) d.interactions.push_back({u, 2, 0.5, 2});
  d.interactions.push_back({1, 1, 0.5, 3});
  auto t = truncate_catalog(d, 2);
  CHECK(t.catalog.ids() == std::vector<ContentId>{3, 2});
  for (const auto& it : t.interactions) CHECK(t.catalog.contains(it.content_id));
}

TEST_CASE("synthetic data is MovieLens shaped") {
  SyntheticConfig cfg;
  cfg.users = 60;
  cfg.contents = 30;
  cfg.ratings_per_user = 8;
  auto d = synthesize(cfg);
  CHECK(d.catalog.size() == 30);
  CHECK(d.interactions.size() == 60 * 8);
  CHECK(d.users.size() == 60);
  for (const auto& it : d.interactions) {
    CHECK(it.rating >= 0.0);
    CHECK(it.rating <= 1.0);
    CHECK(d.catalog.contains(it.content_id));
  }
  auto again = synthesize(cfg);
  CHECK(again.interactions.size() == d.interactions.size());
  CHECK(again.interactions.back().content_id == d.interactions.back().content_id);
}

TEST_CASE("partition is deterministic and a set partition") {
  SyntheticConfig s;
  s.users = 60;
  auto d = synthesize(s);
  PartitionConfig cfg;
  cfg.n_sbs = 2;
  cfg.ues_per_sbs = 1;
  cfg.users_per_ue = 10;
  cfg.seed = 42;
  auto a = partition(d, cfg);
  auto b = partition(d, cfg);
  REQUIRE(a.size() == 2);
  std::set<UserId> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].user_ids == b[i].user_ids);
    CHECK(a[i].sbs_id == static_cast<int>(i));
    for (UserId u : a[i].user_ids) CHECK(seen.insert(u).second);

    std::set<std::pair<UserId, ContentId>> train;
    for (const auto& it : a[i].train) train.insert({it.user_id, it.content_id});
    for (const auto& it : a[i].test) CHECK_FALSE(train.contains({it.user_id, it.content_id}));
    std::set<UserId> members(a[i].user_ids.begin(), a[i].user_ids.end());
    for (const auto& it : a[i].train) CHECK(members.contains(it.user_id));
    for (const auto& it : a[i].test) CHECK(members.contains(it.user_id));
  }
}

TEST_CASE("partition split uses the floor rule") {
  PartitionConfig cfg;
  cfg.n_sbs = 1;
  cfg.ues_per_sbs = 1;
  cfg.users_per_ue = 1;
  auto ues = partition(one_user(100), cfg);
  CHECK(ues[0].train.size() == 80);
  CHECK(ues[0].test.size() == 20);
  ues = partition(one_user(9), cfg);
  CHECK(ues[0].train.size() == 7);
}

TEST_CASE("partition rejects too few users") {
  PartitionConfig cfg;
  cfg.n_sbs = 1;
  cfg.ues_per_sbs = 1;
  cfg.users_per_ue = 2;
  CHECK_THROWS_AS(partition(one_user(5), cfg), ConfigError);
}

TEST_CASE("rating matrices") {
  ContentCatalog catalog({10, 20, 30});
  UeDataset ue;
  ue.user_ids = {1, 2};
  auto empty = build_rating_matrix(ue, Split::train, catalog);
  CHECK(empty.rows() == 2);
  CHECK(empty.cols() == 3);
  CHECK(empty.values.isZero());

  ue.train.push_back({2, 20, 1.0, 0});
  auto single = build_rating_matrix(ue, Split::train, catalog);
  CHECK(single.values(1, 1) == 1.0);
  CHECK(single.values.sum() == 1.0);

  ue.train.push_back({9, 20, 1.0, 0});
  CHECK_THROWS_AS(build_rating_matrix(ue, Split::train, catalog), SchemaError);
  ue.train.pop_back();
  ue.train.push_back({1, 99, 1.0, 0});
  CHECK_THROWS_AS(build_rating_matrix(ue, Split::train, catalog), SchemaError);
}

TEST_CASE("rating matrix row counts match the split") {
  SyntheticConfig s;
  s.users = 40;
  auto d = synthesize(s);
  PartitionConfig cfg;
  cfg.n_sbs = 1;
  cfg.ues_per_sbs = 1;
  cfg.users_per_ue = 20;
  auto ue = partition(d, cfg)[0];
  for (Split split : {Split::train, Split::test}) {
    auto m = build_rating_matrix(ue, split, d.catalog);
    const auto& src = split == Split::train ? ue.train : ue.test;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      std::size_t expected = 0;
      for (const auto& it : src) expected += it.user_id == m.user_index[r] && it.rating > 0.0;
      CHECK(static_cast<std::size_t>((m.values.row(static_cast<Eigen::Index>(r)).array() != 0.0).count()) ==
            expected);
    }
    CHECK((m.values.array() >= 0.0).all());
    CHECK((m.values.array() <= 1.0).all());
  }
}

TEST_CASE("sample_requests") {
  ContentCatalog catalog({1, 2, 3, 4, 5});
  UeDataset ue;
  ue.ue_id = 3;
  ue.user_ids = {1};
  ue.test = {{1, 2, 0.5, 0}, {1, 4, 0.0, 0}, {1, 5, 1.0, 0}};

  auto none = sample_requests(ue, 0, 0, RequestMode::zipf, catalog, 1.0, 1);
  CHECK(none.requests[0].empty());

  auto replay = sample_requests(ue, 4, 500, RequestMode::test_replay, catalog, 1.0, 9);
  for (ContentId c : replay.requests[0]) CHECK((c == 2 || c == 5));

  auto again = sample_requests(ue, 4, 500, RequestMode::test_replay, catalog, 1.0, 9);
  CHECK(again.requests == replay.requests);

  ue.test.clear();
  CHECK_THROWS_AS(sample_requests(ue, 0, 3, RequestMode::test_replay, catalog, 1.0, 1), DataError);
}

TEST_CASE("zipf with exponent 0 is uniform within 3 sigma") {
  std::vector<ContentId> ids{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  ContentCatalog catalog(ids);
  UeDataset ue;
  const std::size_t n = 100000;
  auto batch = sample_requests(ue, 0, n, RequestMode::zipf, catalog, 0.0, 17);
  std::map<ContentId, std::size_t> counts;
  for (ContentId c : batch.requests[0]) counts[c]++;
  const double p = 0.1;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (ContentId c : ids) CHECK(std::abs(static_cast<double>(counts[c]) - n * p) <= 3 * sigma);
}

TEST_CASE("zipf probabilities follow the rank law") {
  ContentCatalog catalog({7, 3, 9});
  ZipfSampler z(catalog, 1.0);
  const double h = 1.0 + 0.5 + 1.0 / 3.0;
  CHECK(z.probabilities()[0] == doctest::Approx(1.0 / h));
  CHECK(z.probabilities()[2] == doctest::Approx(1.0 / 3.0 / h));
}

TEST_CASE("workload streams stay inside the catalog and are reproducible") {
  SyntheticConfig s;
  s.users = 40;
  auto d = synthesize(s);
  PartitionConfig pc;
  pc.users_per_ue = 5;
  auto ues = partition(d, pc);
  for (RequestMode mode : {RequestMode::zipf, RequestMode::test_replay}) {
    WorkloadConfig wc;
    wc.mode = mode;
    wc.requests_per_ue = 7;
    Workload w(ues, d.catalog, wc);
    CHECK(w.n_sbs() == 2);
    auto a = w.per_sbs(12);
    CHECK(a == w.per_sbs(12));
    CHECK(a[0].size() == 14);
    for (const auto& reqs : a)
      for (ContentId c : reqs) CHECK(d.catalog.contains(c));
    CHECK(w.with_seed(99).per_sbs(12) != a);
  }
}
