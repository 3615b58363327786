#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "cefmr/baselines.hpp"
#include "cefmr/error.hpp"

using namespace cefmr;
using namespace cefmr::baselines;

namespace {

std::vector<ContentId> ids(int n) {
  std::vector<ContentId> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), ContentId{1});
  return out;
}

maddpg::CachingTask small_task(int n_sbs) {
  maddpg::CachingTask t;
  t.capacity = 2;
  t.catalog_size = 12;
  t.topology = env::Topology::fully_connected(n_sbs);
  for (int b = 0; b < n_sbs; ++b) t.popular.push_back({1, 2, 3, 4});
  t.requests_per_slot = 5;
  t.requests = [n_sbs](int ep, int slot) {
    Rng rng(derive_seed(3, {static_cast<std::uint64_t>(ep), static_cast<std::uint64_t>(slot)}));
    std::uniform_int_distribution<ContentId> id(1, 12);
    std::vector<std::vector<ContentId>> out(static_cast<std::size_t>(n_sbs));
    for (auto& r : out)
      for (int k = 0; k < 5; ++k) r.push_back(id(rng));
    return out;
  };
  return t;
}

}  // namespace

TEST_CASE("policy names round-trip") {
  for (auto k : {PolicyKind::random, PolicyKind::c_eps_greedy, PolicyKind::thompson, PolicyKind::bsg,
                 PolicyKind::efnrl, PolicyKind::tfmadrl, PolicyKind::cefmr})
    CHECK(policy_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(policy_from_string("lru"), ConfigError);
}

TEST_CASE("thompson conjugate update") {
  BetaPosterior p(ids(3));
  CHECK(p.a(1) == 1.0);
  CHECK(p.b(1) == 1.0);
  std::vector<CacheObservation> obs{{2, 3.0, 1.0}};
  thompson_update(p, obs);
  CHECK(p.a(1) == 4.0);
  CHECK(p.b(1) == 2.0);
  CHECK(p.a(0) == 1.0);
  CHECK(p.b(2) == 1.0);
  CHECK(p.mean(1) == doctest::Approx(4.0 / 6.0));
  CHECK_THROWS_AS(p.observe(0, -1.0, 0.0), ContractError);
}

TEST_CASE("thompson favours a confident posterior") {
  BetaPosterior p(ids(4));
  p.set(2, 500.0, 1.0);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    auto c = thompson_policy(p, 1, rng);
    REQUIRE(c.size() == 1);
    CHECK(c[0] == 3);
  }
  auto two = thompson_policy(p, 2, rng);
  CHECK(std::set<ContentId>(two.begin(), two.end()).size() == 2);
}

TEST_CASE("bsg hand case") {
  // Means: 1 -> 0.8, 2 -> 0.5, 3 -> 0.6, 4 -> 0.2.
  BetaPosterior p(ids(4));
  p.set(0, 4, 1);
  p.set(1, 1, 1);
  p.set(2, 3, 2);
  p.set(3, 1, 4);
  // SBS 1 scores 10 * 0.8 = 8, SBS 0 scores 2 * 0.5 + 1 * 0.2 = 1.2.
  std::vector<std::map<ContentId, double>> profiles{{{2, 2.0}, {4, 1.0}}, {{1, 10.0}}};
  auto out = bsg_allocate(p, profiles, 2);
  CHECK(out[1] == std::vector<ContentId>{1, 3});
  CHECK(out[0] == std::vector<ContentId>{2, 4});
  CHECK_THROWS_AS(bsg_allocate(p, profiles, 3), ConfigError);
}

TEST_CASE("bsg update counts requests and penalizes silence") {
  BetaPosterior p(ids(3));
  bsg_update(p, {{1, 3.0}, {3, 1.0}});
  CHECK(p.a(0) == 4.0);
  CHECK(p.b(0) == 1.0);
  CHECK(p.a(1) == 1.0);
  CHECK(p.b(1) == 2.0);
  CHECK(p.a(2) == 2.0);
}

TEST_CASE("c-eps-greedy branch frequencies") {
  auto cat = ids(10);
  std::vector<double> counts{5, 9, 1, 0, 0, 7, 0, 0, 0, 0};
  Rng rng(6);
  const int n = 10000;
  int explored = 0;
  for (int i = 0; i < n; ++i) {
    auto c = c_eps_greedy(cat, counts, 3, 0.1, rng);
    if (c.explored) {
      ++explored;
    } else {
      CHECK(c.cache == std::vector<ContentId>{2, 6, 1});
    }
    CHECK(c.cache.size() == 3);
  }
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  CHECK(std::abs(explored - n * 0.1) <= 3 * sigma);
  CHECK_THROWS_AS(c_eps_greedy(cat, counts, 3, 1.5, rng), ConfigError);
}

TEST_CASE("random policy draws distinct catalog members") {
  auto cat = ids(8);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto c = random_policy(cat, 4, rng);
    CHECK(std::set<ContentId>(c.begin(), c.end()).size() == 4);
    for (auto id : c) CHECK((id >= 1 && id <= 8));
  }
  CHECK_THROWS_AS(random_policy(cat, 9, rng), ConfigError);
}

TEST_CASE("top by count breaks ties by id") {
  auto cat = ids(5);
  std::vector<double> counts{1, 3, 3, 0, 1};
  CHECK(top_by_count(cat, counts, 3) == std::vector<ContentId>{2, 3, 1});
  std::vector<double> short_counts{1, 2};
  CHECK_THROWS_AS(top_by_count(cat, short_counts, 1), ShapeError);
}

TEST_CASE("efnrl takes the most voted") {
  predict::PopularSet p{{9, 4, 7, 2}, {3, 5, 5, 1}};
  CHECK(efnrl_policy(p, 2) == std::vector<ContentId>{4, 7});
  CHECK(efnrl_policy(p, 3) == std::vector<ContentId>{4, 7, 9});
}

TEST_CASE("tfmadrl only switches off the elastic blend") {
  fl::FlConfig base;
  base.rounds = 17;
  base.seed = 9;
  auto t = tfmadrl_fl_config(base);
  CHECK_FALSE(t.elastic);
  t.elastic = true;
  CHECK(t.rounds == base.rounds);
  CHECK(t.seed == base.seed);
  CHECK(t.aggregation == base.aggregation);
  CHECK(t.normalize_by_ue_count == base.normalize_by_ue_count);
}

TEST_CASE("every scheme fills each cache to capacity") {
  auto task = small_task(2);
  SchemeParams sp;
  sp.catalog = ids(12);
  sp.n_sbs = 2;
  sp.capacity = 2;
  sp.seed = 3;
  std::vector<std::unique_ptr<CachePolicy>> schemes;
  schemes.push_back(make_random(sp));
  schemes.push_back(make_c_eps_greedy(sp));
  schemes.push_back(make_thompson(sp));
  schemes.push_back(make_bsg(sp));
  schemes.push_back(make_efnrl({{{1, 2, 3, 4}, {4, 3, 2, 1}}, {{5, 6, 7, 8}, {1, 1, 1, 1}}}, 2));
  for (auto& s : schemes) {
    auto r = evaluate(*s, task, 2, 10, 4);
    CHECK(r.log.size() == 2);
    CHECK(r.slots.size() == 2 * 10 * 2);
    auto state = env::reset(1, task.popular, task.capacity);
    for (const auto& c : s->place(state)) CHECK(c.size() == 2);
  }
  sp.capacity = 7;
  CHECK_THROWS_AS(make_bsg(sp), ConfigError);
}

TEST_CASE("evaluating trained actors matches the maddpg rollout") {
  auto task = small_task(2);
  maddpg::TrainConfig cfg;
  cfg.episodes = 2;
  cfg.slots = 8;
  cfg.minibatch = 4;
  cfg.shape.hidden = {8};
  auto trained = maddpg::train(task, cfg);
  auto direct = maddpg::test(task, trained.policy, 2, 6, 11);
  auto actor = make_actor_policy(trained.policy, task.catalog_size);
  auto via = evaluate(*actor, task, 2, 6, 11);
  REQUIRE(direct.log.size() == via.log.size());
  for (std::size_t i = 0; i < direct.log.size(); ++i) {
    CHECK(direct.log[i].mean_reward == via.log[i].mean_reward);
    CHECK(direct.log[i].mean_cost == via.log[i].mean_cost);
  }
}
