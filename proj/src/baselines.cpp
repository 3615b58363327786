#include "cefmr/baselines.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>

#include "cefmr/error.hpp"

namespace cefmr::baselines {
namespace {

constexpr std::array<std::pair<PolicyKind, std::string_view>, 7> kNames{{
    {PolicyKind::random, "random"},
    {PolicyKind::c_eps_greedy, "c_eps_greedy"},
    {PolicyKind::thompson, "thompson"},
    {PolicyKind::bsg, "bsg"},
    {PolicyKind::efnrl, "efnrl"},
    {PolicyKind::tfmadrl, "tfmadrl"},
    {PolicyKind::cefmr, "cefmr"},
}};

void check_capacity(std::size_t catalog, std::size_t capacity) {
  if (capacity == 0 || capacity > catalog) {
    throw ConfigError("capacity " + std::to_string(capacity) + " outside [1, " + std::to_string(catalog) + "]");
  }
}

// Indices of the C largest values, ties by ascending id.
std::vector<ContentId> top_c(std::span<const ContentId> ids, std::span<const double> values, std::size_t capacity) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(capacity), order.end(),
                    [&](std::size_t x, std::size_t y) {
                      if (values[x] != values[y]) return values[x] > values[y];
                      return ids[x] < ids[y];
                    });
  std::vector<ContentId> out;
  for (std::size_t i = 0; i < capacity; ++i) out.push_back(ids[order[i]]);
  return out;
}

std::map<ContentId, double> count_requests(const std::vector<ContentId>& requests) {
  std::map<ContentId, double> c;
  for (ContentId id : requests) c[id] += 1.0;
  return c;
}

}  // namespace

std::string_view to_string(PolicyKind k) {
  for (const auto& [kind, name] : kNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

PolicyKind policy_from_string(std::string_view name) {
  for (const auto& [kind, n] : kNames) {
    if (n == name) return kind;
  }
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

BetaPosterior::BetaPosterior(std::vector<ContentId> ids) : ids_(std::move(ids)) {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw ConfigError("posterior: duplicate content id");
  }
  a_.assign(ids_.size(), 1.0);
  b_.assign(ids_.size(), 1.0);
}

std::size_t BetaPosterior::index_of(ContentId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ContractError("posterior: unknown content " + std::to_string(id));
  return it->second;
}

void BetaPosterior::set(std::size_t i, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw ContractError("posterior: parameters must be positive");
  a_.at(i) = a;
  b_.at(i) = b;
}

void BetaPosterior::observe(std::size_t i, double successes, double failures) {
  if (successes < 0.0 || failures < 0.0) throw ContractError("posterior: negative pseudo-count");
  a_.at(i) += successes;
  b_.at(i) += failures;
}

std::vector<ContentId> random_policy(std::span<const ContentId> catalog, std::size_t capacity, Rng& rng) {
  check_capacity(catalog.size(), capacity);
  std::vector<ContentId> out;
  std::sample(catalog.begin(), catalog.end(), std::back_inserter(out), capacity, rng);
  return out;
}

std::vector<ContentId> top_by_count(std::span<const ContentId> catalog, std::span<const double> counts,
                                    std::size_t capacity) {
  if (counts.size() != catalog.size()) throw ShapeError("top_by_count: counts and catalog differ in length");
  check_capacity(catalog.size(), capacity);
  return top_c(catalog, counts, capacity);
}

EpsGreedyChoice c_eps_greedy(std::span<const ContentId> catalog, std::span<const double> counts,
                             std::size_t capacity, double eps, Rng& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  EpsGreedyChoice out;
  out.explored = coin(rng) < eps;
  out.cache = out.explored ? random_policy(catalog, capacity, rng) : top_by_count(catalog, counts, capacity);
  return out;
}

std::vector<ContentId> thompson_policy(const BetaPosterior& posterior, std::size_t capacity, Rng& rng) {
  check_capacity(posterior.size(), capacity);
  std::vector<double> draws(posterior.size());
  for (std::size_t i = 0; i < posterior.size(); ++i) {
    // Beta via two gammas.
    std::gamma_distribution<double> ga(posterior.a(i), 1.0);
    std::gamma_distribution<double> gb(posterior.b(i), 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    draws[i] = x / (x + y);
  }
  return top_c(posterior.ids(), draws, capacity);
}

void thompson_update(BetaPosterior& posterior, std::span<const CacheObservation> observed) {
  for (const auto& o : observed) posterior.observe(posterior.index_of(o.content), o.hits, o.misses);
}

std::vector<std::vector<ContentId>> bsg_allocate(const BetaPosterior& posterior,
                                                 std::span<const std::map<ContentId, double>> profiles,
                                                 std::size_t capacity) {
  const std::size_t n_sbs = profiles.size();
  if (n_sbs == 0) throw ConfigError("bsg: no SBSs");
  if (capacity == 0 || n_sbs * capacity > posterior.size()) {
    throw ConfigError("bsg: B * C exceeds the catalog");
  }
  std::vector<double> means(posterior.size());
  for (std::size_t i = 0; i < posterior.size(); ++i) means[i] = posterior.mean(i);

  std::vector<double> sbs_score(n_sbs, 0.0);
  for (std::size_t b = 0; b < n_sbs; ++b) {
    for (const auto& [id, count] : profiles[b]) sbs_score[b] += count * means[posterior.index_of(id)];
  }
  std::vector<std::size_t> sbs_order(n_sbs);
  std::iota(sbs_order.begin(), sbs_order.end(), std::size_t{0});
  std::stable_sort(sbs_order.begin(), sbs_order.end(),
                   [&](std::size_t x, std::size_t y) { return sbs_score[x] > sbs_score[y]; });

  const auto ranked = top_c(posterior.ids(), means, n_sbs * capacity);
  std::vector<std::vector<ContentId>> out(n_sbs);
  for (std::size_t r = 0; r < n_sbs; ++r) {
    auto first = ranked.begin() + static_cast<std::ptrdiff_t>(r * capacity);
    out[sbs_order[r]].assign(first, first + static_cast<std::ptrdiff_t>(capacity));
  }
  return out;
}

void bsg_update(BetaPosterior& posterior, const std::map<ContentId, double>& slot_requests) {
  for (std::size_t i = 0; i < posterior.size(); ++i) {
    auto it = slot_requests.find(posterior.ids()[i]);
    if (it != slot_requests.end() && it->second > 0.0) {
      posterior.observe(i, it->second, 0.0);
    } else {
      posterior.observe(i, 0.0, 1.0);
    }
  }
}

std::vector<ContentId> efnrl_policy(const predict::PopularSet& popular, std::size_t capacity) {
  if (popular.ids.size() != popular.votes.size()) throw ShapeError("efnrl: ids and votes differ in length");
  check_capacity(popular.ids.size(), capacity);
  std::vector<double> votes(popular.votes.begin(), popular.votes.end());
  return top_c(popular.ids, votes, capacity);
}

fl::FlConfig tfmadrl_fl_config(fl::FlConfig base) {
  base.elastic = false;
  base.aggregation = fl::AggregationMode::weighted_average;
  return base;
}

namespace {

class RandomScheme final : public CachePolicy {
 public:
  explicit RandomScheme(const SchemeParams& p) : p_(p), rng_(derive_seed(p.seed, {11})) {}
  std::vector<std::vector<ContentId>> place(const env::GlobalState& state) override {
    std::vector<std::vector<ContentId>> out;
    for (std::size_t b = 0; b < state.size(); ++b) out.push_back(random_policy(p_.catalog, p_.capacity, rng_));
    return out;
  }

 private:
  SchemeParams p_;
  Rng rng_;
};

class EpsGreedyScheme final : public CachePolicy {
 public:
  explicit EpsGreedyScheme(const SchemeParams& p)
      : p_(p), rng_(derive_seed(p.seed, {12})),
        counts_(static_cast<std::size_t>(p.n_sbs), std::vector<double>(p.catalog.size(), 0.0)) {
    for (std::size_t i = 0; i < p.catalog.size(); ++i) index_[p.catalog[i]] = i;
  }
  std::vector<std::vector<ContentId>> place(const env::GlobalState& state) override {
    std::vector<std::vector<ContentId>> out;
    for (std::size_t b = 0; b < state.size(); ++b) {
      out.push_back(c_eps_greedy(p_.catalog, counts_.at(b), p_.capacity, p_.epsilon, rng_).cache);
    }
    return out;
  }
  void observe(const env::StepResult&, const std::vector<std::vector<ContentId>>& requests) override {
    for (std::size_t b = 0; b < requests.size(); ++b) {
      auto& c = counts_.at(b);
      if (!p_.cumulative_counts) std::fill(c.begin(), c.end(), 0.0);
      for (ContentId id : requests[b]) {
        auto it = index_.find(id);
        if (it != index_.end()) c[it->second] += 1.0;
      }
    }
  }

 private:
  SchemeParams p_;
  Rng rng_;
  std::map<ContentId, std::size_t> index_;
  std::vector<std::vector<double>> counts_;
};

class ThompsonScheme final : public CachePolicy {
 public:
  explicit ThompsonScheme(const SchemeParams& p)
      : p_(p), rng_(derive_seed(p.seed, {13})), posteriors_(static_cast<std::size_t>(p.n_sbs), BetaPosterior(p.catalog)) {}
  std::vector<std::vector<ContentId>> place(const env::GlobalState& state) override {
    std::vector<std::vector<ContentId>> out;
    for (std::size_t b = 0; b < state.size(); ++b) out.push_back(thompson_policy(posteriors_.at(b), p_.capacity, rng_));
    return out;
  }
  // Each content cached in the slot gains its local hits as successes and
  // the SBS's cache misses (requests not served locally) as failures.
  void observe(const env::StepResult& r, const std::vector<std::vector<ContentId>>& requests) override {
    for (std::size_t b = 0; b < r.next.size(); ++b) {
      const auto counts = count_requests(requests[b]);
      const double misses = static_cast<double>(r.tallies[b].adjacent_hits + r.tallies[b].cs_fetches);
      std::vector<CacheObservation> obs;
      for (ContentId id : r.next[b].cached) {
        auto it = counts.find(id);
        obs.push_back({id, it == counts.end() ? 0.0 : it->second, misses});
      }
      thompson_update(posteriors_.at(b), obs);
    }
  }

 private:
  SchemeParams p_;
  Rng rng_;
  std::vector<BetaPosterior> posteriors_;
};

class BsgScheme final : public CachePolicy {
 public:
  explicit BsgScheme(const SchemeParams& p)
      : p_(p), posterior_(p.catalog), profiles_(static_cast<std::size_t>(p.n_sbs)) {}
  std::vector<std::vector<ContentId>> place(const env::GlobalState&) override {
    return bsg_allocate(posterior_, profiles_, p_.capacity);
  }
  void observe(const env::StepResult&, const std::vector<std::vector<ContentId>>& requests) override {
    std::map<ContentId, double> slot;
    for (std::size_t b = 0; b < requests.size(); ++b) {
      for (ContentId id : requests[b]) {
        slot[id] += 1.0;
        profiles_.at(b)[id] += 1.0;
      }
    }
    bsg_update(posterior_, slot);
  }

 private:
  SchemeParams p_;
  BetaPosterior posterior_;
  std::vector<std::map<ContentId, double>> profiles_;
};

class EfnrlScheme final : public CachePolicy {
 public:
  EfnrlScheme(std::vector<predict::PopularSet> popular, std::size_t capacity) {
    for (const auto& p : popular) caches_.push_back(efnrl_policy(p, capacity));
  }
  std::vector<std::vector<ContentId>> place(const env::GlobalState& state) override {
    if (state.size() != caches_.size()) throw ShapeError("efnrl: SBS count mismatch");
    return caches_;
  }

 private:
  std::vector<std::vector<ContentId>> caches_;
};

class ActorScheme final : public CachePolicy {
 public:
  ActorScheme(const maddpg::Policy& policy, std::size_t catalog_size) : policy_(policy), catalog_size_(catalog_size) {}
  std::vector<std::vector<ContentId>> place(const env::GlobalState& state) override {
    std::vector<std::vector<ContentId>> out;
    for (std::size_t b = 0; b < state.size(); ++b) {
      const Eigen::VectorXd a = nn::forward_one(policy_.agents.at(b).actor, env::encode_state(state[b], catalog_size_));
      out.push_back(env::decode_action(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), state[b],
                                       policy_.dims.capacity)
                        .cache);
    }
    return out;
  }

 private:
  maddpg::Policy policy_;
  std::size_t catalog_size_;
};

}  // namespace

std::unique_ptr<CachePolicy> make_random(const SchemeParams& p) {
  check_capacity(p.catalog.size(), p.capacity);
  return std::make_unique<RandomScheme>(p);
}
std::unique_ptr<CachePolicy> make_c_eps_greedy(const SchemeParams& p) {
  check_capacity(p.catalog.size(), p.capacity);
  return std::make_unique<EpsGreedyScheme>(p);
}
std::unique_ptr<CachePolicy> make_thompson(const SchemeParams& p) {
  check_capacity(p.catalog.size(), p.capacity);
  return std::make_unique<ThompsonScheme>(p);
}
std::unique_ptr<CachePolicy> make_bsg(const SchemeParams& p) {
  if (p.n_sbs < 1 || p.capacity == 0 || static_cast<std::size_t>(p.n_sbs) * p.capacity > p.catalog.size()) {
    throw ConfigError("bsg: B * C exceeds the catalog");
  }
  return std::make_unique<BsgScheme>(p);
}
std::unique_ptr<CachePolicy> make_efnrl(std::vector<predict::PopularSet> popular, std::size_t capacity) {
  return std::make_unique<EfnrlScheme>(std::move(popular), capacity);
}
std::unique_ptr<CachePolicy> make_actor_policy(const maddpg::Policy& policy, std::size_t catalog_size) {
  return std::make_unique<ActorScheme>(policy, catalog_size);
}

maddpg::TestResult evaluate(CachePolicy& policy, const maddpg::CachingTask& task, int episodes, int slots,
                            std::uint64_t seed, int episode_offset) {
  task.validate();
  if (episodes < 0 || slots < 1) throw ConfigError("evaluate: episodes >= 0 and slots >= 1 required");
  maddpg::TestResult out;
  Rng route(derive_seed(seed, {5, static_cast<std::uint64_t>(episode_offset)}));
  for (int ep = 0; ep < episodes; ++ep) {
    const int e = ep + episode_offset;
    env::GlobalState state =
        env::reset(derive_seed(seed, {6, static_cast<std::uint64_t>(e)}), task.popular, task.capacity);
    maddpg::EpisodeLog log;
    log.episode = ep;
    for (int t = 0; t < slots; ++t) {
      const auto requests = task.requests(e, t);
      const auto caches = policy.place(state);
      auto r = env::step_with_caches(state, caches, requests, task.costs, task.topology, route);
      policy.observe(r, requests);
      const auto recs = env::slot_records(ep, t, r);
      out.slots.insert(out.slots.end(), recs.begin(), recs.end());
      log.mean_reward += r.reward;
      log.mean_cost += r.total_cost;
      log.mean_hit_ratio += env::cache_hit_ratio(r.tallies).mean;
      state = std::move(r.next);
    }
    log.mean_reward /= slots;
    log.mean_cost /= slots;
    log.mean_hit_ratio /= slots;
    out.log.push_back(std::move(log));
  }
  return out;
}

}  // namespace cefmr::baselines
