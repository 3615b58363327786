#include "cefmr/cache_env.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <set>

#include "cefmr/error.hpp"

namespace cefmr::env {
namespace {

bool contains_sorted(const std::vector<ContentId>& sorted, ContentId id) {
  return std::binary_search(sorted.begin(), sorted.end(), id);
}

std::vector<ContentId> sorted_copy(const std::vector<ContentId>& v) {
  std::vector<ContentId> s = v;
  std::sort(s.begin(), s.end());
  return s;
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// All k-subsets of [0, n) in lexicographic order.
std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    out.push_back(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

}  // namespace

void CostParams::validate() const {
  if (!(alpha > 0.0 && beta > alpha && chi > beta && delta >= 0.0)) {
    throw ConfigError("costs must satisfy chi > beta > alpha > 0 and delta >= 0");
  }
}

double slot_cost(const FetchTally& t, const CostParams& c) {
  return c.alpha * static_cast<double>(t.local_hits) + c.beta * static_cast<double>(t.adjacent_hits) +
         c.chi * static_cast<double>(t.cs_fetches) + c.delta * static_cast<double>(t.replacements);
}

double saved_cost_reward(const FetchTally& t, const CostParams& c) {
  return (c.chi - c.alpha) * static_cast<double>(t.local_hits) +
         (c.chi - c.beta) * static_cast<double>(t.adjacent_hits) -
         c.delta * static_cast<double>(t.replacements);
}

Topology::Topology(std::vector<std::vector<bool>> adjacency) : adj_(std::move(adjacency)) {
  for (std::size_t i = 0; i < adj_.size(); ++i) {
    if (adj_[i].size() != adj_.size()) throw ConfigError("topology: adjacency must be square");
    if (adj_[i][i]) throw ConfigError("topology: self-loops are not allowed");
    for (std::size_t j = 0; j < adj_.size(); ++j) {
      if (adj_[i][j] != adj_[j][i]) throw ConfigError("topology: adjacency must be symmetric");
    }
  }
}

Topology Topology::fully_connected(int n_sbs) {
  if (n_sbs < 1) throw ConfigError("topology: need at least one SBS");
  std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n_sbs),
                                     std::vector<bool>(static_cast<std::size_t>(n_sbs), true));
  for (std::size_t i = 0; i < adj.size(); ++i) adj[i][i] = false;
  return Topology(std::move(adj));
}

std::vector<int> Topology::neighbors(int b) const {
  std::vector<int> out;
  for (int j = 0; j < size(); ++j) {
    if (adjacent(b, j)) out.push_back(j);
  }
  return out;
}

Eigen::VectorXd encode_state(const SbsState& s, std::size_t catalog_size) {
  if (catalog_size == 0) throw ConfigError("encode_state: empty catalog");
  Eigen::VectorXd v(static_cast<Eigen::Index>(s.cached.size() + s.popular.size()));
  const double scale = static_cast<double>(catalog_size);
  Eigen::Index k = 0;
  for (ContentId id : s.cached) v(k++) = static_cast<double>(id) / scale;
  for (ContentId id : s.popular) v(k++) = static_cast<double>(id) / scale;
  return v;
}

Eigen::VectorXd encode_global_state(const GlobalState& s, std::size_t catalog_size) {
  std::vector<Eigen::VectorXd> parts;
  Eigen::Index total = 0;
  for (const auto& sbs : s) {
    parts.push_back(encode_state(sbs, catalog_size));
    total += parts.back().size();
  }
  Eigen::VectorXd v(total);
  Eigen::Index k = 0;
  for (const auto& p : parts) {
    v.segment(k, p.size()) = p;
    k += p.size();
  }
  return v;
}

DecodedAction decode_action(std::span<const double> raw_scores, const SbsState& s, std::size_t capacity) {
  const std::size_t fp = s.popular.size();
  if (raw_scores.size() != fp) {
    throw ShapeError("decode_action: got " + std::to_string(raw_scores.size()) + " scores for F_p=" +
                     std::to_string(fp));
  }
  if (capacity == 0 || capacity > fp) throw ConfigError("decode_action: need 0 < C <= F_p");
  std::vector<std::size_t> order(fp);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw_scores[a] > raw_scores[b]; });
  DecodedAction out;
  out.binary.assign(fp, 0);
  for (std::size_t i = 0; i < capacity; ++i) out.binary[order[i]] = 1;
  const auto old_sorted = sorted_copy(s.cached);
  for (std::size_t f = 0; f < fp; ++f) {
    if (!out.binary[f]) continue;
    out.cache.push_back(s.popular[f]);
    if (!contains_sorted(old_sorted, s.popular[f])) ++out.replacements;
  }
  return out;
}

Route route_request(ContentId content, int local_sbs, const GlobalState& states,
                    const Topology& topology, Rng& rng) {
  const auto& local = states.at(static_cast<std::size_t>(local_sbs)).cached;
  if (std::find(local.begin(), local.end(), content) != local.end()) {
    return {RouteKind::local, local_sbs};
  }
  std::vector<int> holders;
  for (int n : topology.neighbors(local_sbs)) {
    const auto& c = states.at(static_cast<std::size_t>(n)).cached;
    if (std::find(c.begin(), c.end(), content) != c.end()) holders.push_back(n);
  }
  if (holders.empty()) return {RouteKind::cs, -1};
  if (holders.size() == 1) return {RouteKind::adjacent, holders.front()};
  std::uniform_int_distribution<std::size_t> pick(0, holders.size() - 1);
  return {RouteKind::adjacent, holders[pick(rng)]};
}

StepResult step_with_caches(const GlobalState& state, const std::vector<std::vector<ContentId>>& new_caches,
                            const std::vector<std::vector<ContentId>>& requests, const CostParams& costs,
                            const Topology& topology, Rng& rng) {
  const std::size_t n_sbs = state.size();
  if (new_caches.size() != n_sbs || requests.size() != n_sbs ||
      static_cast<std::size_t>(topology.size()) != n_sbs) {
    throw ShapeError("step: SBS count mismatch between state, action, requests and topology");
  }
  StepResult r;
  r.next = state;
  r.tallies.resize(n_sbs);
  for (std::size_t b = 0; b < n_sbs; ++b) {
    const auto& fresh = new_caches[b];
    if (fresh.size() != state[b].cached.size()) {
      throw ContractError("step: SBS " + std::to_string(b) + " cache size changed");
    }
    const auto fresh_sorted = sorted_copy(fresh);
    if (std::adjacent_find(fresh_sorted.begin(), fresh_sorted.end()) != fresh_sorted.end()) {
      throw ContractError("step: duplicate content in SBS " + std::to_string(b) + " cache");
    }
    const auto old_sorted = sorted_copy(state[b].cached);
    for (ContentId id : fresh) {
      if (!contains_sorted(old_sorted, id)) ++r.tallies[b].replacements;
    }
    r.tallies[b].action_ones = static_cast<std::int64_t>(fresh.size());
    r.next[b].cached = fresh;
  }
  // Sorted caches make routing O(log C) per lookup; selection among multiple
  // holders follows the neighbor order, matching route_request.
  std::vector<std::vector<ContentId>> sorted_caches(n_sbs);
  for (std::size_t b = 0; b < n_sbs; ++b) sorted_caches[b] = sorted_copy(r.next[b].cached);
  std::vector<std::vector<int>> neighbors(n_sbs);
  for (std::size_t b = 0; b < n_sbs; ++b) neighbors[b] = topology.neighbors(static_cast<int>(b));
  std::vector<int> holders;
  for (std::size_t b = 0; b < n_sbs; ++b) {
    FetchTally& t = r.tallies[b];
    for (ContentId c : requests[b]) {
      if (contains_sorted(sorted_caches[b], c)) {
        ++t.local_hits;
        continue;
      }
      holders.clear();
      for (int n : neighbors[b]) {
        if (contains_sorted(sorted_caches[static_cast<std::size_t>(n)], c)) holders.push_back(n);
      }
      if (holders.empty()) {
        ++t.cs_fetches;
      } else {
        // Serving SBS choice does not change the tally, but the draw keeps the
        // rng stream identical to per-request route_request calls.
        if (holders.size() > 1) {
          std::uniform_int_distribution<std::size_t> pick(0, holders.size() - 1);
          (void)pick(rng);
        }
        ++t.adjacent_hits;
      }
    }
  }
  r.local_rewards.resize(n_sbs);
  r.costs.resize(n_sbs);
  for (std::size_t b = 0; b < n_sbs; ++b) {
    r.local_rewards[b] = saved_cost_reward(r.tallies[b], costs);
    r.costs[b] = slot_cost(r.tallies[b], costs);
    r.reward += r.local_rewards[b];
    r.total_cost += r.costs[b];
  }
  r.reward /= static_cast<double>(n_sbs);
  return r;
}

StepResult step(const GlobalState& state, const std::vector<std::vector<double>>& global_action,
                const std::vector<std::vector<ContentId>>& requests, const CostParams& costs,
                const Topology& topology, std::size_t capacity, Rng& rng) {
  if (global_action.size() != state.size()) throw ShapeError("step: one action per SBS expected");
  std::vector<std::vector<ContentId>> caches;
  caches.reserve(state.size());
  for (std::size_t b = 0; b < state.size(); ++b) {
    caches.push_back(decode_action(global_action[b], state[b], capacity).cache);
  }
  return step_with_caches(state, caches, requests, costs, topology, rng);
}

HitRatios cache_hit_ratio(std::span<const FetchTally> tallies) {
  HitRatios h;
  for (const auto& t : tallies) {
    const std::int64_t hits = t.local_hits + t.adjacent_hits;
    const std::int64_t total = hits + t.cs_fetches;
    h.per_sbs.push_back(total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total));
  }
  if (!h.per_sbs.empty()) {
    h.mean = std::accumulate(h.per_sbs.begin(), h.per_sbs.end(), 0.0) /
             static_cast<double>(h.per_sbs.size());
  }
  return h;
}

GlobalState reset(std::uint64_t seed, const std::vector<std::vector<ContentId>>& popular,
                  std::size_t capacity) {
  Rng rng(seed);
  GlobalState s;
  for (std::size_t b = 0; b < popular.size(); ++b) {
    const auto& p = popular[b];
    if (capacity == 0 || capacity > p.size()) throw ConfigError("reset: need 0 < C <= F_p");
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    std::sample(idx.begin(), idx.end(), std::back_inserter(chosen), capacity, rng);
    SbsState st;
    st.sbs_id = static_cast<int>(b);
    st.popular = p;
    for (std::size_t i : chosen) st.cached.push_back(p[i]);
    s.push_back(std::move(st));
  }
  return s;
}

double expected_placement_reward(const std::vector<std::vector<ContentId>>& caches,
                                 const std::vector<std::map<ContentId, double>>& request_probs,
                                 double requests_per_slot, const CostParams& costs,
                                 const Topology& topology) {
  const std::size_t n_sbs = caches.size();
  if (request_probs.size() != n_sbs || static_cast<std::size_t>(topology.size()) != n_sbs) {
    throw ShapeError("expected_placement_reward: SBS count mismatch");
  }
  std::vector<std::vector<ContentId>> sorted(n_sbs);
  for (std::size_t b = 0; b < n_sbs; ++b) sorted[b] = sorted_copy(caches[b]);
  double total = 0.0;
  for (std::size_t b = 0; b < n_sbs; ++b) {
    double per_request = 0.0;
    for (const auto& [content, prob] : request_probs[b]) {
      if (contains_sorted(sorted[b], content)) {
        per_request += prob * (costs.chi - costs.alpha);
        continue;
      }
      for (int n : topology.neighbors(static_cast<int>(b))) {
        if (contains_sorted(sorted[static_cast<std::size_t>(n)], content)) {
          per_request += prob * (costs.chi - costs.beta);
          break;
        }
      }
    }
    total += per_request * requests_per_slot;
  }
  return total / static_cast<double>(n_sbs);
}

PlacementResult brute_force_optimal_placement(const std::vector<std::vector<ContentId>>& popular,
                                              const std::vector<std::map<ContentId, double>>& request_probs,
                                              std::size_t capacity, double requests_per_slot,
                                              const CostParams& costs, const Topology& topology) {
  const std::size_t n_sbs = popular.size();
  if (n_sbs == 0) throw ConfigError("brute force: no SBSs");
  std::vector<std::vector<std::vector<std::size_t>>> per_sbs;
  double space = 1.0;
  for (const auto& p : popular) {
    if (capacity == 0 || capacity > p.size()) throw ConfigError("brute force: need 0 < C <= F_p");
    space *= static_cast<double>(binomial(p.size(), capacity));
    if (space > 1e6) throw ConfigError("brute force: more than 1e6 joint placements");
    per_sbs.push_back(combinations(p.size(), capacity));
  }

  PlacementResult best;
  best.expected_reward = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> odometer(n_sbs, 0);
  std::vector<std::vector<ContentId>> caches(n_sbs);
  while (true) {
    for (std::size_t b = 0; b < n_sbs; ++b) {
      caches[b].clear();
      for (std::size_t i : per_sbs[b][odometer[b]]) caches[b].push_back(popular[b][i]);
    }
    const double value = expected_placement_reward(caches, request_probs, requests_per_slot, costs, topology);
    ++best.placements_visited;
    if (value > best.expected_reward) {
      best.expected_reward = value;
      best.caches = caches;
    }
    std::size_t b = 0;
    while (b < n_sbs && ++odometer[b] == per_sbs[b].size()) {
      odometer[b] = 0;
      ++b;
    }
    if (b == n_sbs) break;
  }
  return best;
}

std::vector<SlotRecord> slot_records(int episode, int slot, const StepResult& r) {
  const auto ratios = cache_hit_ratio(r.tallies);
  std::vector<SlotRecord> out;
  for (std::size_t b = 0; b < r.tallies.size(); ++b) {
    out.push_back({episode, slot, static_cast<int>(b), r.tallies[b], r.costs[b], r.local_rewards[b],
                   ratios.per_sbs[b]});
  }
  return out;
}

SlotLogWriter::SlotLogWriter(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw IoError("cannot write " + path.string());
  out_ << "episode,slot,sbs,r_b,r_n,r_c,r_e,action_ones,cost,reward,hit_ratio\n";
  out_ << std::setprecision(17);
}

void SlotLogWriter::write(std::span<const SlotRecord> records) {
  for (const auto& rec : records) {
    out_ << rec.episode << ',' << rec.slot << ',' << rec.sbs << ',' << rec.tally.local_hits << ','
         << rec.tally.adjacent_hits << ',' << rec.tally.cs_fetches << ',' << rec.tally.replacements << ','
         << rec.tally.action_ones << ',' << rec.cost << ',' << rec.reward << ',' << rec.hit_ratio << '\n';
  }
}

}  // namespace cefmr::env
