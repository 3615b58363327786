#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cefmr/dataset.hpp"
#include "cefmr/rng.hpp"

namespace cefmr::env {

using data::ContentId;

// Per-unit fetch and replacement costs. Defaults are the experiment values
// alpha=1, beta=30, chi=100, delta=100.
struct CostParams {
  double alpha = 1.0;   // local SBS
  double beta = 30.0;   // adjacent SBS
  double chi = 100.0;   // content server
  double delta = 100.0; // replacement

  void validate() const;  // chi > beta > alpha > 0, delta >= 0
};

struct SbsState {
  int sbs_id = 0;
  std::vector<ContentId> cached;   // c_b, exactly C ids
  std::vector<ContentId> popular;  // p_b, exactly F_p ids

  friend bool operator==(const SbsState&, const SbsState&) = default;
};

using GlobalState = std::vector<SbsState>;

struct FetchTally {
  std::int64_t local_hits = 0;     // r_b
  std::int64_t adjacent_hits = 0;  // r_{b,n}
  std::int64_t cs_fetches = 0;     // r_{b,c}
  std::int64_t replacements = 0;   // r_{b,e}: contents newly brought into the cache
  std::int64_t action_ones = 0;    // number of ones in the binary action

  std::int64_t requests() const { return local_hits + adjacent_hits + cs_fetches; }
};

// alpha r_b + beta r_{b,n} + chi r_{b,c} + delta r_{b,e}
double slot_cost(const FetchTally& t, const CostParams& c);
// (chi - alpha) r_b + (chi - beta) r_{b,n} - delta r_{b,e}
double saved_cost_reward(const FetchTally& t, const CostParams& c);

class Topology {
 public:
  Topology() = default;
  explicit Topology(std::vector<std::vector<bool>> adjacency);
  static Topology fully_connected(int n_sbs);

  int size() const { return static_cast<int>(adj_.size()); }
  bool adjacent(int a, int b) const { return adj_.at(a).at(b); }
  std::vector<int> neighbors(int b) const;

 private:
  std::vector<std::vector<bool>> adj_;
};

// [c_b ids..., p_b ids...] / catalog_size, length C + F_p.
Eigen::VectorXd encode_state(const SbsState& s, std::size_t catalog_size);
Eigen::VectorXd encode_global_state(const GlobalState& s, std::size_t catalog_size);

struct DecodedAction {
  std::vector<ContentId> cache;  // in p_b order
  std::vector<std::uint8_t> binary;
  std::int64_t replacements = 0;
};

// New cache = the C entries of p_b with the highest scores (ties by lower
// index); replacements = |new \ old|.
DecodedAction decode_action(std::span<const double> raw_scores, const SbsState& s, std::size_t capacity);

enum class RouteKind { local, adjacent, cs };

struct Route {
  RouteKind kind = RouteKind::cs;
  int sbs = -1;  // serving SBS for local/adjacent

  friend bool operator==(const Route&, const Route&) = default;
};

// Local if cached locally, else a uniformly random adjacent SBS caching it,
// else the content server.
Route route_request(ContentId content, int local_sbs, const GlobalState& states,
                    const Topology& topology, Rng& rng);

struct StepResult {
  GlobalState next;
  std::vector<FetchTally> tallies;
  std::vector<double> local_rewards;  // R_L
  std::vector<double> costs;
  double reward = 0.0;                // R, mean of R_L
  double total_cost = 0.0;
};

// Installs `new_caches`, counts replacements against the previous caches, then
// routes every request of every SBS against the new caches.
StepResult step_with_caches(const GlobalState& state, const std::vector<std::vector<ContentId>>& new_caches,
                            const std::vector<std::vector<ContentId>>& requests, const CostParams& costs,
                            const Topology& topology, Rng& rng);

// Decodes each SBS's raw action scores, then behaves as step_with_caches.
StepResult step(const GlobalState& state, const std::vector<std::vector<double>>& global_action,
                const std::vector<std::vector<ContentId>>& requests, const CostParams& costs,
                const Topology& topology, std::size_t capacity, Rng& rng);

struct HitRatios {
  std::vector<double> per_sbs;
  double mean = 0.0;
};

// CH_b = (r_b + r_{b,n}) / (r_b + r_{b,n} + r_{b,c}); 0 with no requests.
HitRatios cache_hit_ratio(std::span<const FetchTally> tallies);

// Seeded random C-subset of each p_b, kept in p_b order.
GlobalState reset(std::uint64_t seed, const std::vector<std::vector<ContentId>>& popular,
                  std::size_t capacity);

struct PlacementResult {
  std::vector<std::vector<ContentId>> caches;
  double expected_reward = 0.0;  // per slot: mean over SBSs of expected R_b
  std::uint64_t placements_visited = 0;
};

// Expected one-slot mean reward of a joint placement when SBS b receives
// requests_per_slot requests drawn from request_probs[b]; replacements are
// not charged.
double expected_placement_reward(const std::vector<std::vector<ContentId>>& caches,
                                 const std::vector<std::map<ContentId, double>>& request_probs,
                                 double requests_per_slot, const CostParams& costs,
                                 const Topology& topology);

// Exhaustive search over all joint C-subsets of the p-lists. Refuses
// instances with more than 1e6 joint placements.
PlacementResult brute_force_optimal_placement(const std::vector<std::vector<ContentId>>& popular,
                                              const std::vector<std::map<ContentId, double>>& request_probs,
                                              std::size_t capacity, double requests_per_slot,
                                              const CostParams& costs, const Topology& topology);

struct SlotRecord {
  int episode = 0;
  int slot = 0;
  int sbs = 0;
  FetchTally tally;
  double cost = 0.0;
  double reward = 0.0;
  double hit_ratio = 0.0;
};

std::vector<SlotRecord> slot_records(int episode, int slot, const StepResult& r);

// Columns: episode,slot,sbs,r_b,r_n,r_c,r_e,action_ones,cost,reward,hit_ratio
class SlotLogWriter {
 public:
  explicit SlotLogWriter(const std::filesystem::path& path);
  void write(std::span<const SlotRecord> records);

 private:
  std::ofstream out_;
};

}  // namespace cefmr::env
