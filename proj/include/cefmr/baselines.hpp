#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cefmr/cache_env.hpp"
#include "cefmr/elastic_fl.hpp"
#include "cefmr/maddpg.hpp"
#include "cefmr/prediction.hpp"
#include "cefmr/rng.hpp"

namespace cefmr::baselines {

using env::ContentId;

enum class PolicyKind { random, c_eps_greedy, thompson, bsg, efnrl, tfmadrl, cefmr };

std::string_view to_string(PolicyKind k);
PolicyKind policy_from_string(std::string_view name);

// Beta(a, b) per content, starting from Beta(1, 1).
class BetaPosterior {
 public:
  BetaPosterior() = default;
  explicit BetaPosterior(std::vector<ContentId> ids);

  std::size_t size() const { return ids_.size(); }
  const std::vector<ContentId>& ids() const { return ids_; }
  std::size_t index_of(ContentId id) const;
  double a(std::size_t i) const { return a_[i]; }
  double b(std::size_t i) const { return b_[i]; }
  double mean(std::size_t i) const { return a_[i] / (a_[i] + b_[i]); }
  void set(std::size_t i, double a, double b);
  // Adds non-negative pseudo-counts.
  void observe(std::size_t i, double successes, double failures);

 private:
  std::vector<ContentId> ids_;
  std::map<ContentId, std::size_t> index_;
  std::vector<double> a_;
  std::vector<double> b_;
};

// Uniform C-subset of the catalog.
std::vector<ContentId> random_policy(std::span<const ContentId> catalog, std::size_t capacity, Rng& rng);

// Top C by count, ties by ascending id.
std::vector<ContentId> top_by_count(std::span<const ContentId> catalog, std::span<const double> counts,
                                    std::size_t capacity);

struct EpsGreedyChoice {
  std::vector<ContentId> cache;
  bool explored = false;
};

// With probability 1 - eps the top C by count, otherwise a uniform C-subset.
EpsGreedyChoice c_eps_greedy(std::span<const ContentId> catalog, std::span<const double> counts,
                             std::size_t capacity, double eps, Rng& rng);

// One draw per content, cache the C largest draws.
std::vector<ContentId> thompson_policy(const BetaPosterior& posterior, std::size_t capacity, Rng& rng);

struct CacheObservation {
  ContentId content = 0;
  double hits = 0.0;
  double misses = 0.0;
};

// a += hits, b += misses for each listed content; others untouched.
void thompson_update(BetaPosterior& posterior, std::span<const CacheObservation> observed);

// SBSs are ranked by sum over contents of profile count times posterior mean
// (ties by SBS index). Contents are ranked by posterior mean (ties by
// ascending id). The top-ranked SBS takes the first C contents, the next SBS
// the following C, and so on.
std::vector<std::vector<ContentId>> bsg_allocate(const BetaPosterior& posterior,
                                                 std::span<const std::map<ContentId, double>> profiles,
                                                 std::size_t capacity);

// a += request count for each requested content; b += 1 for each content
// that saw no request in the slot.
void bsg_update(BetaPosterior& posterior, const std::map<ContentId, double>& slot_requests);

// Top C of the predicted set by vote count, ties by ascending id.
std::vector<ContentId> efnrl_policy(const predict::PopularSet& popular, std::size_t capacity);

// Conventional federated averaging in place of the elastic scheme.
fl::FlConfig tfmadrl_fl_config(fl::FlConfig base);

// A caching scheme driven slot by slot through the shared environment.
class CachePolicy {
 public:
  virtual ~CachePolicy() = default;
  virtual std::vector<std::vector<ContentId>> place(const env::GlobalState& state) = 0;
  // Called after every step with the requests that were served.
  virtual void observe(const env::StepResult&, const std::vector<std::vector<ContentId>>&) {}
};

struct SchemeParams {
  std::vector<ContentId> catalog;
  int n_sbs = 2;
  std::size_t capacity = 5;
  double epsilon = 0.1;
  bool cumulative_counts = true;  // C-eps-greedy: otherwise counts reset every slot
  std::uint64_t seed = 1;
};

std::unique_ptr<CachePolicy> make_random(const SchemeParams& p);
std::unique_ptr<CachePolicy> make_c_eps_greedy(const SchemeParams& p);
std::unique_ptr<CachePolicy> make_thompson(const SchemeParams& p);
std::unique_ptr<CachePolicy> make_bsg(const SchemeParams& p);
std::unique_ptr<CachePolicy> make_efnrl(std::vector<predict::PopularSet> popular, std::size_t capacity);
// Deterministic placement from trained actors.
std::unique_ptr<CachePolicy> make_actor_policy(const maddpg::Policy& policy, std::size_t catalog_size);

// Runs `policy` over the task's test request streams (the same streams
// maddpg::test uses for equal seed and offset), logging per episode and per
// slot.
maddpg::TestResult evaluate(CachePolicy& policy, const maddpg::CachingTask& task, int episodes, int slots,
                            std::uint64_t seed, int episode_offset = 1000000);

}  // namespace cefmr::baselines
