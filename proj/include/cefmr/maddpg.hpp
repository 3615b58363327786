#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cefmr/cache_env.hpp"
#include "cefmr/nn.hpp"
#include "cefmr/rng.hpp"

namespace cefmr::maddpg {

using env::ContentId;

// Layout of the joint problem. Agent b's local state is slice b of the global
// state (length C + F_p) and its action is slice b of the global action
// (length F_p).
struct Dims {
  int n_sbs = 2;
  std::size_t capacity = 5;  // C
  std::size_t popular = 10;  // F_p

  std::size_t state_dim() const { return capacity + popular; }
  std::size_t action_dim() const { return popular; }
  std::size_t global_state_dim() const { return static_cast<std::size_t>(n_sbs) * state_dim(); }
  std::size_t global_action_dim() const { return static_cast<std::size_t>(n_sbs) * action_dim(); }
  void validate() const;
};

struct NetShape {
  std::vector<std::size_t> hidden{128, 64};
  nn::Activation hidden_activation = nn::Activation::relu;
};

struct AgentNets {
  nn::MlpNetwork actor;          // s_b -> [0,1]^{F_p}
  nn::MlpNetwork actor_target;
  nn::MlpNetwork critic;         // [s_b; a_b] -> Q
  nn::MlpNetwork critic_target;
};

struct GlobalCritics {
  nn::MlpNetwork critic1;  // [s; a] -> Q
  nn::MlpNetwork critic2;
  nn::MlpNetwork target1;
  nn::MlpNetwork target2;
};

AgentNets make_agent(const Dims& dims, const NetShape& shape, std::uint64_t seed);
GlobalCritics make_global_critics(const Dims& dims, const NetShape& shape, std::uint64_t seed);

struct Transition {
  Eigen::VectorXd state;          // s^t
  Eigen::VectorXd action;         // a^t, all agents' raw scores
  double reward = 0.0;            // R^t
  Eigen::VectorXd local_rewards;  // R_L^t, one per agent
  Eigen::VectorXd next_state;     // s^{t+1}
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  // m distinct indices, uniform without replacement. ContractError when
  // fewer than m transitions are stored.
  std::vector<std::size_t> sample_indices(std::size_t m, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

// Column-per-sample view of a minibatch.
struct Batch {
  Eigen::MatrixXd states;         // global_state_dim x M
  Eigen::MatrixXd actions;        // global_action_dim x M
  Eigen::RowVectorXd rewards;     // 1 x M
  Eigen::MatrixXd local_rewards;  // B x M
  Eigen::MatrixXd next_states;

  Eigen::Index size() const { return states.cols(); }
};

Batch gather(const ReplayBuffer& buffer, std::span<const std::size_t> indices);

// Actor output plus N(0, sigma^2) noise, clipped to [0, 1].
Eigen::VectorXd select_action(const AgentNets& agent, const Eigen::VectorXd& local_state,
                              double noise_sigma, Rng& rng);

// Rows [b*(C+F_p), (b+1)*(C+F_p)) of a global-state batch.
Eigen::MatrixXd local_block(const Eigen::MatrixXd& global, const Dims& dims, int b, bool action);

// y_g = R + gamma * min(Q1'(s', a'), Q2'(s', a')) with a' from the target actors.
Eigen::RowVectorXd compute_global_target(const Batch& batch, double gamma, std::span<const AgentNets> agents,
                                         const GlobalCritics& globals, const Dims& dims);

// Mean squared error of a critic against fixed targets and its parameter
// gradient.
struct CriticLoss {
  double loss = 0.0;
  nn::GradientBundle grads;
};
CriticLoss critic_loss(const nn::MlpNetwork& critic, const Eigen::MatrixXd& inputs,
                       const Eigen::RowVectorXd& targets);

// One SGD step on each global critic; returns (L(phi1), L(phi2)) before the step.
std::pair<double, double> update_global_critics(GlobalCritics& globals, const Batch& batch,
                                                const Eigen::RowVectorXd& y, double learning_rate);

// y_b = R_b + gamma * Q_b'(s_b', pi_b'(s_b')); one SGD step on the local critic.
double update_local_critic(AgentNets& agent, int b, const Batch& batch, double gamma,
                           double learning_rate, const Dims& dims);

enum class ActorTerms { both, global_only, local_only };

// Gradient of J with respect to the actor parameters, averaged over the
// batch: for each sample agent b's action slice is replaced by pi_b(s_b) and
// dQ/da is chained through the actor.
nn::GradientBundle actor_gradient(const AgentNets& agent, int b, const Batch& batch,
                                  const nn::MlpNetwork& global_critic, const Dims& dims,
                                  ActorTerms terms = ActorTerms::both);

// The objective whose gradient actor_gradient returns.
double actor_objective(const AgentNets& agent, int b, const Batch& batch,
                       const nn::MlpNetwork& global_critic, const Dims& dims,
                       ActorTerms terms = ActorTerms::both);

// Gradient ascent theta <- theta + lr * grad J; returns ||grad J||. A positive
// clip rescales the gradient to at most that norm first.
double update_actor(AgentNets& agent, int b, const Batch& batch, const nn::MlpNetwork& global_critic,
                    double learning_rate, const Dims& dims, double clip_norm = 0.0);

void soft_update_all(std::span<AgentNets> agents, GlobalCritics& globals, double tau);

struct TrainConfig {
  int episodes = 1000;   // R_max
  int slots = 100;       // T
  double gamma = 0.99;
  double tau = 0.001;
  double learning_rate = 0.01;
  std::size_t minibatch = 256;  // M
  std::size_t replay_capacity = 100000;
  double noise_sigma = 0.1;
  double noise_decay = 0.995;  // per episode
  // Rewards are multiplied by this before they enter the replay buffer.
  // 0 picks 1 / (chi * requests per SBS per slot).
  double reward_scale = 0.0;
  double actor_clip_norm = 0.0;
  NetShape shape;
  int checkpoint_every = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

// The caching problem the agents act in. The popular lists stay fixed for a
// whole run; request streams are drawn per (episode, slot).
struct CachingTask {
  std::vector<std::vector<ContentId>> popular;  // p_b
  std::size_t capacity = 5;
  std::size_t catalog_size = 0;  // state encoding scale
  env::CostParams costs;
  env::Topology topology;
  double requests_per_slot = 0.0;  // per SBS, used by the automatic reward scale
  std::function<std::vector<std::vector<ContentId>>(int episode, int slot)> requests;

  Dims dims() const;
  void validate() const;
};

struct EpisodeLog {
  int episode = 0;
  double mean_reward = 0.0;   // unscaled R per slot
  double mean_cost = 0.0;     // total over SBSs, per slot
  double mean_hit_ratio = 0.0;
  double noise_sigma = 0.0;
  std::size_t updates = 0;
  // NaN in episodes without updates.
  double global_critic_loss = 0.0;         // mean of L(phi1) and L(phi2)
  std::vector<double> local_critic_loss;   // per agent
};

struct Policy {
  Dims dims;
  std::vector<AgentNets> agents;
  GlobalCritics globals;
};

struct TrainResult {
  Policy policy;
  std::vector<EpisodeLog> log;
  std::size_t buffer_size = 0;
  double reward_scale = 1.0;
};

struct TrainHooks {
  env::SlotLogWriter* slots = nullptr;
  std::optional<std::filesystem::path> checkpoint_dir;
};

TrainResult train(const CachingTask& task, const TrainConfig& cfg, const TrainHooks& hooks = {});

// Deterministic rollout: no noise, no updates. `episode_offset` shifts the
// request stream away from the training episodes.
struct TestResult {
  std::vector<EpisodeLog> log;
  std::vector<env::SlotRecord> slots;
};
TestResult test(const CachingTask& task, const Policy& policy, int episodes, int slots,
                std::uint64_t seed, int episode_offset = 1000000);

// Actor blobs, one per agent.
void save_actors(const Policy& policy, const std::filesystem::path& dir, const std::string& tag);
void load_actors(Policy& policy, const std::filesystem::path& dir, const std::string& tag);

// Columns: episode,mean_reward,mean_cost,mean_hit_ratio,noise_sigma,updates,global_critic_loss,local_critic_loss_<b>...
void write_episode_log_csv(const std::filesystem::path& path, std::span<const EpisodeLog> log);

}  // namespace cefmr::maddpg
