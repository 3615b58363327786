#include "cefmr/maddpg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "cefmr/error.hpp"

namespace cefmr::maddpg {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nn::MlpNetwork make_mlp(std::size_t in, std::size_t out, const NetShape& shape, nn::Activation out_act,
                        std::uint64_t seed) {
  std::vector<std::size_t> dims{in};
  std::vector<nn::Activation> acts;
  for (std::size_t h : shape.hidden) {
    dims.push_back(h);
    acts.push_back(shape.hidden_activation);
  }
  dims.push_back(out);
  acts.push_back(out_act);
  return nn::mlp_init(dims, acts, seed);
}

Eigen::MatrixXd vstack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

Eigen::MatrixXd target_actions(std::span<const AgentNets> agents, const Eigen::MatrixXd& next_states,
                               const Dims& dims) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(dims.global_action_dim()), next_states.cols());
  const auto ad = static_cast<Eigen::Index>(dims.action_dim());
  for (int b = 0; b < dims.n_sbs; ++b) {
    a.middleRows(b * ad, ad) =
        nn::forward(agents[static_cast<std::size_t>(b)].actor_target, local_block(next_states, dims, b, false));
  }
  return a;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void Dims::validate() const {
  if (n_sbs < 1) throw ConfigError("maddpg: need at least one SBS");
  if (capacity < 1 || capacity >= popular) throw ConfigError("maddpg: need 0 < C < F_p");
}

AgentNets make_agent(const Dims& dims, const NetShape& shape, std::uint64_t seed) {
  AgentNets a;
  a.actor = make_mlp(dims.state_dim(), dims.action_dim(), shape, nn::Activation::sigmoid,
                     derive_seed(seed, {1}));
  a.critic = make_mlp(dims.state_dim() + dims.action_dim(), 1, shape, nn::Activation::identity,
                      derive_seed(seed, {2}));
  a.actor_target = a.actor;
  a.critic_target = a.critic;
  return a;
}

GlobalCritics make_global_critics(const Dims& dims, const NetShape& shape, std::uint64_t seed) {
  GlobalCritics g;
  const std::size_t in = dims.global_state_dim() + dims.global_action_dim();
  g.critic1 = make_mlp(in, 1, shape, nn::Activation::identity, derive_seed(seed, {1}));
  g.critic2 = make_mlp(in, 1, shape, nn::Activation::identity, derive_seed(seed, {2}));
  g.target1 = g.critic1;
  g.target2 = g.critic2;
  return g;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t m, Rng& rng) const {
  if (m > items_.size()) {
    throw ContractError("replay buffer holds " + std::to_string(items_.size()) + " transitions, need " +
                        std::to_string(m));
  }
  // Partial Fisher-Yates over the index range.
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return idx;
}

Batch gather(const ReplayBuffer& buffer, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("gather: empty minibatch");
  const Transition& first = buffer.at(indices[0]);
  const auto m = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.states.resize(first.state.size(), m);
  b.actions.resize(first.action.size(), m);
  b.rewards.resize(m);
  b.local_rewards.resize(first.local_rewards.size(), m);
  b.next_states.resize(first.next_state.size(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Transition& t = buffer.at(indices[static_cast<std::size_t>(j)]);
    if (t.state.size() != b.states.rows() || t.action.size() != b.actions.rows() ||
        t.local_rewards.size() != b.local_rewards.rows() || t.next_state.size() != b.next_states.rows()) {
      throw ShapeError("gather: inconsistent transition dimensions");
    }
    b.states.col(j) = t.state;
    b.actions.col(j) = t.action;
    b.rewards(j) = t.reward;
    b.local_rewards.col(j) = t.local_rewards;
    b.next_states.col(j) = t.next_state;
  }
  return b;
}

Eigen::VectorXd select_action(const AgentNets& agent, const Eigen::VectorXd& local_state, double noise_sigma,
                              Rng& rng) {
  Eigen::VectorXd a = nn::forward_one(agent.actor, local_state);
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += noise(rng);
  }
  return a.cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::MatrixXd local_block(const Eigen::MatrixXd& global, const Dims& dims, int b, bool action) {
  const auto width = static_cast<Eigen::Index>(action ? dims.action_dim() : dims.state_dim());
  if (b < 0 || b >= dims.n_sbs || global.rows() != width * dims.n_sbs) {
    throw ShapeError("local_block: agent or dimension out of range");
  }
  return global.middleRows(b * width, width);
}

Eigen::RowVectorXd compute_global_target(const Batch& batch, double gamma, std::span<const AgentNets> agents,
                                         const GlobalCritics& globals, const Dims& dims) {
  const Eigen::MatrixXd input = vstack(batch.next_states, target_actions(agents, batch.next_states, dims));
  const Eigen::RowVectorXd q1 = nn::forward(globals.target1, input);
  const Eigen::RowVectorXd q2 = nn::forward(globals.target2, input);
  return batch.rewards + gamma * q1.cwiseMin(q2);
}

CriticLoss critic_loss(const nn::MlpNetwork& critic, const Eigen::MatrixXd& inputs,
                       const Eigen::RowVectorXd& targets) {
  if (targets.size() != inputs.cols()) throw ShapeError("critic_loss: target count mismatch");
  nn::ActivationRecord rec;
  const Eigen::RowVectorXd q = nn::forward(critic, inputs, &rec);
  const Eigen::RowVectorXd err = q - targets;
  const auto m = static_cast<double>(inputs.cols());
  CriticLoss out;
  out.loss = err.squaredNorm() / m;
  out.grads = nn::backward(critic, rec, (2.0 / m) * err).grads;
  return out;
}

std::pair<double, double> update_global_critics(GlobalCritics& globals, const Batch& batch,
                                                const Eigen::RowVectorXd& y, double learning_rate) {
  const Eigen::MatrixXd input = vstack(batch.states, batch.actions);
  const nn::OptimizerConfig opt{learning_rate};
  auto l1 = critic_loss(globals.critic1, input, y);
  auto l2 = critic_loss(globals.critic2, input, y);
  nn::sgd_step(globals.critic1, l1.grads, opt);
  nn::sgd_step(globals.critic2, l2.grads, opt);
  return {l1.loss, l2.loss};
}

double update_local_critic(AgentNets& agent, int b, const Batch& batch, double gamma, double learning_rate,
                           const Dims& dims) {
  const Eigen::MatrixXd next_s = local_block(batch.next_states, dims, b, false);
  const Eigen::MatrixXd next_a = nn::forward(agent.actor_target, next_s);
  const Eigen::RowVectorXd next_q = nn::forward(agent.critic_target, vstack(next_s, next_a));
  const Eigen::RowVectorXd y = batch.local_rewards.row(b) + gamma * next_q;
  const Eigen::MatrixXd input =
      vstack(local_block(batch.states, dims, b, false), local_block(batch.actions, dims, b, true));
  auto l = critic_loss(agent.critic, input, y);
  nn::sgd_step(agent.critic, l.grads, {learning_rate});
  return l.loss;
}

namespace {

struct ActorPass {
  Eigen::MatrixXd local_state;
  Eigen::MatrixXd actions;  // pi_b(s_b)
  nn::ActivationRecord record;
  Eigen::MatrixXd global_input;
  Eigen::MatrixXd local_input;
};

ActorPass actor_pass(const AgentNets& agent, int b, const Batch& batch, const Dims& dims) {
  ActorPass p;
  p.local_state = local_block(batch.states, dims, b, false);
  p.actions = nn::forward(agent.actor, p.local_state, &p.record);
  Eigen::MatrixXd joint = batch.actions;
  const auto ad = static_cast<Eigen::Index>(dims.action_dim());
  joint.middleRows(b * ad, ad) = p.actions;
  p.global_input = vstack(batch.states, joint);
  p.local_input = vstack(p.local_state, p.actions);
  return p;
}

}  // namespace

double actor_objective(const AgentNets& agent, int b, const Batch& batch, const nn::MlpNetwork& global_critic,
                       const Dims& dims, ActorTerms terms) {
  const ActorPass p = actor_pass(agent, b, batch, dims);
  double j = 0.0;
  if (terms != ActorTerms::local_only) j += nn::forward(global_critic, p.global_input).mean();
  if (terms != ActorTerms::global_only) j += nn::forward(agent.critic, p.local_input).mean();
  return j;
}

nn::GradientBundle actor_gradient(const AgentNets& agent, int b, const Batch& batch,
                                  const nn::MlpNetwork& global_critic, const Dims& dims, ActorTerms terms) {
  const ActorPass p = actor_pass(agent, b, batch, dims);
  const auto m = p.actions.cols();
  const Eigen::RowVectorXd seed = Eigen::RowVectorXd::Constant(m, 1.0 / static_cast<double>(m));
  const auto ad = static_cast<Eigen::Index>(dims.action_dim());
  Eigen::MatrixXd da = Eigen::MatrixXd::Zero(ad, m);
  if (terms != ActorTerms::local_only) {
    nn::ActivationRecord rec;
    nn::forward(global_critic, p.global_input, &rec);
    const auto in_grad = nn::backward(global_critic, rec, seed).input_grad;
    da += in_grad.middleRows(static_cast<Eigen::Index>(dims.global_state_dim()) + b * ad, ad);
  }
  if (terms != ActorTerms::global_only) {
    nn::ActivationRecord rec;
    nn::forward(agent.critic, p.local_input, &rec);
    const auto in_grad = nn::backward(agent.critic, rec, seed).input_grad;
    da += in_grad.bottomRows(ad);
  }
  return nn::backward(agent.actor, p.record, da).grads;
}

double update_actor(AgentNets& agent, int b, const Batch& batch, const nn::MlpNetwork& global_critic,
                    double learning_rate, const Dims& dims, double clip_norm) {
  auto g = actor_gradient(agent, b, batch, global_critic, dims);
  const double norm = g.norm();
  if (clip_norm > 0.0 && norm > clip_norm) g *= clip_norm / norm;
  nn::apply_gradient(agent.actor, g, learning_rate);
  return norm;
}

void soft_update_all(std::span<AgentNets> agents, GlobalCritics& globals, double tau) {
  nn::soft_update(globals.target1, globals.critic1, tau);
  nn::soft_update(globals.target2, globals.critic2, tau);
  for (auto& a : agents) {
    nn::soft_update(a.actor_target, a.actor, tau);
    nn::soft_update(a.critic_target, a.critic, tau);
  }
}

void TrainConfig::validate() const {
  if (episodes < 0 || slots < 1) throw ConfigError("maddpg: episodes >= 0 and slots >= 1 required");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("maddpg: gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("maddpg: tau must lie in (0, 1]");
  nn::OptimizerConfig{learning_rate}.validate();
  if (minibatch < 1) throw ConfigError("maddpg: minibatch must be positive");
  if (replay_capacity < minibatch) throw ConfigError("maddpg: replay capacity below minibatch size");
  if (noise_sigma < 0.0 || noise_decay <= 0.0 || noise_decay > 1.0) {
    throw ConfigError("maddpg: noise sigma >= 0 and decay in (0, 1] required");
  }
  if (reward_scale < 0.0 || actor_clip_norm < 0.0) throw ConfigError("maddpg: negative scale or clip");
  if (checkpoint_every < 1) throw ConfigError("maddpg: checkpoint interval must be positive");
}

Dims CachingTask::dims() const {
  Dims d;
  d.n_sbs = static_cast<int>(popular.size());
  d.capacity = capacity;
  d.popular = popular.empty() ? 0 : popular.front().size();
  return d;
}

void CachingTask::validate() const {
  const Dims d = dims();
  d.validate();
  for (const auto& p : popular) {
    if (p.size() != d.popular) throw ConfigError("maddpg: every SBS needs F_p popular contents");
  }
  if (catalog_size == 0) throw ConfigError("maddpg: catalog size must be positive");
  if (topology.size() != d.n_sbs) throw ConfigError("maddpg: topology size differs from SBS count");
  if (!requests) throw ConfigError("maddpg: no request source");
  costs.validate();
}

namespace {

struct Rollout {
  env::StepResult result;
  Eigen::VectorXd action;
};

Rollout act_and_step(const CachingTask& task, const Policy& policy, const env::GlobalState& state,
                     const std::vector<std::vector<ContentId>>& requests, double sigma, Rng& explore,
                     Rng& route) {
  const Dims& dims = policy.dims;
  std::vector<std::vector<double>> raw(static_cast<std::size_t>(dims.n_sbs));
  Eigen::VectorXd joint(static_cast<Eigen::Index>(dims.global_action_dim()));
  const auto ad = static_cast<Eigen::Index>(dims.action_dim());
  for (int b = 0; b < dims.n_sbs; ++b) {
    const auto& agent = policy.agents[static_cast<std::size_t>(b)];
    const Eigen::VectorXd a =
        select_action(agent, env::encode_state(state[static_cast<std::size_t>(b)], task.catalog_size), sigma,
                      explore);
    joint.segment(b * ad, ad) = a;
    raw[static_cast<std::size_t>(b)].assign(a.data(), a.data() + a.size());
  }
  return {env::step(state, raw, requests, task.costs, task.topology, task.capacity, route), joint};
}

EpisodeLog summarize(int episode, const std::vector<env::StepResult>& steps) {
  EpisodeLog log;
  log.episode = episode;
  for (const auto& s : steps) {
    log.mean_reward += s.reward;
    log.mean_cost += s.total_cost;
    log.mean_hit_ratio += env::cache_hit_ratio(s.tallies).mean;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(steps.size(), 1));
  log.mean_reward /= n;
  log.mean_cost /= n;
  log.mean_hit_ratio /= n;
  return log;
}

}  // namespace

TrainResult train(const CachingTask& task, const TrainConfig& cfg, const TrainHooks& hooks) {
  task.validate();
  cfg.validate();
#if defined(__GLIBC__)
  // Minibatch temporaries are a few hundred KB; above glibc's default mmap
  // threshold every update would map and unmap them, doubling the run time.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
  TrainResult out;
  Policy& policy = out.policy;
  policy.dims = task.dims();
  const Dims& dims = policy.dims;
  for (int b = 0; b < dims.n_sbs; ++b) {
    policy.agents.push_back(make_agent(dims, cfg.shape, derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(b)})));
  }
  policy.globals = make_global_critics(dims, cfg.shape, derive_seed(cfg.seed, {2}));

  double scale = cfg.reward_scale;
  if (scale == 0.0) scale = task.requests_per_slot > 0.0 ? 1.0 / (task.costs.chi * task.requests_per_slot) : 1.0;
  out.reward_scale = scale;

  ReplayBuffer buffer(cfg.replay_capacity);
  Rng explore(derive_seed(cfg.seed, {3}));
  Rng replay(derive_seed(cfg.seed, {4}));
  Rng route(derive_seed(cfg.seed, {5}));
  double sigma = cfg.noise_sigma;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    env::GlobalState state =
        env::reset(derive_seed(cfg.seed, {6, static_cast<std::uint64_t>(ep)}), task.popular, task.capacity);
    std::vector<env::StepResult> steps;
    double global_loss = 0.0;
    std::vector<double> local_loss(static_cast<std::size_t>(dims.n_sbs), 0.0);
    std::size_t updates = 0;

    for (int t = 0; t < cfg.slots; ++t) {
      const auto requests = task.requests(ep, t);
      Rollout r = act_and_step(task, policy, state, requests, sigma, explore, route);
      Transition tr;
      tr.state = env::encode_global_state(state, task.catalog_size);
      tr.action = std::move(r.action);
      tr.reward = scale * r.result.reward;
      tr.local_rewards = scale * Eigen::Map<const Eigen::VectorXd>(r.result.local_rewards.data(),
                                                                   static_cast<Eigen::Index>(r.result.local_rewards.size()));
      tr.next_state = env::encode_global_state(r.result.next, task.catalog_size);
      buffer.push(std::move(tr));

      if (buffer.size() > cfg.minibatch) {
        const auto idx = buffer.sample_indices(cfg.minibatch, replay);
        const Batch batch = gather(buffer, idx);
        const auto y = compute_global_target(batch, cfg.gamma, policy.agents, policy.globals, dims);
        const auto [l1, l2] = update_global_critics(policy.globals, batch, y, cfg.learning_rate);
        global_loss += 0.5 * (l1 + l2);
        for (int b = 0; b < dims.n_sbs; ++b) {
          auto& agent = policy.agents[static_cast<std::size_t>(b)];
          local_loss[static_cast<std::size_t>(b)] +=
              update_local_critic(agent, b, batch, cfg.gamma, cfg.learning_rate, dims);
          update_actor(agent, b, batch, policy.globals.critic1, cfg.learning_rate, dims, cfg.actor_clip_norm);
        }
        soft_update_all(policy.agents, policy.globals, cfg.tau);
        ++updates;
      }

      if (hooks.slots) {
        const auto recs = env::slot_records(ep, t, r.result);
        hooks.slots->write(recs);
      }
      state = r.result.next;
      steps.push_back(std::move(r.result));
    }

    EpisodeLog log = summarize(ep, steps);
    log.noise_sigma = sigma;
    log.updates = updates;
    log.global_critic_loss = updates ? global_loss / static_cast<double>(updates) : kNaN;
    for (double l : local_loss) log.local_critic_loss.push_back(updates ? l / static_cast<double>(updates) : kNaN);
    out.log.push_back(std::move(log));

    sigma *= cfg.noise_decay;
    if (hooks.checkpoint_dir && (ep + 1) % cfg.checkpoint_every == 0) {
      save_actors(policy, *hooks.checkpoint_dir, "ep" + std::to_string(ep + 1));
    }
  }
  out.buffer_size = buffer.size();
  return out;
}

TestResult test(const CachingTask& task, const Policy& policy, int episodes, int slots, std::uint64_t seed,
                int episode_offset) {
  task.validate();
  if (episodes < 0 || slots < 1) throw ConfigError("test: episodes >= 0 and slots >= 1 required");
  if (static_cast<int>(policy.agents.size()) != policy.dims.n_sbs || policy.dims.n_sbs != task.dims().n_sbs) {
    throw ShapeError("test: policy does not match the task");
  }
  TestResult out;
  Rng unused(0);
  Rng route(derive_seed(seed, {5, static_cast<std::uint64_t>(episode_offset)}));
  for (int ep = 0; ep < episodes; ++ep) {
    const int e = ep + episode_offset;
    env::GlobalState state =
        env::reset(derive_seed(seed, {6, static_cast<std::uint64_t>(e)}), task.popular, task.capacity);
    std::vector<env::StepResult> steps;
    for (int t = 0; t < slots; ++t) {
      Rollout r = act_and_step(task, policy, state, task.requests(e, t), 0.0, unused, route);
      const auto recs = env::slot_records(ep, t, r.result);
      out.slots.insert(out.slots.end(), recs.begin(), recs.end());
      state = r.result.next;
      steps.push_back(std::move(r.result));
    }
    out.log.push_back(summarize(ep, steps));
  }
  return out;
}

void save_actors(const Policy& policy, const std::filesystem::path& dir, const std::string& tag) {
  std::filesystem::create_directories(dir);
  for (std::size_t b = 0; b < policy.agents.size(); ++b) {
    const auto path = dir / ("actor_" + std::to_string(b) + "_" + tag + ".blob");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    const std::string blob = nn::serialize_params(policy.agents[b].actor);
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
}

void load_actors(Policy& policy, const std::filesystem::path& dir, const std::string& tag) {
  for (std::size_t b = 0; b < policy.agents.size(); ++b) {
    const auto path = dir / ("actor_" + std::to_string(b) + "_" + tag + ".blob");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    const std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    nn::load_params_into(policy.agents[b].actor, blob);
    policy.agents[b].actor_target = policy.agents[b].actor;
  }
}

void write_episode_log_csv(const std::filesystem::path& path, std::span<const EpisodeLog> log) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  const std::size_t n_agents = log.empty() ? 0 : log.front().local_critic_loss.size();
  f << "episode,mean_reward,mean_cost,mean_hit_ratio,noise_sigma,updates,global_critic_loss";
  for (std::size_t b = 0; b < n_agents; ++b) f << ",local_critic_loss_" << b;
  f << '\n';
  for (const auto& e : log) {
    f << e.episode << ',' << format_double(e.mean_reward) << ',' << format_double(e.mean_cost) << ','
      << format_double(e.mean_hit_ratio) << ',' << format_double(e.noise_sigma) << ',' << e.updates << ','
      << format_double(e.global_critic_loss);
    for (double l : e.local_critic_loss) f << ',' << format_double(l);
    f << '\n';
  }
}

}  // namespace cefmr::maddpg
