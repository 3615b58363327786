#include "cefmr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cefmr/error.hpp"

namespace cefmr::config {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("key '" + std::string(key) + "': cannot read '" + std::string(value) + "' as " +
                    std::string(expected));
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  // from_chars for double is incomplete in older libstdc++; strtod is fine
  // for config text.
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto piece = trim(v.substr(start, comma == std::string_view::npos ? v.size() - start : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}
std::string fmt(bool v) { return v ? "true" : "false"; }
template <class T>
  requires std::is_integral_v<T>
std::string fmt(T v) {
  return std::to_string(v);
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

struct Entry {
  std::string key;
  std::string description;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CEFMR_INT(KEY, FIELD, TYPE, DESC)                                                              \
  Entry {                                                                                              \
    KEY, DESC, [](ExperimentConfig& c, std::string_view v) { c.FIELD = parse_integer<TYPE>(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                                         \
  }
#define CEFMR_REAL(KEY, FIELD, DESC)                                                            \
  Entry {                                                                                       \
    KEY, DESC, [](ExperimentConfig& c, std::string_view v) { c.FIELD = parse_double(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                                  \
  }
#define CEFMR_BOOL(KEY, FIELD, DESC)                                                          \
  Entry {                                                                                     \
    KEY, DESC, [](ExperimentConfig& c, std::string_view v) { c.FIELD = parse_bool(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                                \
  }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back({"run.scheme", "random|c_eps_greedy|thompson|bsg|efnrl|tfmadrl|cefmr",
                 [](ExperimentConfig& c, std::string_view v) { c.scheme = baselines::policy_from_string(v); },
                 [](const ExperimentConfig& c) { return std::string(baselines::to_string(c.scheme)); }});
    e.push_back({"run.seeds", "comma-separated run seeds",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.seeds.clear();
                   for (const auto& s : split_list(v)) c.seeds.push_back(parse_integer<std::uint64_t>("run.seeds", s));
                 },
                 [](const ExperimentConfig& c) { return join(c.seeds); }});
    e.push_back({"run.output_dir", "directory for manifests, logs, checkpoints and metrics",
                 [](ExperimentConfig& c, std::string_view v) { c.output_dir = std::string(v); },
                 [](const ExperimentConfig& c) { return c.output_dir.string(); }});

    e.push_back({"dataset.source", "synthetic|movielens",
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "synthetic") c.source = DataSource::synthetic;
                   else if (v == "movielens") c.source = DataSource::movielens;
                   else bad_value("dataset.source", v, "synthetic or movielens");
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.source == DataSource::synthetic ? "synthetic" : "movielens");
                 }});
    e.push_back({"dataset.path", "MovieLens 1M directory (ratings.dat, users.dat, movies.dat)",
                 [](ExperimentConfig& c, std::string_view v) { c.dataset_path = std::string(v); },
                 [](const ExperimentConfig& c) { return c.dataset_path.string(); }});
    e.push_back(CEFMR_INT("dataset.top_contents", top_contents, std::size_t, "keep the N most-rated contents, 0 = all"));
    e.push_back(CEFMR_INT("synthetic.users", synthetic.users, std::size_t, "synthetic user count"));
    e.push_back(CEFMR_INT("synthetic.contents", synthetic.contents, std::size_t, "synthetic catalog size"));
    e.push_back(CEFMR_INT("synthetic.ratings_per_user", synthetic.ratings_per_user, std::size_t,
                          "distinct contents rated per synthetic user"));
    e.push_back(CEFMR_REAL("synthetic.zipf_exponent", synthetic.zipf_exponent, "popularity skew of synthetic ratings"));
    e.push_back(CEFMR_INT("synthetic.taste_clusters", synthetic.taste_clusters, std::size_t,
                          "number of synthetic taste groups"));
    e.push_back(CEFMR_INT("partition.n_sbs", partition.n_sbs, int, "B, number of SBSs"));
    e.push_back(CEFMR_INT("partition.ues_per_sbs", partition.ues_per_sbs, int, "UEs attached to each SBS"));
    e.push_back(CEFMR_INT("partition.users_per_ue", partition.users_per_ue, std::size_t, "users whose data each UE holds"));
    e.push_back(CEFMR_REAL("partition.train_fraction", partition.train_fraction, "share of each UE's interactions used for training"));

    e.push_back(CEFMR_INT("aae.hidden", aae.hidden, std::size_t, "encoder/decoder hidden width"));
    e.push_back(CEFMR_INT("aae.latent", aae.latent, std::size_t, "latent dimension"));
    e.push_back(CEFMR_INT("aae.discriminator_hidden", aae.discriminator_hidden, std::size_t, "discriminator hidden width"));

    e.push_back(CEFMR_INT("fl.rounds", fl.rounds, int, "R_max federated rounds"));
    e.push_back(CEFMR_INT("fl.local_iterations", fl.local.iterations, int, "e, local iterations per round"));
    e.push_back(CEFMR_INT("fl.minibatch", fl.local.minibatch_size, std::size_t, "rows sampled per local iteration"));
    e.push_back(CEFMR_REAL("fl.learning_rate", fl.local.learning_rate, "eta for local AAE training and literal aggregation"));
    e.push_back({"fl.aggregation", "weighted_average|literal_equation",
                 [](ExperimentConfig& c, std::string_view v) { c.fl.aggregation = fl::aggregation_from_string(v); },
                 [](const ExperimentConfig& c) { return std::string(fl::to_string(c.fl.aggregation)); }});
    e.push_back(CEFMR_BOOL("fl.normalize_by_ue_count", fl.normalize_by_ue_count, "divide the elastic coefficient by n_b"));
    e.push_back(CEFMR_BOOL("fl.elastic", fl.elastic, "elastic blending; false pins alpha to 1"));

    e.push_back(CEFMR_INT("prediction.active_divisor", prediction.active_divisor, std::size_t, "m, top 1/m users are active"));
    e.push_back(CEFMR_INT("prediction.neighbors", prediction.neighbors, std::size_t, "K nearest neighbors"));
    e.push_back(CEFMR_INT("prediction.popular_count", prediction.popular_count, std::size_t, "F_p, 0 = 2C"));
    e.push_back({"prediction.model_source", "local|global",
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "local") c.model_source = ModelSource::local;
                   else if (v == "global") c.model_source = ModelSource::global;
                   else bad_value("prediction.model_source", v, "local or global");
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.model_source == ModelSource::local ? "local" : "global");
                 }});

    e.push_back(CEFMR_INT("env.capacity", capacity, std::size_t, "C, cache slots per SBS"));
    e.push_back(CEFMR_REAL("env.alpha", costs.alpha, "local fetch cost"));
    e.push_back(CEFMR_REAL("env.beta", costs.beta, "adjacent-SBS fetch cost"));
    e.push_back(CEFMR_REAL("env.chi", costs.chi, "content-server fetch cost"));
    e.push_back(CEFMR_REAL("env.delta", costs.delta, "replacement cost"));

    e.push_back({"workload.mode", "zipf|test_replay",
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "zipf") c.workload.mode = data::RequestMode::zipf;
                   else if (v == "test_replay") c.workload.mode = data::RequestMode::test_replay;
                   else bad_value("workload.mode", v, "zipf or test_replay");
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.workload.mode == data::RequestMode::zipf ? "zipf" : "test_replay");
                 }});
    e.push_back(CEFMR_INT("workload.requests_per_ue", workload.requests_per_ue, std::size_t, "requests per UE per slot"));
    e.push_back(CEFMR_REAL("workload.zipf_exponent", workload.zipf_exponent, "s of the Zipf request law"));

    e.push_back(CEFMR_INT("maddpg.episodes", maddpg.episodes, int, "R_max training episodes"));
    e.push_back(CEFMR_INT("maddpg.slots", maddpg.slots, int, "T slots per episode"));
    e.push_back(CEFMR_REAL("maddpg.gamma", maddpg.gamma, "discount factor"));
    e.push_back(CEFMR_REAL("maddpg.tau", maddpg.tau, "soft update rate"));
    e.push_back(CEFMR_REAL("maddpg.learning_rate", maddpg.learning_rate, "eta for critics and actors"));
    e.push_back(CEFMR_INT("maddpg.minibatch", maddpg.minibatch, std::size_t, "M"));
    e.push_back(CEFMR_INT("maddpg.replay_capacity", maddpg.replay_capacity, std::size_t, "replay buffer size"));
    e.push_back(CEFMR_REAL("maddpg.noise_sigma", maddpg.noise_sigma, "initial Gaussian exploration std"));
    e.push_back(CEFMR_REAL("maddpg.noise_decay", maddpg.noise_decay, "per-episode multiplicative noise decay"));
    e.push_back(CEFMR_REAL("maddpg.reward_scale", maddpg.reward_scale, "reward multiplier for learning, 0 = 1/(chi * requests per SBS)"));
    e.push_back(CEFMR_REAL("maddpg.actor_clip_norm", maddpg.actor_clip_norm, "actor gradient norm cap, 0 = off"));
    e.push_back({"maddpg.hidden", "comma-separated hidden widths of actors and critics",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.maddpg.shape.hidden.clear();
                   for (const auto& s : split_list(v)) {
                     c.maddpg.shape.hidden.push_back(parse_integer<std::size_t>("maddpg.hidden", s));
                   }
                 },
                 [](const ExperimentConfig& c) { return join(c.maddpg.shape.hidden); }});
    e.push_back(CEFMR_INT("maddpg.checkpoint_every", maddpg.checkpoint_every, int, "episodes between actor checkpoints"));
    e.push_back(CEFMR_INT("test.episodes", test_episodes, int, "E' evaluation episodes"));
    e.push_back(CEFMR_INT("test.slots", test_slots, int, "slots per evaluation episode, 0 = maddpg.slots"));

    e.push_back(CEFMR_REAL("baseline.epsilon", epsilon, "exploration probability of C-eps-greedy"));
    e.push_back(CEFMR_BOOL("baseline.cumulative_counts", cumulative_counts, "C-eps-greedy counts accumulate across slots"));
    return e;
  }();
  return entries;
}

#undef CEFMR_INT
#undef CEFMR_REAL
#undef CEFMR_BOOL

const Entry& find_entry(std::string_view key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown key '" + std::string(key) + "'");
}

}  // namespace

std::size_t ExperimentConfig::popular_count() const {
  return prediction.popular_count == 0 ? 2 * capacity : prediction.popular_count;
}

void ExperimentConfig::validate() const {
  if (source == DataSource::movielens && dataset_path.empty()) {
    throw ConfigError("dataset.path is required for movielens data");
  }
  if (partition.n_sbs < 1 || partition.ues_per_sbs < 1 || partition.users_per_ue < 2) {
    throw ConfigError("partition: need n_sbs >= 1, ues_per_sbs >= 1, users_per_ue >= 2");
  }
  if (!(partition.train_fraction > 0.0 && partition.train_fraction < 1.0)) {
    throw ConfigError("partition.train_fraction must lie in (0, 1)");
  }
  if (aae.hidden == 0 || aae.latent == 0 || aae.discriminator_hidden == 0) throw ConfigError("aae widths must be positive");
  fl.validate();
  predict::PredictionConfig p = prediction;
  p.popular_count = popular_count();
  p.validate();
  if (capacity < 1 || capacity >= popular_count()) {
    throw ConfigError("need 0 < C < F_p (C=" + std::to_string(capacity) + ", F_p=" + std::to_string(popular_count()) + ")");
  }
  costs.validate();
  if (workload.requests_per_ue < 1) throw ConfigError("workload.requests_per_ue must be positive");
  if (workload.zipf_exponent < 0.0) throw ConfigError("workload.zipf_exponent must be non-negative");
  maddpg.validate();
  if (maddpg.shape.hidden.empty()) throw ConfigError("maddpg.hidden needs at least one layer");
  if (test_episodes < 0 || test_slots < 0) throw ConfigError("test episodes and slots must be non-negative");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("baseline.epsilon must lie in [0, 1]");
  if (seeds.empty()) throw ConfigError("run.seeds is empty");
  if (source == DataSource::synthetic && synthetic.contents < popular_count()) {
    throw ConfigError("synthetic catalog smaller than F_p");
  }
}

std::vector<KeyInfo> describe_keys() {
  const ExperimentConfig defaults;
  std::vector<KeyInfo> out;
  for (const auto& e : registry()) out.push_back({e.key, e.get(defaults), e.description});
  return out;
}

void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  find_entry(key).set(cfg, trim(value));
}

std::string get_value(const ExperimentConfig& cfg, std::string_view key) { return find_entry(key).get(cfg); }

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(origin) + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> to_pairs(const ExperimentConfig& cfg) {
  ExperimentConfig resolved = cfg;
  resolved.prediction.popular_count = cfg.popular_count();
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : registry()) out.emplace_back(e.key, e.get(resolved));
  return out;
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_pairs(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace cefmr::config
