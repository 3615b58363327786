#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "cefmr/error.hpp"
#include "cefmr/harness.hpp"

namespace fs = std::filesystem;
using namespace cefmr;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "key = value experiment file");
  app->add_option("--set", c.overrides, "override one key, e.g. --set env.capacity=4")->take_all();
}

config::ExperimentConfig load(const Common& c) {
  config::ExperimentConfig cfg = c.config_path.empty() ? config::ExperimentConfig{} : config::load_config(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config::set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::uint64_t run_seed(const Common& c, const config::ExperimentConfig& cfg) {
  return c.seed_given ? c.seed : cfg.seeds.front();
}

fs::path run_dir(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.output_dir / ("seed_" + std::to_string(seed));
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << s;
}

harness::FlOutputs load_models(const config::ExperimentConfig& cfg, const harness::PreparedData& prepared,
                               const fs::path& dir) {
  harness::FlOutputs m;
  for (int b = 0; b < cfg.partition.n_sbs; ++b) {
    m.globals.push_back(aae::deserialize_model(slurp(dir / "models" / ("global_sbs" + std::to_string(b) + ".blob"))));
  }
  for (const auto& ue : prepared.ues) {
    m.locals.push_back(aae::deserialize_model(slurp(dir / "models" / ("local_ue" + std::to_string(ue.ue_id) + ".blob"))));
  }
  return m;
}

std::vector<predict::PopularSet> load_popular(const fs::path& dir) {
  try {
    return predict::popular_sets_from_json(nlohmann::json::parse(slurp(dir / "popular.json")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "popular.json").string() + ": " + e.what());
  }
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

void print_records(const std::vector<harness::MetricsRecord>& records) {
  std::map<std::pair<std::string, std::uint64_t>, std::array<double, 4>> agg;
  for (const auto& r : records) {
    auto& a = agg[{r.scheme, r.seed}];
    a[0] += r.mean_cost;
    a[1] += r.mean_reward;
    a[2] += r.mean_ch;
    a[3] += 1;
  }
  for (const auto& [k, a] : agg) {
    std::cout << k.first << " seed=" << k.second << " cost=" << a[0] / a[3] << " reward=" << a[1] / a[3]
              << " ch=" << a[2] / a[3] << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative edge caching simulator"};
  app.require_subcommand(1);

  Common ingest_c, fl_c, predict_c, train_c, eval_c, base_c, run_c, sweep_c, keys_c;
  auto seed_opt = [](CLI::App* sub, Common& c) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&c](std::uint64_t s) { c.seed = s, c.seed_given = true; }, "run seed (default: first of run.seeds)");
  };

  auto* ingest = app.add_subcommand("ingest", "load or synthesize ratings and partition users across UEs");
  add_common(ingest, ingest_c);
  seed_opt(ingest, ingest_c);

  auto* train_fl = app.add_subcommand("train-fl", "elastic federated AAE training per SBS");
  add_common(train_fl, fl_c);
  seed_opt(train_fl, fl_c);

  auto* predict = app.add_subcommand("predict", "predict popular contents per SBS from trained models");
  add_common(predict, predict_c);
  seed_opt(predict, predict_c);

  auto* train_maddpg = app.add_subcommand("train-maddpg", "train cooperative caching agents on the predicted sets");
  add_common(train_maddpg, train_c);
  seed_opt(train_maddpg, train_c);

  std::string tag = "final";
  auto* evaluate = app.add_subcommand("evaluate", "test trained actors without exploration");
  add_common(evaluate, eval_c);
  seed_opt(evaluate, eval_c);
  evaluate->add_option("--tag", tag, "checkpoint tag, e.g. final or ep100");

  std::string scheme;
  auto* baseline = app.add_subcommand("baseline", "evaluate a comparison scheme end to end");
  add_common(baseline, base_c);
  baseline->add_option("--scheme", scheme, "random|c_eps_greedy|thompson|bsg|efnrl|tfmadrl")->required();

  std::string manifest;
  auto* run = app.add_subcommand("run", "full pipeline for every configured seed");
  add_common(run, run_c);
  run->add_option("--manifest", manifest, "re-run the configuration recorded in a manifest");
  std::string rerun_dir;
  run->add_option("--output", rerun_dir, "output directory for a manifest re-run");

  std::string axis = "cache_capacity", values, schemes;
  auto* sweep = app.add_subcommand("sweep", "sweep cache capacity or SBS count");
  add_common(sweep, sweep_c);
  sweep->add_option("--axis", axis, "cache_capacity|n_sbs");
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--schemes", schemes, "comma-separated schemes (default: run.scheme)");

  std::string metrics_path, sweep_path, train_log, plot_dir;
  auto* plot = app.add_subcommand("plot", "write plot data and SVG charts");
  plot->add_option("--metrics", metrics_path, "metrics.csv from run, baseline or evaluate");
  plot->add_option("--sweep", sweep_path, "sweep.csv from sweep");
  plot->add_option("-o,--out", plot_dir, "output directory")->required();

  auto* keys = app.add_subcommand("keys", "list configuration keys, resolved against -c and --set");
  add_common(keys, keys_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto cfg = load(ingest_c);
      const auto seed = run_seed(ingest_c, cfg);
      const auto prepared = harness::ingest(cfg, seed);
      const auto dir = run_dir(cfg, seed);
      spit(dir / "partition.json", data::partition_manifest(prepared.ues).dump(2) + "\n");
      std::cout << "users=" << prepared.data.users.size() << " contents=" << prepared.data.catalog.size()
                << " interactions=" << prepared.data.interactions.size() << " ues=" << prepared.ues.size() << "\n"
                << "wrote " << (dir / "partition.json").string() << "\n";
    } else if (*train_fl) {
      auto cfg = load(fl_c);
      if (cfg.scheme == baselines::PolicyKind::tfmadrl) cfg.fl = baselines::tfmadrl_fl_config(cfg.fl);
      const auto seed = run_seed(fl_c, cfg);
      const auto dir = run_dir(cfg, seed);
      const auto prepared = harness::ingest(cfg, seed);
      const auto models = harness::train_fl(cfg, prepared, seed);
      for (std::size_t b = 0; b < models.globals.size(); ++b) {
        fl::write_round_log_csv(dir / ("fl_rounds_sbs" + std::to_string(b) + ".csv"), models.logs[b], static_cast<int>(b));
        spit(dir / "models" / ("global_sbs" + std::to_string(b) + ".blob"), aae::serialize_model(models.globals[b]));
        std::size_t bytes = models.traffic[b].uplink_bytes;
        std::cout << "sbs " << b << ": " << models.logs[b].size() << " UE updates, " << bytes << " uplink bytes\n";
      }
      for (std::size_t i = 0; i < prepared.ues.size(); ++i) {
        spit(dir / "models" / ("local_ue" + std::to_string(prepared.ues[i].ue_id) + ".blob"),
             aae::serialize_model(models.locals[i]));
      }
    } else if (*predict) {
      const auto cfg = load(predict_c);
      const auto seed = run_seed(predict_c, cfg);
      const auto dir = run_dir(cfg, seed);
      const auto prepared = harness::ingest(cfg, seed);
      const auto popular = harness::predict_popular(cfg, prepared, load_models(cfg, prepared, dir));
      spit(dir / "popular.json", predict::popular_sets_to_json(popular).dump(2) + "\n");
      for (std::size_t b = 0; b < popular.size(); ++b) {
        std::cout << "p_" << b << ":";
        for (auto id : popular[b].ids) std::cout << ' ' << id;
        std::cout << "\n";
      }
    } else if (*train_maddpg) {
      const auto cfg = load(train_c);
      const auto seed = run_seed(train_c, cfg);
      const auto dir = run_dir(cfg, seed);
      const auto prepared = harness::ingest(cfg, seed);
      const auto task = harness::make_task(cfg, prepared, load_popular(dir), seed);
      maddpg::TrainConfig t = cfg.maddpg;
      t.seed = harness::StageSeeds::from(seed).maddpg;
      maddpg::TrainHooks hooks;
      hooks.checkpoint_dir = dir / "checkpoints";
      const auto trained = maddpg::train(task, t, hooks);
      maddpg::save_actors(trained.policy, dir / "checkpoints", "final");
      maddpg::write_episode_log_csv(dir / "maddpg_train.csv", trained.log);
      harness::emit_training_plots(dir / "plots", trained.log);
      if (!trained.log.empty()) {
        const auto& last = trained.log.back();
        std::cout << "episodes=" << trained.log.size() << " last reward=" << last.mean_reward
                  << " ch=" << last.mean_hit_ratio << "\n";
      }
    } else if (*evaluate) {
      const auto cfg = load(eval_c);
      const auto seed = run_seed(eval_c, cfg);
      const auto dir = run_dir(cfg, seed);
      const auto prepared = harness::ingest(cfg, seed);
      const auto task = harness::make_task(cfg, prepared, load_popular(dir), seed);
      maddpg::Policy policy;
      policy.dims = task.dims();
      for (int b = 0; b < policy.dims.n_sbs; ++b) policy.agents.push_back(maddpg::make_agent(policy.dims, cfg.maddpg.shape, 0));
      maddpg::load_actors(policy, dir / "checkpoints", tag);
      const auto result = maddpg::test(task, policy, cfg.test_episodes, cfg.slots_for_test(),
                                       harness::StageSeeds::from(seed).test);
      env::SlotLogWriter slots(dir / "test_slots.csv");
      slots.write(result.slots);
      std::vector<harness::MetricsRecord> records;
      for (const auto& e : result.log) {
        records.push_back({std::string(baselines::to_string(cfg.scheme)), seed, cfg.capacity, cfg.partition.n_sbs,
                           e.episode, e.mean_cost, e.mean_reward, e.mean_hit_ratio});
      }
      harness::write_metrics_csv(dir / "metrics.csv", records);
      print_records(records);
    } else if (*baseline) {
      auto cfg = load(base_c);
      cfg.scheme = baselines::policy_from_string(scheme);
      if (cfg.scheme == baselines::PolicyKind::cefmr) throw ConfigError("baseline: cefmr is not a baseline; use run");
      print_records(harness::run_experiment(cfg).records);
    } else if (*run) {
      const auto result = manifest.empty() ? harness::run_experiment(load(run_c))
                                           : harness::rerun_manifest(manifest, rerun_dir);
      print_records(result.records);
      std::cout << "wrote " << (result.output_dir / "manifest.json").string() << "\n";
    } else if (*sweep) {
      const auto cfg = load(sweep_c);
      std::vector<baselines::PolicyKind> kinds;
      std::stringstream ss(schemes);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) kinds.push_back(baselines::policy_from_string(item));
      }
      if (kinds.empty()) kinds.push_back(cfg.scheme);
      const auto ax = harness::sweep_axis_from_string(axis);
      const auto vals = parse_values(values);
      const auto rows = harness::sweep(cfg, ax, vals, kinds);
      harness::write_sweep_csv(cfg.output_dir / "sweep.csv", rows);
      for (const auto& r : rows) {
        std::cout << r.axis << '=' << r.value << ' ' << r.scheme << " cost=" << r.mean_cost << "±" << r.std_cost
                  << " ch=" << r.mean_ch << "±" << r.std_ch << "\n";
      }
    } else if (*plot) {
      std::vector<harness::MetricsRecord> records;
      std::vector<harness::SweepRow> rows;
      if (!metrics_path.empty()) records = harness::read_metrics_csv(metrics_path);
      if (!sweep_path.empty()) rows = harness::read_sweep_csv(sweep_path);
      for (const auto& p : harness::emit_plots(plot_dir, records, rows)) std::cout << p.string() << "\n";
    } else if (*keys) {
      const auto cfg = load(keys_c);
      for (const auto& k : config::describe_keys()) {
        std::cout << k.key << " = " << config::get_value(cfg, k.key) << "    # " << k.description << "\n";
      }
    }
  } catch (const cefmr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
