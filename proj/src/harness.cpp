#include "cefmr/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "cefmr/error.hpp"

namespace cefmr::harness {
namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool uses_prediction(baselines::PolicyKind k) {
  using baselines::PolicyKind;
  return k == PolicyKind::efnrl || k == PolicyKind::tfmadrl || k == PolicyKind::cefmr;
}

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

StageSeeds StageSeeds::from(std::uint64_t s) {
  return {derive_seed(s, {101}), derive_seed(s, {102}), derive_seed(s, {103}), derive_seed(s, {104}),
          derive_seed(s, {105}), derive_seed(s, {106}), derive_seed(s, {107}), derive_seed(s, {108})};
}

PreparedData ingest(const config::ExperimentConfig& cfg, std::uint64_t run_seed) {
  const auto seeds = StageSeeds::from(run_seed);
  PreparedData out;
  if (cfg.source == config::DataSource::movielens) {
    const fs::path dir = cfg.dataset_path;
    if (!fs::is_directory(dir)) throw ConfigError("dataset.path '" + dir.string() + "' is not a directory");
    out.data = data::load_movielens(dir / "ratings.dat", dir / "users.dat", dir / "movies.dat");
  } else {
    data::SyntheticConfig s = cfg.synthetic;
    s.seed = seeds.data;
    out.data = data::synthesize(s);
  }
  if (cfg.top_contents > 0) out.data = data::truncate_catalog(out.data, cfg.top_contents);
  if (out.data.catalog.size() < cfg.popular_count()) {
    throw ConfigError("catalog has " + std::to_string(out.data.catalog.size()) + " contents, F_p is " +
                      std::to_string(cfg.popular_count()));
  }
  data::PartitionConfig p = cfg.partition;
  p.seed = seeds.partition;
  out.ues = data::partition(out.data, p);
  return out;
}

FlOutputs train_fl(const config::ExperimentConfig& cfg, const PreparedData& prepared, std::uint64_t run_seed) {
  const auto seeds = StageSeeds::from(run_seed);
  FlOutputs out;
  aae::Architecture arch = cfg.aae;
  arch.catalog_size = prepared.data.catalog.size();
  out.locals.resize(prepared.ues.size());
  for (int b = 0; b < cfg.partition.n_sbs; ++b) {
    std::vector<fl::UeClient> clients;
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < prepared.ues.size(); ++i) {
      const auto& ue = prepared.ues[i];
      if (ue.sbs_id != b) continue;
      const auto train = data::build_rating_matrix(ue, data::Split::train, prepared.data.catalog);
      clients.emplace_back(ue.ue_id, train.values);
      positions.push_back(i);
    }
    fl::FlConfig f = cfg.fl;
    f.seed = derive_seed(seeds.fl, {static_cast<std::uint64_t>(b)});
    auto result = fl::run_fl(aae::make_model(arch, derive_seed(seeds.model, {static_cast<std::uint64_t>(b)})),
                             clients, f);
    for (std::size_t k = 0; k < clients.size(); ++k) {
      out.locals[positions[k]] = clients[k].has_local_model() ? clients[k].local_model() : result.global;
    }
    out.globals.push_back(std::move(result.global));
    out.logs.push_back(std::move(result.log));
    out.traffic.push_back(std::move(result.traffic));
  }
  return out;
}

std::vector<predict::PopularSet> predict_popular(const config::ExperimentConfig& cfg, const PreparedData& prepared,
                                                 const FlOutputs& models) {
  predict::PredictionConfig p = cfg.prediction;
  p.popular_count = cfg.popular_count();
  std::vector<std::vector<std::vector<data::ContentId>>> lists(static_cast<std::size_t>(cfg.partition.n_sbs));
  for (std::size_t i = 0; i < prepared.ues.size(); ++i) {
    const auto& ue = prepared.ues[i];
    const auto& model = cfg.model_source == config::ModelSource::local
                            ? models.locals.at(i)
                            : models.globals.at(static_cast<std::size_t>(ue.sbs_id));
    const auto test = data::build_rating_matrix(ue, data::Split::test, prepared.data.catalog);
    // Only the predicted id list leaves the UE.
    lists.at(static_cast<std::size_t>(ue.sbs_id)).push_back(predict::predict_ue(model, test, ue.demographics, p).interested);
  }
  std::vector<predict::PopularSet> out;
  for (const auto& l : lists) out.push_back(predict::sbs_merge_popular(l, p.popular_count));
  return out;
}

std::vector<predict::PopularSet> catalog_popular(const config::ExperimentConfig& cfg, const PreparedData& prepared) {
  predict::PopularSet p;
  const auto& ids = prepared.data.catalog.ids();
  p.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cfg.popular_count()));
  p.votes.assign(p.ids.size(), 0);
  return std::vector<predict::PopularSet>(static_cast<std::size_t>(cfg.partition.n_sbs), p);
}

maddpg::CachingTask make_task(const config::ExperimentConfig& cfg, const PreparedData& prepared,
                              std::span<const predict::PopularSet> popular, std::uint64_t run_seed) {
  const auto seeds = StageSeeds::from(run_seed);
  data::WorkloadConfig w = cfg.workload;
  w.seed = seeds.workload;
  auto workload = std::make_shared<const data::Workload>(prepared.ues, prepared.data.catalog, w);
  const std::int64_t stride = std::max(cfg.maddpg.slots, cfg.slots_for_test());

  maddpg::CachingTask task;
  for (const auto& p : popular) task.popular.push_back(p.ids);
  task.capacity = cfg.capacity;
  // Ids are scaled by the largest id so that encoded states stay in [0, 1]
  // for catalogs whose ids are not 1..N.
  const auto& ids = prepared.data.catalog.ids();
  task.catalog_size = static_cast<std::size_t>(std::max<data::ContentId>(*std::max_element(ids.begin(), ids.end()), 1));
  task.costs = cfg.costs;
  task.topology = env::Topology::fully_connected(cfg.partition.n_sbs);
  task.requests_per_slot = static_cast<double>(cfg.partition.ues_per_sbs) * static_cast<double>(w.requests_per_ue);
  task.requests = [workload, stride](int episode, int slot) {
    return workload->per_sbs(static_cast<std::int64_t>(episode) * stride + slot);
  };
  return task;
}

void write_metrics_csv(const fs::path& path, std::span<const MetricsRecord> records) {
  std::ostringstream os;
  os << "scheme,seed,C,B,episode,mean_cost,mean_reward,mean_ch\n";
  for (const auto& r : records) {
    os << r.scheme << ',' << r.seed << ',' << r.capacity << ',' << r.n_sbs << ',' << r.episode << ','
       << fmt(r.mean_cost) << ',' << fmt(r.mean_reward) << ',' << fmt(r.mean_ch) << '\n';
  }
  write_file(path, os.str());
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  std::getline(is, line);
  if (line != "scheme,seed,C,B,episode,mean_cost,mean_reward,mean_ch") {
    throw ParseError(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricsRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 8) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 8 fields");
    try {
      out.push_back({c[0], std::stoull(c[1]), std::stoull(c[2]), std::stoi(c[3]), std::stoi(c[4]), std::stod(c[5]),
                     std::stod(c[6]), std::stod(c[7])});
    } catch (const std::logic_error&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

std::string git_blob_sha1(std::string_view content) {
  std::string framed = "blob " + std::to_string(content.size());
  framed.push_back('\0');
  framed.append(content);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(framed.data(), framed.size(), md.data(), &len, EVP_sha1(), nullptr) != 1) {
    throw Error("sha1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

std::vector<MetricsRecord> run_single(const config::ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir,
                                      nlohmann::json& run_info) {
  using baselines::PolicyKind;
  const auto seeds = StageSeeds::from(seed);
  fs::create_directories(dir);
  const PreparedData prepared = ingest(cfg, seed);
  write_file(dir / "partition.json", data::partition_manifest(prepared.ues).dump(2) + "\n");

  std::vector<predict::PopularSet> popular;
  if (uses_prediction(cfg.scheme)) {
    config::ExperimentConfig c = cfg;
    if (cfg.scheme == PolicyKind::tfmadrl) c.fl = baselines::tfmadrl_fl_config(cfg.fl);
    const FlOutputs models = train_fl(c, prepared, seed);
    std::ostringstream rounds;
    for (std::size_t b = 0; b < models.logs.size(); ++b) {
      const auto path = dir / ("fl_rounds_sbs" + std::to_string(b) + ".csv");
      fl::write_round_log_csv(path, models.logs[b], static_cast<int>(b));
      write_file(dir / "models" / ("global_sbs" + std::to_string(b) + ".blob"), aae::serialize_model(models.globals[b]));
    }
    for (std::size_t i = 0; i < prepared.ues.size(); ++i) {
      write_file(dir / "models" / ("local_ue" + std::to_string(prepared.ues[i].ue_id) + ".blob"),
                 aae::serialize_model(models.locals[i]));
    }
    popular = predict_popular(c, prepared, models);
  } else {
    popular = catalog_popular(cfg, prepared);
  }
  write_file(dir / "popular.json", predict::popular_sets_to_json(popular).dump(2) + "\n");

  const auto task = make_task(cfg, prepared, popular, seed);
  maddpg::TestResult result;
  switch (cfg.scheme) {
    case PolicyKind::cefmr:
    case PolicyKind::tfmadrl: {
      maddpg::TrainConfig t = cfg.maddpg;
      t.seed = seeds.maddpg;
      maddpg::TrainHooks hooks;
      hooks.checkpoint_dir = dir / "checkpoints";
      const auto trained = maddpg::train(task, t, hooks);
      maddpg::write_episode_log_csv(dir / "maddpg_train.csv", trained.log);
      maddpg::save_actors(trained.policy, dir / "checkpoints", "final");
      run_info["reward_scale"] = trained.reward_scale;
      result = maddpg::test(task, trained.policy, cfg.test_episodes, cfg.slots_for_test(), seeds.test);
      break;
    }
    case PolicyKind::efnrl: {
      auto policy = baselines::make_efnrl(popular, cfg.capacity);
      result = baselines::evaluate(*policy, task, cfg.test_episodes, cfg.slots_for_test(), seeds.test);
      break;
    }
    default: {
      baselines::SchemeParams p;
      p.catalog = prepared.data.catalog.ids();
      p.n_sbs = cfg.partition.n_sbs;
      p.capacity = cfg.capacity;
      p.epsilon = cfg.epsilon;
      p.cumulative_counts = cfg.cumulative_counts;
      p.seed = seeds.baseline;
      std::unique_ptr<baselines::CachePolicy> policy;
      if (cfg.scheme == PolicyKind::random) policy = baselines::make_random(p);
      else if (cfg.scheme == PolicyKind::c_eps_greedy) policy = baselines::make_c_eps_greedy(p);
      else if (cfg.scheme == PolicyKind::thompson) policy = baselines::make_thompson(p);
      else policy = baselines::make_bsg(p);
      result = baselines::evaluate(*policy, task, cfg.test_episodes, cfg.slots_for_test(), seeds.test);
      break;
    }
  }
  {
    env::SlotLogWriter slots(dir / "test_slots.csv");
    slots.write(result.slots);
  }

  std::vector<MetricsRecord> records;
  for (const auto& e : result.log) {
    records.push_back({std::string(baselines::to_string(cfg.scheme)), seed, cfg.capacity, cfg.partition.n_sbs,
                       e.episode, e.mean_cost, e.mean_reward, e.mean_hit_ratio});
  }
  write_metrics_csv(dir / "metrics.csv", records);
  run_info["seed"] = seed;
  run_info["dir"] = dir.filename().string();
  run_info["metrics_sha1"] = git_blob_sha1(read_file(dir / "metrics.csv"));
  return records;
}

}  // namespace

RunResult run_experiment(const config::ExperimentConfig& cfg) {
  cfg.validate();
  RunResult out;
  out.output_dir = cfg.output_dir;
  fs::create_directories(cfg.output_dir);
  const std::string text = config::to_text(cfg);
  nlohmann::json manifest;
  manifest["config"] = text;
  manifest["config_sha1"] = git_blob_sha1(text);
  manifest["scheme"] = baselines::to_string(cfg.scheme);
  manifest["aggregation"] = fl::to_string(cfg.fl.aggregation);
  manifest["runs"] = nlohmann::json::array();
  for (std::uint64_t seed : cfg.seeds) {
    nlohmann::json info;
    auto records = run_single(cfg, seed, cfg.output_dir / ("seed_" + std::to_string(seed)), info);
    out.records.insert(out.records.end(), records.begin(), records.end());
    manifest["runs"].push_back(info);
  }
  write_metrics_csv(cfg.output_dir / "metrics.csv", out.records);
  manifest["metrics_sha1"] = git_blob_sha1(read_file(cfg.output_dir / "metrics.csv"));
  write_file(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

RunResult rerun_manifest(const fs::path& manifest, const fs::path& output_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  if (!j.contains("config") || !j["config"].is_string()) throw SchemaError(manifest.string() + ": no config text");
  const std::string text = j["config"].get<std::string>();
  if (j.contains("config_sha1") && j["config_sha1"] != git_blob_sha1(text)) {
    throw SchemaError(manifest.string() + ": config hash mismatch");
  }
  auto cfg = config::parse_config(text, manifest.string());
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  return run_experiment(cfg);
}

SweepAxis sweep_axis_from_string(std::string_view name) {
  if (name == "cache_capacity" || name == "C") return SweepAxis::cache_capacity;
  if (name == "n_sbs" || name == "B") return SweepAxis::n_sbs;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

std::string_view to_string(SweepAxis a) { return a == SweepAxis::cache_capacity ? "cache_capacity" : "n_sbs"; }

std::vector<SweepRow> sweep(const config::ExperimentConfig& cfg, SweepAxis axis, std::span<const double> values,
                            std::span<const baselines::PolicyKind> schemes) {
  std::vector<SweepRow> rows;
  for (double v : values) {
    if (v < 1.0 || v != std::floor(v)) throw ConfigError("sweep values must be positive integers");
    for (auto scheme : schemes) {
      config::ExperimentConfig c = cfg;
      if (axis == SweepAxis::cache_capacity) {
        c.capacity = static_cast<std::size_t>(v);
      } else {
        c.partition.n_sbs = static_cast<int>(v);
      }
      c.scheme = scheme;
      c.output_dir = cfg.output_dir / (std::string(to_string(axis)) + "_" + std::to_string(static_cast<long>(v))) /
                     std::string(baselines::to_string(scheme));
      const auto run = run_experiment(c);

      std::map<std::uint64_t, std::array<std::vector<double>, 3>> per_seed;
      for (const auto& r : run.records) {
        auto& s = per_seed[r.seed];
        s[0].push_back(r.mean_cost);
        s[1].push_back(r.mean_reward);
        s[2].push_back(r.mean_ch);
      }
      std::array<std::vector<double>, 3> seed_means;
      for (const auto& [_, s] : per_seed) {
        for (int k = 0; k < 3; ++k) seed_means[static_cast<std::size_t>(k)].push_back(mean_of(s[static_cast<std::size_t>(k)]));
      }
      SweepRow row;
      row.axis = std::string(to_string(axis));
      row.value = v;
      row.scheme = std::string(baselines::to_string(scheme));
      row.runs = per_seed.size();
      row.mean_cost = mean_of(seed_means[0]);
      row.std_cost = sample_std(seed_means[0]);
      row.mean_reward = mean_of(seed_means[1]);
      row.std_reward = sample_std(seed_means[1]);
      row.mean_ch = mean_of(seed_means[2]);
      row.std_ch = sample_std(seed_means[2]);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_sweep_csv(const fs::path& path, std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "axis,value,scheme,runs,mean_cost,std_cost,mean_reward,std_reward,mean_ch,std_ch\n";
  for (const auto& r : rows) {
    os << r.axis << ',' << fmt(r.value) << ',' << r.scheme << ',' << r.runs << ',' << fmt(r.mean_cost) << ','
       << fmt(r.std_cost) << ',' << fmt(r.mean_reward) << ',' << fmt(r.std_reward) << ',' << fmt(r.mean_ch) << ','
       << fmt(r.std_ch) << '\n';
  }
  write_file(path, os.str());
}

std::vector<SweepRow> read_sweep_csv(const fs::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  std::getline(is, line);
  std::vector<SweepRow> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 10) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 10 fields");
    try {
      out.push_back({c[0], std::stod(c[1]), c[2], std::stoull(c[3]), std::stod(c[4]), std::stod(c[5]),
                     std::stod(c[6]), std::stod(c[7]), std::stod(c[8]), std::stod(c[9])});
    } catch (const std::logic_error&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

void write_series_csv(const fs::path& path, std::span<const Series> series) {
  std::ostringstream os;
  os << "series,x,y\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) os << s.name << ',' << fmt(s.x[i]) << ',' << fmt(s.y[i]) << '\n';
  }
  write_file(path, os.str());
}

void write_line_svg(const fs::path& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, std::span<const Series> series) {
  constexpr double W = 720, H = 440, L = 80, R = 160, T = 40, B = 60;
  static constexpr std::array<const char*, 8> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0;
    const double yv = y0 + (y1 - y0) * k / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << std::setprecision(4)
       << xv << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (T + H - B) / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % kColors.size()];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      if (!std::isfinite(series[k].x[i]) || !std::isfinite(series[k].y[i])) continue;
      os << std::setprecision(6) << px(series[k].x[i]) << ',' << py(series[k].y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << series[k].name << "</text>\n";
  }
  os << "</svg>\n";
  write_file(path, os.str());
}

std::vector<Series> episode_series(std::span<const MetricsRecord> records, std::string_view metric) {
  auto pick = [&](const MetricsRecord& r) {
    if (metric == "mean_cost") return r.mean_cost;
    if (metric == "mean_reward") return r.mean_reward;
    if (metric == "mean_ch") return r.mean_ch;
    throw ConfigError("unknown metric '" + std::string(metric) + "'");
  };
  std::map<std::string, std::map<int, std::vector<double>>> grouped;
  for (const auto& r : records) grouped[r.scheme][r.episode].push_back(pick(r));
  std::vector<Series> out;
  for (const auto& [scheme, by_episode] : grouped) {
    Series s;
    s.name = scheme;
    for (const auto& [ep, vals] : by_episode) {
      s.x.push_back(ep);
      s.y.push_back(mean_of(vals));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Series> sweep_series(std::span<const SweepRow> rows, std::string_view metric) {
  std::map<std::string, Series> by_scheme;
  for (const auto& r : rows) {
    double y = 0.0;
    if (metric == "mean_cost") y = r.mean_cost;
    else if (metric == "mean_reward") y = r.mean_reward;
    else if (metric == "mean_ch") y = r.mean_ch;
    else throw ConfigError("unknown metric '" + std::string(metric) + "'");
    auto& s = by_scheme[r.scheme];
    s.name = r.scheme;
    s.x.push_back(r.value);
    s.y.push_back(y);
  }
  std::vector<Series> out;
  for (auto& [_, s] : by_scheme) out.push_back(std::move(s));
  return out;
}

std::vector<fs::path> emit_plots(const fs::path& dir, std::span<const MetricsRecord> records,
                                 std::span<const SweepRow> sweep_rows) {
  std::vector<fs::path> written;
  struct Plot {
    const char* stem;
    const char* metric;
    const char* label;
  };
  static constexpr std::array<Plot, 3> kEpisode{{{"reward_vs_episode", "mean_reward", "mean reward per slot"},
                                                 {"cost_vs_episode", "mean_cost", "total cost per slot"},
                                                 {"ch_vs_episode", "mean_ch", "cache hit ratio"}}};
  for (const auto& p : kEpisode) {
    const auto series = episode_series(records, p.metric);
    write_series_csv(dir / (std::string(p.stem) + ".csv"), series);
    write_line_svg(dir / (std::string(p.stem) + ".svg"), p.label, "test episode", p.label, series);
    written.push_back(dir / (std::string(p.stem) + ".csv"));
    written.push_back(dir / (std::string(p.stem) + ".svg"));
  }
  if (!sweep_rows.empty()) {
    const std::string axis = sweep_rows.front().axis;
    const std::string x_label = axis == "cache_capacity" ? "cache capacity C" : "number of SBSs B";
    static constexpr std::array<Plot, 2> kSweep{{{"cost_vs_", "mean_cost", "total cost per slot"},
                                                 {"ch_vs_", "mean_ch", "cache hit ratio"}}};
    for (const auto& p : kSweep) {
      const auto series = sweep_series(sweep_rows, p.metric);
      const std::string stem = std::string(p.stem) + axis;
      write_series_csv(dir / (stem + ".csv"), series);
      write_line_svg(dir / (stem + ".svg"), p.label, x_label, p.label, series);
      written.push_back(dir / (stem + ".csv"));
      written.push_back(dir / (stem + ".svg"));
    }
  }
  return written;
}

std::vector<fs::path> emit_training_plots(const fs::path& dir, std::span<const maddpg::EpisodeLog> log) {
  Series reward{"reward", {}, {}};
  Series global{"global_critic", {}, {}};
  std::vector<Series> locals;
  for (const auto& e : log) {
    reward.x.push_back(e.episode);
    reward.y.push_back(e.mean_reward);
    global.x.push_back(e.episode);
    global.y.push_back(e.global_critic_loss);
    if (locals.size() < e.local_critic_loss.size()) locals.resize(e.local_critic_loss.size());
    for (std::size_t b = 0; b < e.local_critic_loss.size(); ++b) {
      locals[b].name = "local_critic_" + std::to_string(b);
      locals[b].x.push_back(e.episode);
      locals[b].y.push_back(e.local_critic_loss[b]);
    }
  }
  std::vector<Series> losses{global};
  losses.insert(losses.end(), locals.begin(), locals.end());
  const std::vector<Series> rewards{reward};
  write_series_csv(dir / "train_reward.csv", rewards);
  write_line_svg(dir / "train_reward.svg", "training reward", "episode", "mean reward per slot", rewards);
  write_series_csv(dir / "train_loss.csv", losses);
  write_line_svg(dir / "train_loss.svg", "critic losses", "episode", "mean squared TD error", losses);
  return {dir / "train_reward.csv", dir / "train_reward.svg", dir / "train_loss.csv", dir / "train_loss.svg"};
}

}  // namespace cefmr::harness
