#include "cefmr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "cefmr/error.hpp"
#include "cefmr/rng.hpp"

namespace cefmr::data {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find("::", start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 2;
  }
}

std::int64_t parse_int(const std::string& field, const std::filesystem::path& path,
                       std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected integer, got '" +
                     field + "'");
  }
}

template <class Fn>
void for_each_line(const std::filesystem::path& path, std::size_t expected_fields, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != expected_fields) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(expected_fields) + " '::'-separated fields, got " +
                       std::to_string(fields.size()));
    }
    fn(fields, line_no);
  }
}

double encode_age(std::int64_t code) { return static_cast<double>(code) / 56.0; }

void sort_interactions(std::vector<Interaction>& v) {
  std::stable_sort(v.begin(), v.end(), [](const Interaction& a, const Interaction& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.content_id < b.content_id;
  });
}

}  // namespace

ContentCatalog::ContentCatalog(std::vector<ContentId> ids) : ids_(std::move(ids)) {
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw SchemaError("catalog: duplicate content id " + std::to_string(ids_[i]));
    }
  }
}

std::size_t ContentCatalog::index_of(ContentId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw SchemaError("unknown content id " + std::to_string(id));
  return it->second;
}

double normalize_stars(double stars) { return (stars - 1.0) / 4.0; }

RatingData load_movielens(const std::filesystem::path& ratings_path,
                          const std::filesystem::path& users_path,
                          const std::filesystem::path& movies_path) {
  RatingData data;

  std::vector<ContentId> movie_ids;
  for_each_line(movies_path, 3, [&](const std::vector<std::string>& f, std::size_t n) {
    movie_ids.push_back(parse_int(f[0], movies_path, n));
  });
  std::sort(movie_ids.begin(), movie_ids.end());
  data.catalog = ContentCatalog(std::move(movie_ids));

  for_each_line(users_path, 5, [&](const std::vector<std::string>& f, std::size_t n) {
    Demographics d;
    if (f[1] == "M") {
      d.gender = 1.0;
    } else if (f[1] == "F") {
      d.gender = 0.0;
    } else {
      throw ParseError(users_path.string() + ":" + std::to_string(n) + ": bad gender '" + f[1] + "'");
    }
    d.age = encode_age(parse_int(f[2], users_path, n));
    d.occupation = static_cast<double>(parse_int(f[3], users_path, n)) / 20.0;
    data.users[parse_int(f[0], users_path, n)] = d;
  });

  for_each_line(ratings_path, 4, [&](const std::vector<std::string>& f, std::size_t n) {
    Interaction it;
    it.user_id = parse_int(f[0], ratings_path, n);
    it.content_id = parse_int(f[1], ratings_path, n);
    const std::int64_t stars = parse_int(f[2], ratings_path, n);
    if (stars < 1 || stars > 5) {
      throw ParseError(ratings_path.string() + ":" + std::to_string(n) + ": rating out of 1..5");
    }
    it.rating = normalize_stars(static_cast<double>(stars));
    it.timestamp = parse_int(f[3], ratings_path, n);
    if (!data.catalog.contains(it.content_id)) {
      throw ParseError(ratings_path.string() + ":" + std::to_string(n) + ": unknown movie id");
    }
    data.interactions.push_back(it);
  });
  sort_interactions(data.interactions);
  return data;
}

RatingData truncate_catalog(const RatingData& data, std::size_t top_n) {
  std::map<ContentId, std::size_t> counts;
  for (ContentId id : data.catalog.ids()) counts[id] = 0;
  for (const auto& it : data.interactions) ++counts[it.content_id];
  std::vector<std::pair<ContentId, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (top_n > 0 && ranked.size() > top_n) ranked.resize(top_n);

  std::vector<ContentId> ids;
  for (const auto& [id, _] : ranked) ids.push_back(id);
  RatingData out;
  out.catalog = ContentCatalog(std::move(ids));
  out.users = data.users;
  for (const auto& it : data.interactions) {
    if (out.catalog.contains(it.content_id)) out.interactions.push_back(it);
  }
  return out;
}

RatingData synthesize(const SyntheticConfig& cfg) {
  if (cfg.contents == 0 || cfg.users == 0 || cfg.taste_clusters == 0) {
    throw ConfigError("synthesize: users, contents and taste_clusters must be positive");
  }
  if (cfg.ratings_per_user > cfg.contents) {
    throw ConfigError("synthesize: ratings_per_user exceeds catalog size");
  }
  Rng rng(cfg.seed);
  std::vector<ContentId> ids(cfg.contents);
  std::iota(ids.begin(), ids.end(), ContentId{1});
  std::shuffle(ids.begin(), ids.end(), rng);
  RatingData data;
  data.catalog = ContentCatalog(ids);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> affinity(cfg.taste_clusters, std::vector<double>(cfg.contents));
  for (auto& row : affinity) {
    for (double& a : row) a = unit(rng);
  }
  const ZipfSampler zipf(data.catalog, cfg.zipf_exponent);
  static constexpr std::int64_t kAgeCodes[] = {1, 18, 25, 35, 45, 50, 56};

  for (std::size_t u = 0; u < cfg.users; ++u) {
    const UserId uid = static_cast<UserId>(u + 1);
    const std::size_t cluster = u % cfg.taste_clusters;
    Demographics d;
    d.gender = unit(rng) < 0.5 ? 0.0 : 1.0;
    d.age = encode_age(kAgeCodes[(cluster + static_cast<std::size_t>(unit(rng) * 2.0)) % 7]);
    d.occupation = static_cast<double>((cluster * 5 + static_cast<std::size_t>(unit(rng) * 5.0)) % 21) / 20.0;
    data.users[uid] = d;

    std::set<ContentId> rated;
    std::int64_t ts = 0;
    while (rated.size() < cfg.ratings_per_user) {
      const ContentId c = zipf(rng);
      if (!rated.insert(c).second) continue;
      const double pref = 0.7 * affinity[cluster][data.catalog.index_of(c)] + 0.3 * unit(rng);
      // 2..5 stars so that every synthetic rating stays nonzero after normalization.
      const double stars = 2.0 + std::round(3.0 * pref);
      data.interactions.push_back({uid, c, normalize_stars(stars), ++ts});
    }
  }
  sort_interactions(data.interactions);
  return data;
}

std::vector<UeDataset> partition(const RatingData& data, const PartitionConfig& cfg) {
  if (cfg.n_sbs < 1 || cfg.ues_per_sbs < 1 || cfg.users_per_ue < 1) {
    throw ConfigError("partition: n_sbs, ues_per_sbs and users_per_ue must be positive");
  }
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw ConfigError("partition: train_fraction must lie in (0, 1)");
  }
  std::set<UserId> user_set;
  for (const auto& it : data.interactions) user_set.insert(it.user_id);
  std::vector<UserId> users(user_set.begin(), user_set.end());
  const std::size_t n_ues = static_cast<std::size_t>(cfg.n_sbs) * cfg.ues_per_sbs;
  if (n_ues * cfg.users_per_ue > users.size()) {
    throw ConfigError("partition: need " + std::to_string(n_ues * cfg.users_per_ue) +
                      " users with interactions, only " + std::to_string(users.size()) +
                      " available");
  }
  Rng rng(cfg.seed);
  std::shuffle(users.begin(), users.end(), rng);

  std::map<UserId, std::vector<const Interaction*>> by_user;
  for (const auto& it : data.interactions) by_user[it.user_id].push_back(&it);

  std::vector<UeDataset> ues;
  for (std::size_t i = 0; i < n_ues; ++i) {
    UeDataset ue;
    ue.ue_id = static_cast<int>(i);
    ue.sbs_id = static_cast<int>(i / cfg.ues_per_sbs);
    ue.user_ids.assign(users.begin() + static_cast<std::ptrdiff_t>(i * cfg.users_per_ue),
                       users.begin() + static_cast<std::ptrdiff_t>((i + 1) * cfg.users_per_ue));
    std::sort(ue.user_ids.begin(), ue.user_ids.end());
    std::vector<Interaction> all;
    for (UserId u : ue.user_ids) {
      for (const Interaction* it : by_user[u]) all.push_back(*it);
      auto d = data.users.find(u);
      ue.demographics[u] = d == data.users.end() ? Demographics{} : d->second;
    }
    Rng split_rng(derive_seed(cfg.seed, {0x5117, i}));
    std::shuffle(all.begin(), all.end(), split_rng);
    const auto n_train =
        static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(all.size())));
    ue.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    ue.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    sort_interactions(ue.train);
    sort_interactions(ue.test);
    ues.push_back(std::move(ue));
  }
  return ues;
}

nlohmann::json partition_manifest(std::span<const UeDataset> ues) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& ue : ues) {
    out.push_back({{"ue_id", ue.ue_id},
                   {"sbs_id", ue.sbs_id},
                   {"user_ids", ue.user_ids},
                   {"train_interactions", ue.train.size()},
                   {"test_interactions", ue.test.size()}});
  }
  return out;
}

RatingMatrix build_rating_matrix(const UeDataset& ue, Split split, const ContentCatalog& catalog) {
  RatingMatrix m;
  m.user_index = ue.user_ids;
  m.content_index = catalog.ids();
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.user_index.size()),
                                   static_cast<Eigen::Index>(m.content_index.size()));
  std::unordered_map<UserId, Eigen::Index> row_of;
  for (std::size_t r = 0; r < m.user_index.size(); ++r) row_of[m.user_index[r]] = static_cast<Eigen::Index>(r);
  const auto& source = split == Split::train ? ue.train : ue.test;
  for (const auto& it : source) {
    auto row = row_of.find(it.user_id);
    if (row == row_of.end()) {
      throw SchemaError("interaction references user " + std::to_string(it.user_id) +
                        " outside UE " + std::to_string(ue.ue_id));
    }
    m.values(row->second, static_cast<Eigen::Index>(catalog.index_of(it.content_id))) = it.rating;
  }
  return m;
}

ZipfSampler::ZipfSampler(const ContentCatalog& catalog, double exponent) : ids_(catalog.ids()) {
  if (ids_.empty()) throw ConfigError("ZipfSampler: empty catalog");
  if (!(exponent >= 0.0)) throw ConfigError("ZipfSampler: exponent must be >= 0");
  probs_.resize(ids_.size());
  double total = 0.0;
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    probs_[r] = std::pow(static_cast<double>(r + 1), -exponent);
    total += probs_[r];
  }
  for (double& p : probs_) p /= total;
  dist_ = std::discrete_distribution<std::size_t>(probs_.begin(), probs_.end());
}

namespace {

std::vector<ContentId> replay_pool(const UeDataset& ue) {
  std::set<ContentId> pool;
  for (const auto& it : ue.test) {
    if (it.rating > 0.0) pool.insert(it.content_id);
  }
  return {pool.begin(), pool.end()};
}

}  // namespace

RequestBatch sample_requests(const UeDataset& ue, std::int64_t slot, std::size_t n_requests,
                             RequestMode mode, const ContentCatalog& catalog,
                             double zipf_exponent, std::uint64_t seed) {
  RequestBatch batch;
  batch.slot = slot;
  batch.ue_ids.push_back(ue.ue_id);
  batch.requests.emplace_back();
  if (n_requests == 0) return batch;
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(ue.ue_id), static_cast<std::uint64_t>(slot)}));
  auto& out = batch.requests.back();
  out.reserve(n_requests);
  if (mode == RequestMode::zipf) {
    const ZipfSampler zipf(catalog, zipf_exponent);
    for (std::size_t i = 0; i < n_requests; ++i) out.push_back(zipf(rng));
  } else {
    const auto pool = replay_pool(ue);
    if (pool.empty()) {
      throw DataError("UE " + std::to_string(ue.ue_id) + " has no rated test contents to replay");
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < n_requests; ++i) out.push_back(pool[pick(rng)]);
  }
  for (ContentId c : out) {
    if (!catalog.contains(c)) throw SchemaError("request outside catalog: " + std::to_string(c));
  }
  return batch;
}

Workload::Workload(std::span<const UeDataset> ues, const ContentCatalog& catalog, WorkloadConfig cfg)
    : zipf_(catalog, cfg.zipf_exponent), cfg_(cfg) {
  for (const auto& ue : ues) {
    UeSource s{ue.ue_id, ue.sbs_id, {}};
    if (cfg_.mode == RequestMode::test_replay) {
      s.replay_pool = replay_pool(ue);
      if (s.replay_pool.empty()) {
        throw DataError("UE " + std::to_string(ue.ue_id) + " has no rated test contents to replay");
      }
    }
    n_sbs_ = std::max(n_sbs_, ue.sbs_id + 1);
    sources_.push_back(std::move(s));
  }
}

std::vector<std::vector<ContentId>> Workload::per_sbs(std::int64_t slot) const {
  std::vector<std::vector<ContentId>> out(static_cast<std::size_t>(n_sbs_));
  for (const auto& s : sources_) {
    Rng rng(derive_seed(cfg_.seed, {static_cast<std::uint64_t>(s.ue_id), static_cast<std::uint64_t>(slot)}));
    auto& dst = out[static_cast<std::size_t>(s.sbs_id)];
    if (cfg_.mode == RequestMode::zipf) {
      for (std::size_t i = 0; i < cfg_.requests_per_ue; ++i) dst.push_back(zipf_(rng));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, s.replay_pool.size() - 1);
      for (std::size_t i = 0; i < cfg_.requests_per_ue; ++i) dst.push_back(s.replay_pool[pick(rng)]);
    }
  }
  return out;
}

Workload Workload::with_seed(std::uint64_t seed) const {
  Workload copy = *this;
  copy.cfg_.seed = seed;
  return copy;
}

}  // namespace cefmr::data
