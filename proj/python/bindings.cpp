#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cefmr/aae.hpp"
#include "cefmr/cache_env.hpp"
#include "cefmr/config.hpp"
#include "cefmr/error.hpp"
#include "cefmr/harness.hpp"

namespace py = pybind11;
using namespace cefmr;

namespace {

py::dict record_to_dict(const harness::MetricsRecord& r) {
  py::dict d;
  d["scheme"] = r.scheme;
  d["seed"] = r.seed;
  d["C"] = r.capacity;
  d["B"] = r.n_sbs;
  d["episode"] = r.episode;
  d["mean_cost"] = r.mean_cost;
  d["mean_reward"] = r.mean_reward;
  d["mean_ch"] = r.mean_ch;
  return d;
}

py::list records_to_list(const std::vector<harness::MetricsRecord>& records) {
  py::list out;
  for (const auto& r : records) out.append(record_to_dict(r));
  return out;
}

env::FetchTally tally_from(std::int64_t local, std::int64_t adjacent, std::int64_t server, std::int64_t replaced) {
  env::FetchTally t;
  t.local_hits = local;
  t.adjacent_hits = adjacent;
  t.cs_fetches = server;
  t.replacements = replaced;
  return t;
}

}  // namespace

PYBIND11_MODULE(_cefmr, m) {
  m.doc() = "Cooperative edge caching with elastic federated learning and multi-agent RL.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<config::ExperimentConfig>(m, "Config")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return config::parse_config(text); }, py::arg("text"))
      .def_static("load", &config::load_config, py::arg("path"))
      .def("get", &config::get_value, py::arg("key"))
      .def("set", &config::set_value, py::arg("key"), py::arg("value"))
      .def("validate", &config::ExperimentConfig::validate)
      .def("to_text", [](const config::ExperimentConfig& c) { return config::to_text(c); })
      .def("items", [](const config::ExperimentConfig& c) { return config::to_pairs(c); })
      .def("__repr__", [](const config::ExperimentConfig& c) {
        return "<Config scheme=" + config::get_value(c, "run.scheme") + " C=" + config::get_value(c, "env.capacity") +
               ">";
      });

  m.def("describe_keys", [] {
    py::list out;
    for (const auto& k : config::describe_keys()) out.append(py::make_tuple(k.key, k.default_value, k.description));
    return out;
  });

  m.def(
      "run_experiment",
      [](const config::ExperimentConfig& cfg) {
        harness::RunResult r;
        {
          py::gil_scoped_release release;
          r = harness::run_experiment(cfg);
        }
        return records_to_list(r.records);
      },
      py::arg("config"));
  m.def(
      "rerun_manifest",
      [](const std::filesystem::path& manifest, const std::filesystem::path& output_dir) {
        harness::RunResult r;
        {
          py::gil_scoped_release release;
          r = harness::rerun_manifest(manifest, output_dir);
        }
        return records_to_list(r.records);
      },
      py::arg("manifest"), py::arg("output_dir") = std::filesystem::path());
  m.def(
      "read_metrics_csv", [](const std::filesystem::path& p) { return records_to_list(harness::read_metrics_csv(p)); },
      py::arg("path"));
  m.def("git_blob_sha1", [](const py::bytes& b) { return harness::git_blob_sha1(std::string(b)); }, py::arg("content"));

  m.def(
      "slot_cost",
      [](std::int64_t local, std::int64_t adjacent, std::int64_t server, std::int64_t replaced,
         const config::ExperimentConfig& cfg) {
        return env::slot_cost(tally_from(local, adjacent, server, replaced), cfg.costs);
      },
      py::arg("local_hits"), py::arg("adjacent_hits"), py::arg("cs_fetches"), py::arg("replacements"),
      py::arg("config") = config::ExperimentConfig());
  m.def(
      "saved_cost_reward",
      [](std::int64_t local, std::int64_t adjacent, std::int64_t server, std::int64_t replaced,
         const config::ExperimentConfig& cfg) {
        return env::saved_cost_reward(tally_from(local, adjacent, server, replaced), cfg.costs);
      },
      py::arg("local_hits"), py::arg("adjacent_hits"), py::arg("cs_fetches"), py::arg("replacements"),
      py::arg("config") = config::ExperimentConfig());

  m.def(
      "optimal_placement",
      [](const std::vector<std::vector<env::ContentId>>& popular,
         const std::vector<std::map<env::ContentId, double>>& request_probs, std::size_t capacity,
         double requests_per_slot) {
        const auto topo = env::Topology::fully_connected(static_cast<int>(popular.size()));
        const auto r = env::brute_force_optimal_placement(popular, request_probs, capacity, requests_per_slot,
                                                          env::CostParams{}, topo);
        return py::make_tuple(r.caches, r.expected_reward);
      },
      py::arg("popular"), py::arg("request_probs"), py::arg("capacity"), py::arg("requests_per_slot"));

  py::class_<aae::AaeModel>(m, "AaeModel")
      .def_static(
          "create",
          [](std::size_t catalog, std::size_t hidden, std::size_t latent, std::size_t disc, std::uint64_t seed) {
            aae::Architecture a;
            a.catalog_size = catalog;
            a.hidden = hidden;
            a.latent = latent;
            a.discriminator_hidden = disc;
            return aae::make_model(a, seed);
          },
          py::arg("catalog_size"), py::arg("hidden") = 128, py::arg("latent") = 32,
          py::arg("discriminator_hidden") = 64, py::arg("seed") = 1)
      .def_property_readonly("catalog_size", &aae::AaeModel::catalog_size)
      .def("reconstruct", [](const aae::AaeModel& mdl, const Eigen::MatrixXd& rows) {
        return Eigen::MatrixXd(aae::reconstruct_batch(mdl, rows.transpose()).transpose());
      })
      .def("mean_squared_error", &aae::mean_squared_error)
      .def(
          "train",
          [](aae::AaeModel& mdl, const Eigen::MatrixXd& rows, int iterations, std::size_t minibatch, double lr,
             std::uint64_t seed) {
            aae::LocalTrainConfig c;
            c.iterations = iterations;
            c.minibatch_size = minibatch;
            c.learning_rate = lr;
            aae::local_train(mdl, rows, c, seed);
          },
          py::arg("rows"), py::arg("iterations") = 20, py::arg("minibatch") = 16, py::arg("learning_rate") = 0.01,
          py::arg("seed") = 1)
      .def("to_bytes", [](const aae::AaeModel& mdl) { return py::bytes(aae::serialize_model(mdl)); })
      .def_static("from_bytes", [](const py::bytes& b) { return aae::deserialize_model(std::string(b)); });
}
