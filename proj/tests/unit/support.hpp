#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "cefmr/nn.hpp"

namespace cefmr::testing {

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Largest relative error between `grads` and central differences of `loss`
// over `probes` random parameters of `net`. `net` is restored afterwards.
inline double max_fd_error(nn::MlpNetwork& net, const nn::GradientBundle& grads,
                           const std::function<double()>& loss, int probes, std::uint64_t seed,
                           double h = 1e-5) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const std::size_t l = std::uniform_int_distribution<std::size_t>(0, net.layer_count() - 1)(rng);
    auto& layer = net.mutable_layer(l);
    const bool bias = std::uniform_int_distribution<int>(0, 3)(rng) == 0;
    double* param;
    double analytic;
    if (bias) {
      const auto i = std::uniform_int_distribution<Eigen::Index>(0, layer.bias.size() - 1)(rng);
      param = &layer.bias(i);
      analytic = grads.bias[l](i);
    } else {
      const auto i = std::uniform_int_distribution<Eigen::Index>(0, layer.weights.rows() - 1)(rng);
      const auto j = std::uniform_int_distribution<Eigen::Index>(0, layer.weights.cols() - 1)(rng);
      param = &layer.weights(i, j);
      analytic = grads.weights[l](i, j);
    }
    const double saved = *param;
    *param = saved + h;
    const double up = loss();
    *param = saved - h;
    const double down = loss();
    *param = saved;
    net.touch();
    worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h)));
  }
  return worst;
}

// A fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cefmr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cefmr::testing

namespace cefmr::testing {

// A full pipeline small enough to finish in seconds.
inline std::string tiny_config_text(const std::filesystem::path& out) {
  return "synthetic.users = 40\n"
         "synthetic.contents = 30\n"
         "partition.n_sbs = 2\n"
         "partition.ues_per_sbs = 2\n"
         "partition.users_per_ue = 6\n"
         "aae.hidden = 16\n"
         "aae.latent = 4\n"
         "aae.discriminator_hidden = 8\n"
         "fl.rounds = 3\n"
         "fl.local_iterations = 4\n"
         "fl.minibatch = 4\n"
         "prediction.neighbors = 3\n"
         "env.capacity = 2\n"
         "workload.requests_per_ue = 3\n"
         "maddpg.episodes = 3\n"
         "maddpg.slots = 10\n"
         "maddpg.minibatch = 8\n"
         "maddpg.hidden = 16\n"
         "maddpg.checkpoint_every = 2\n"
         "test.episodes = 2\n"
         "run.seeds = 1,2\n"
         "run.output_dir = " +
         out.string() + "\n";
}

}  // namespace cefmr::testing
