#ifndef EGOEQ_CONFIG_HPP
#define EGOEQ_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

#include "egoeq/network.hpp"
#include "egoeq/trainer.hpp"
#include "egoeq/worlds.hpp"

#include <json.hpp>

namespace egoeq {

// Run configuration: JSON document with strict schema validation (unknown
// keys rejected before any work starts). Flags only select the command,
// config path and file locations; everything that affects results lives here.

struct PatternsConfig {
  std::size_t k = 6;
  std::size_t g = 3;
  double max_gap_s = 0.15;
  std::size_t kmeans_restarts = 10;
  std::vector<std::vector<double>> declare;  // non-empty bypasses k-means
};

struct WorldSection {
  std::string kind = "latent_linear";
  LatentLinearConfig latent;
  TextureWorldConfig texture;
  std::size_t episodes = 40;
  std::size_t episode_length = 9;
  double dt_s = 0.1;
  double hold_prob = 0.0;
};

struct TrainSection {
  TrainMethod method = TrainMethod::Equiv;
  TrainConfig config;
  std::size_t labels_per_class = 6;
  std::vector<nlohmann::json> network;  // layer spec list (out-dims only)
};

struct EvalSection {
  std::size_t repetitions = 1;
  std::vector<std::size_t> top_k = {1};
  double fit_fraction = 0.5;
  std::size_t eval_pairs = 200;
  std::size_t test_episodes = 40;
  std::vector<std::vector<std::string>> composites;
  std::size_t analogy_queries = 5;
  std::size_t analogy_k = 3;
};

struct NbvSection {
  std::optional<std::size_t> k;  // default: 25, auto-downgraded to 5
  std::vector<std::vector<std::string>> candidate_views;
  std::size_t test_episodes = 200;
  std::size_t train_pairs = 200;
  std::string features = "net";  // net | oracle | chance
};

struct SweepSection {
  std::vector<double> lr_grid = {0.1, 0.01, 0.001, 0.0001};
  double lambda_min_exp = -2.0;
  double lambda_max_exp = 1.0;  // grid steps of 10^0.5
  double val_fraction = 0.5;
};

struct RunConfig {
  std::uint64_t seed = 1;
  WorldSection world;
  PatternsConfig patterns;
  TrainSection train;
  EvalSection eval;
  NbvSection nbv;
  SweepSection sweep;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const nlohmann::json& doc);

// Builds the layer chain from the config's network section (in-dims inferred
// from the input shape) or, when the section is empty, the default hidden-20
// fully connected stack ending at feature_dim.
std::vector<LayerSpec> build_layer_specs(const std::vector<nlohmann::json>& network,
                                         const std::vector<std::size_t>& input_shape,
                                         std::size_t default_feature_dim);

// Per-sample network input shape for frames of the given size: flat (h*w)
// when the chain starts fully connected, (1,h,w) when it starts spatial.
std::vector<std::size_t> input_shape_for(const std::vector<nlohmann::json>& network,
                                         std::size_t h, std::size_t w);

}  // namespace egoeq

#endif
