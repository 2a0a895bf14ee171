#include "egoeq/config.hpp"

#include <fstream>
#include <set>

namespace egoeq {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  require(obj.is_object(), context + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      throw InputError("unknown key '" + key + "' in " + context);
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError("bad value for '" + key + "': " + e.what());
  }
}

WorldSection parse_world(const json& j) {
  WorldSection w;
  if (j.is_null()) return w;
  check_keys(j, {"kind", "latent_dim", "obs_side", "classes", "noise_sigma",
                 "observation_scale", "class_jitter", "motions", "frame_size",
                 "turn_step", "zoom_step", "shift_step", "episodes",
                 "episode_length", "dt_s", "hold_prob", "seed"},
             "world");
  w.kind = get_or<std::string>(j, "kind", w.kind);
  require(w.kind == "latent_linear" || w.kind == "texture",
          "world.kind must be latent_linear or texture");
  w.episodes = get_or<std::size_t>(j, "episodes", w.episodes);
  w.episode_length = get_or<std::size_t>(j, "episode_length", w.episode_length);
  w.dt_s = get_or<double>(j, "dt_s", w.dt_s);
  w.hold_prob = get_or<double>(j, "hold_prob", w.hold_prob);

  w.latent.latent_dim = get_or<std::size_t>(j, "latent_dim", w.latent.latent_dim);
  w.latent.obs_side = get_or<std::size_t>(j, "obs_side", w.latent.obs_side);
  w.latent.classes = get_or<std::size_t>(j, "classes", w.latent.classes);
  w.latent.noise_sigma = get_or<double>(j, "noise_sigma", w.latent.noise_sigma);
  w.latent.observation_scale =
      get_or<double>(j, "observation_scale", w.latent.observation_scale);
  w.latent.class_jitter = get_or<double>(j, "class_jitter", w.latent.class_jitter);
  if (j.contains("motions")) {
    w.latent.motions = j.at("motions").get<std::vector<std::string>>();
  }
  w.latent.seed = get_or<std::uint64_t>(j, "seed", 0);

  w.texture.frame_size = get_or<std::size_t>(j, "frame_size", w.texture.frame_size);
  w.texture.classes = get_or<std::size_t>(j, "classes", w.texture.classes);
  if (j.contains("motions") && w.kind == "texture") {
    w.texture.motions = j.at("motions").get<std::vector<std::string>>();
  }
  w.texture.turn_step = get_or<double>(j, "turn_step", w.texture.turn_step);
  w.texture.zoom_step = get_or<double>(j, "zoom_step", w.texture.zoom_step);
  w.texture.shift_step = get_or<double>(j, "shift_step", w.texture.shift_step);
  w.texture.seed = w.latent.seed;
  return w;
}

PatternsConfig parse_patterns(const json& j) {
  PatternsConfig p;
  if (j.is_null()) return p;
  check_keys(j, {"k", "g", "max_gap_s", "kmeans_restarts", "declare"}, "patterns");
  p.k = get_or<std::size_t>(j, "k", p.k);
  p.g = get_or<std::size_t>(j, "g", p.g);
  p.max_gap_s = get_or<double>(j, "max_gap_s", p.max_gap_s);
  p.kmeans_restarts = get_or<std::size_t>(j, "kmeans_restarts", p.kmeans_restarts);
  if (j.contains("declare")) {
    p.declare = j.at("declare").get<std::vector<std::vector<double>>>();
  }
  require(p.g >= 1 && p.g <= p.k, "patterns.g must be in [1, patterns.k]");
  require(p.max_gap_s > 0.0, "patterns.max_gap_s must be positive");
  return p;
}

TrainSection parse_train(const json& j, std::size_t world_classes) {
  TrainSection t;
  // paper-style default: 16 for few-class tasks, 128 for many-class tasks
  const std::size_t default_batch = world_classes > 64 ? 128 : 16;
  t.config.batch_size_cls = default_batch;
  t.config.batch_size_pairs = default_batch;
  if (j.is_null()) return t;
  check_keys(j, {"method", "lambda_equiv", "lambda_slow", "margin_equiv",
                 "margin_slow", "temporal_window_s", "learning_rate",
                 "batch_size_cls", "batch_size_pairs", "epochs", "neg_ratio",
                 "momentum", "labels_per_class", "network", "seed"},
             "train");
  t.method = parse_method(get_or<std::string>(j, "method", "equiv"));
  TrainConfig& c = t.config;
  c.lambda_equiv = get_or<double>(j, "lambda_equiv", c.lambda_equiv);
  c.lambda_slow = get_or<double>(j, "lambda_slow", c.lambda_slow);
  c.margin_equiv = get_or<double>(j, "margin_equiv", c.margin_equiv);
  c.margin_slow = get_or<double>(j, "margin_slow", c.margin_slow);
  c.temporal_window_s = get_or<double>(j, "temporal_window_s", c.temporal_window_s);
  c.learning_rate = get_or<double>(j, "learning_rate", c.learning_rate);
  c.batch_size_cls = get_or<std::size_t>(j, "batch_size_cls", c.batch_size_cls);
  c.batch_size_pairs = get_or<std::size_t>(j, "batch_size_pairs", c.batch_size_pairs);
  c.epochs = get_or<std::size_t>(j, "epochs", c.epochs);
  c.neg_ratio = get_or<double>(j, "neg_ratio", c.neg_ratio);
  c.momentum = get_or<double>(j, "momentum", c.momentum);
  t.labels_per_class = get_or<std::size_t>(j, "labels_per_class", t.labels_per_class);
  if (j.contains("network")) {
    require(j.at("network").is_array(), "train.network must be a list of layers");
    for (const auto& entry : j.at("network")) t.network.push_back(entry);
  }
  c.validate();
  return t;
}

EvalSection parse_eval(const json& j) {
  EvalSection e;
  if (j.is_null()) return e;
  check_keys(j, {"repetitions", "top_k", "fit_fraction", "eval_pairs",
                 "test_episodes", "composites", "analogy_queries", "analogy_k"},
             "eval");
  e.repetitions = get_or<std::size_t>(j, "repetitions", e.repetitions);
  if (j.contains("top_k")) e.top_k = j.at("top_k").get<std::vector<std::size_t>>();
  e.fit_fraction = get_or<double>(j, "fit_fraction", e.fit_fraction);
  e.eval_pairs = get_or<std::size_t>(j, "eval_pairs", e.eval_pairs);
  e.test_episodes = get_or<std::size_t>(j, "test_episodes", e.test_episodes);
  if (j.contains("composites")) {
    e.composites = j.at("composites").get<std::vector<std::vector<std::string>>>();
  }
  e.analogy_queries = get_or<std::size_t>(j, "analogy_queries", e.analogy_queries);
  e.analogy_k = get_or<std::size_t>(j, "analogy_k", e.analogy_k);
  require(e.repetitions >= 1, "eval.repetitions must be >= 1");
  require(e.fit_fraction > 0.0 && e.fit_fraction < 1.0,
          "eval.fit_fraction must be in (0,1)");
  for (std::size_t k : e.top_k) require(k >= 1, "eval.top_k entries must be >= 1");
  return e;
}

NbvSection parse_nbv(const json& j) {
  NbvSection n;
  if (j.is_null()) return n;
  check_keys(j, {"k", "candidate_views", "test_episodes", "train_pairs", "features"},
             "nbv");
  if (j.contains("k") && !j.at("k").is_null()) {
    n.k = j.at("k").get<std::size_t>();
  }
  if (j.contains("candidate_views")) {
    n.candidate_views =
        j.at("candidate_views").get<std::vector<std::vector<std::string>>>();
  }
  n.test_episodes = get_or<std::size_t>(j, "test_episodes", n.test_episodes);
  n.train_pairs = get_or<std::size_t>(j, "train_pairs", n.train_pairs);
  n.features = get_or<std::string>(j, "features", n.features);
  require(n.features == "net" || n.features == "oracle" || n.features == "chance",
          "nbv.features must be net, oracle or chance");
  return n;
}

SweepSection parse_sweep(const json& j) {
  SweepSection s;
  if (j.is_null()) return s;
  check_keys(j, {"lr_grid", "lambda_min_exp", "lambda_max_exp", "val_fraction"},
             "sweep");
  if (j.contains("lr_grid")) s.lr_grid = j.at("lr_grid").get<std::vector<double>>();
  s.lambda_min_exp = get_or<double>(j, "lambda_min_exp", s.lambda_min_exp);
  s.lambda_max_exp = get_or<double>(j, "lambda_max_exp", s.lambda_max_exp);
  s.val_fraction = get_or<double>(j, "val_fraction", s.val_fraction);
  require(!s.lr_grid.empty(), "sweep.lr_grid must not be empty");
  require(s.lambda_min_exp <= s.lambda_max_exp,
          "sweep lambda exponents must be ordered");
  return s;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc) {
  check_keys(doc, {"seed", "world", "patterns", "train", "eval", "nbv", "sweep"},
             "config");
  RunConfig cfg;
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.world = parse_world(doc.contains("world") ? doc.at("world") : json());
  if (cfg.world.latent.seed == 0) {
    cfg.world.latent.seed = derive_seed(cfg.seed, 50);
    cfg.world.texture.seed = cfg.world.latent.seed;
  }
  cfg.patterns = parse_patterns(doc.contains("patterns") ? doc.at("patterns") : json());
  const std::size_t classes = cfg.world.kind == "texture" ? cfg.world.texture.classes
                                                          : cfg.world.latent.classes;
  cfg.train = parse_train(doc.contains("train") ? doc.at("train") : json(), classes);
  cfg.train.config.seed = derive_seed(cfg.seed, 60);
  cfg.eval = parse_eval(doc.contains("eval") ? doc.at("eval") : json());
  cfg.nbv = parse_nbv(doc.contains("nbv") ? doc.at("nbv") : json());
  cfg.sweep = parse_sweep(doc.contains("sweep") ? doc.at("sweep") : json());
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw InputError("malformed config JSON " + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

namespace {

std::vector<std::size_t> infer_next_shape(const LayerSpec& s,
                                          const std::vector<std::size_t>& in) {
  switch (s.kind) {
    case LayerKind::FullyConnected:
      return {s.out_dim};
    case LayerKind::Conv:
      return {s.out_channels, (in[1] - s.kernel) / s.stride + 1,
              (in[2] - s.kernel) / s.stride + 1};
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      return {in[0], (in[1] - s.window) / s.stride + 1,
              (in[2] - s.window) / s.stride + 1};
    case LayerKind::ReLU:
      return in;
  }
  throw InputError("unknown layer kind");
}

std::vector<nlohmann::json> expand_presets(const std::vector<nlohmann::json>& network) {
  std::vector<nlohmann::json> out;
  for (const auto& entry : network) {
    if (!entry.contains("preset")) {
      out.push_back(entry);
      continue;
    }
    check_keys(entry, {"preset", "hidden", "feature_dim"}, "network preset");
    const std::string preset = entry.at("preset").get<std::string>();
    if (preset == "norb_fc") {
      // hidden fully connected + ReLU into the feature layer
      const std::size_t hidden = entry.value("hidden", std::size_t{20});
      const std::size_t d = entry.value("feature_dim", std::size_t{100});
      out.push_back({{"kind", "fully_connected"}, {"out", hidden}});
      out.push_back({{"kind", "relu"}});
      out.push_back({{"kind", "fully_connected"}, {"out", d}});
    } else if (preset == "kitti_conv") {
      // conv stack with stride-2 pooling; needs inputs of at least 43x43
      const std::size_t d = entry.value("feature_dim", std::size_t{64});
      out.push_back({{"kind", "conv"}, {"out_channels", 32}, {"kernel", 5}, {"stride", 1}});
      out.push_back({{"kind", "max_pool"}, {"window", 3}, {"stride", 2}});
      out.push_back({{"kind", "relu"}});
      out.push_back({{"kind", "conv"}, {"out_channels", 32}, {"kernel", 5}, {"stride", 1}});
      out.push_back({{"kind", "relu"}});
      out.push_back({{"kind", "avg_pool"}, {"window", 3}, {"stride", 2}});
      out.push_back({{"kind", "conv"}, {"out_channels", 64}, {"kernel", 5}, {"stride", 1}});
      out.push_back({{"kind", "relu"}});
      out.push_back({{"kind", "avg_pool"}, {"window", 3}, {"stride", 2}});
      out.push_back({{"kind", "fully_connected"}, {"out", d}});
    } else if (preset == "tiny_conv") {
      const std::size_t d = entry.value("feature_dim", std::size_t{16});
      out.push_back({{"kind", "conv"}, {"out_channels", 8}, {"kernel", 3}, {"stride", 1}});
      out.push_back({{"kind", "max_pool"}, {"window", 2}, {"stride", 2}});
      out.push_back({{"kind", "relu"}});
      out.push_back({{"kind", "conv"}, {"out_channels", 16}, {"kernel", 3}, {"stride", 1}});
      out.push_back({{"kind", "relu"}});
      out.push_back({{"kind", "avg_pool"}, {"window", 2}, {"stride", 2}});
      out.push_back({{"kind", "fully_connected"}, {"out", d}});
    } else {
      throw InputError("unknown network preset: " + preset);
    }
  }
  return out;
}

}  // namespace

std::vector<std::size_t> input_shape_for(const std::vector<nlohmann::json>& network,
                                         std::size_t h, std::size_t w) {
  const auto expanded = expand_presets(network);
  if (!expanded.empty()) {
    const std::string kind = expanded.front().value("kind", "fully_connected");
    if (kind == "conv" || kind == "max_pool" || kind == "avg_pool") return {1, h, w};
  }
  return {h * w};
}

std::vector<LayerSpec> build_layer_specs(const std::vector<nlohmann::json>& network,
                                         const std::vector<std::size_t>& input_shape,
                                         std::size_t default_feature_dim) {
  std::vector<nlohmann::json> entries = expand_presets(network);
  if (entries.empty()) {
    entries.push_back({{"kind", "fully_connected"}, {"out", 20}});
    entries.push_back({{"kind", "relu"}});
    entries.push_back({{"kind", "fully_connected"}, {"out", default_feature_dim}});
  }
  std::vector<LayerSpec> specs;
  std::vector<std::size_t> shape = input_shape;
  for (const auto& e : entries) {
    const std::string kind = e.value("kind", "");
    LayerSpec s;
    if (kind == "fully_connected") {
      check_keys(e, {"kind", "out"}, "network layer");
      s = LayerSpec::fully_connected(Tensor::shape_product(shape),
                                     e.at("out").get<std::size_t>());
    } else if (kind == "conv") {
      check_keys(e, {"kind", "out_channels", "kernel", "stride"}, "network layer");
      require(shape.size() == 3, "conv layer on non-spatial input");
      s = LayerSpec::conv(shape[0], e.at("out_channels").get<std::size_t>(),
                          e.at("kernel").get<std::size_t>(),
                          e.value("stride", std::size_t{1}));
      require(shape[1] >= s.kernel && shape[2] >= s.kernel,
              "conv kernel larger than activation");
    } else if (kind == "max_pool" || kind == "avg_pool") {
      check_keys(e, {"kind", "window", "stride"}, "network layer");
      require(shape.size() == 3, "pool layer on non-spatial input");
      const auto window = e.at("window").get<std::size_t>();
      const auto stride = e.at("stride").get<std::size_t>();
      s = kind == "max_pool" ? LayerSpec::max_pool(window, stride)
                             : LayerSpec::avg_pool(window, stride);
      require(shape[1] >= s.window && shape[2] >= s.window,
              "pool window larger than activation");
    } else if (kind == "relu") {
      check_keys(e, {"kind"}, "network layer");
      s = LayerSpec::relu();
    } else {
      throw InputError("unknown network layer kind: '" + kind + "'");
    }
    specs.push_back(s);
    shape = infer_next_shape(s, shape);
  }
  return specs;
}

}  // namespace egoeq
