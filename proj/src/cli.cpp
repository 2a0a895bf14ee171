#include "egoeq/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "egoeq/checkpoint.hpp"
#include "egoeq/evaluator.hpp"
#include "egoeq/gradcheck.hpp"
#include "egoeq/nbv.hpp"
#include "egoeq/trainer.hpp"
#include "egoeq/worlds.hpp"

#include <CLI11.hpp>

namespace egoeq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- shared helpers ---------------------------------------------------------

void write_json_file(const std::string& path, const json& doc) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path);
  out << doc.dump(2) << "\n";
  require(out.good(), "failed writing " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw InputError("malformed JSON in " + path + ": " + e.what());
  }
  return doc;
}

struct WorldHandle {
  std::string kind;
  std::optional<LatentLinearWorld> latent;
  std::optional<TextureWorld> texture;

  std::size_t classes() const {
    return kind == "texture" ? texture->config().classes : latent->config().classes;
  }
  const std::vector<std::string>& motions() const {
    return kind == "texture" ? texture->config().motions : latent->config().motions;
  }
  std::size_t frame_side() const {
    return kind == "texture" ? texture->config().frame_size
                             : latent->config().obs_side;
  }
};

WorldHandle world_from_config(const WorldSection& w) {
  WorldHandle h;
  h.kind = w.kind;
  if (w.kind == "texture") {
    h.texture.emplace(w.texture);
  } else {
    h.latent.emplace(w.latent);
  }
  return h;
}

WorldHandle world_from_manifest(const json& manifest, const std::string& where) {
  require(manifest.contains("world"), "dataset manifest lacks a world section: " + where);
  const json& w = manifest.at("world");
  WorldHandle h;
  h.kind = w.value("kind", "");
  if (h.kind == "latent_linear") {
    LatentLinearConfig c;
    c.latent_dim = w.at("latent_dim").get<std::size_t>();
    c.obs_side = w.at("obs_side").get<std::size_t>();
    c.classes = w.at("classes").get<std::size_t>();
    c.noise_sigma = w.at("noise_sigma").get<double>();
    c.observation_scale = w.value("observation_scale", c.observation_scale);
    c.observation_offset = w.value("observation_offset", c.observation_offset);
    c.class_jitter = w.value("class_jitter", c.class_jitter);
    c.motions = w.at("motions").get<std::vector<std::string>>();
    c.seed = w.at("seed").get<std::uint64_t>();
    h.latent.emplace(c);
  } else if (h.kind == "texture") {
    TextureWorldConfig c;
    c.frame_size = w.at("frame_size").get<std::size_t>();
    c.classes = w.at("classes").get<std::size_t>();
    c.motions = w.at("motions").get<std::vector<std::string>>();
    c.turn_step = w.value("turn_step", c.turn_step);
    c.zoom_step = w.value("zoom_step", c.zoom_step);
    c.shift_step = w.value("shift_step", c.shift_step);
    c.seed = w.at("seed").get<std::uint64_t>();
    h.texture.emplace(c);
  } else {
    throw InputError("dataset manifest has unknown world kind: " + where);
  }
  return h;
}

Dataset gen_world_dataset(const WorldHandle& world, const WorldSection& section,
                          std::uint64_t seed) {
  if (world.kind == "texture") {
    TextureDatasetOptions opts;
    opts.episodes = section.episodes;
    opts.episode_length = section.episode_length;
    opts.dt = section.dt_s;
    opts.hold_prob = section.hold_prob;
    return gen_texture_dataset(*world.texture, opts, seed);
  }
  EpisodeDatasetOptions opts;
  opts.episodes = section.episodes;
  opts.episode_length = section.episode_length;
  opts.dt = section.dt_s;
  opts.hold_prob = section.hold_prob;
  return gen_latent_dataset(*world.latent, opts, seed);
}

MotionPairSet world_motion_pairs(const WorldHandle& world,
                                 std::span<const std::string> motions,
                                 std::size_t count, std::uint64_t seed,
                                 bool with_noise) {
  if (world.kind == "texture") {
    return gen_texture_motion_pairs(*world.texture, motions, count, seed);
  }
  return gen_motion_pairs(*world.latent, motions, count, seed, with_noise);
}

MotionPatternModel pattern_model_for(const RunConfig& cfg, const Dataset& ds,
                                     const std::string& patterns_path) {
  if (!cfg.patterns.declare.empty()) return declare_patterns(cfg.patterns.declare);
  if (!patterns_path.empty()) {
    const json doc = read_json_file(patterns_path);
    return pattern_model_from_json(doc.contains("model") ? doc.at("model") : doc);
  }
  // mine in-line with the config's clustering settings
  const auto deltas = build_pairs(ds.poses, cfg.patterns.max_gap_s);
  require(!deltas.empty(), "no pose pairs within max_gap_s; cannot mine patterns");
  KmeansOptions opts;
  opts.restarts = cfg.patterns.kmeans_restarts;
  MotionPatternModel model =
      kmeans(deltas, cfg.patterns.k, derive_seed(cfg.seed, 52), opts);
  return retain_largest(std::move(model), cfg.patterns.g);
}

std::size_t default_feature_dim(const WorldHandle& world) {
  return world.kind == "texture" ? 16 : world.latent->config().latent_dim;
}

struct TrainedArtifacts {
  Network net;
  EquivMapSet maps;
  ClassifierHead head;
  TrainResult result;
  std::optional<MotionPatternModel> patterns;
};

// Shared by cmd_train, the eval repetition protocol and the sweep: trains one
// model per the config's method on the given dataset.
TrainedArtifacts train_once(const RunConfig& cfg, const Dataset& ds,
                            const WorldHandle& world,
                            const std::string& patterns_path,
                            std::uint64_t seed_override, double lr_override = 0.0,
                            double lambda_override = -1.0) {
  const TrainMethod method = cfg.train.method;
  const std::uint64_t seed = seed_override;

  const auto input_shape =
      input_shape_for(cfg.train.network, ds.frame_height(), ds.frame_width());
  const auto specs =
      build_layer_specs(cfg.train.network, input_shape, default_feature_dim(world));
  TrainedArtifacts art{Network(input_shape, specs)};
  init_xavier(art.net, derive_seed(seed, 0));
  const std::size_t d = art.net.feature_dim();

  TrainConfig tc = cfg.train.config;
  tc.seed = seed;
  if (lr_override > 0.0) tc.learning_rate = lr_override;
  if (lambda_override >= 0.0) tc.lambda_equiv = lambda_override;

  const bool needs_equiv =
      method == TrainMethod::Equiv || method == TrainMethod::EquivDrlim;
  const bool needs_slow = method == TrainMethod::Temporal ||
                          method == TrainMethod::Drlim ||
                          method == TrainMethod::EquivDrlim;

  std::vector<EquivSample> equiv_samples;
  if (needs_equiv) {
    art.patterns = pattern_model_for(cfg, ds, patterns_path);
    equiv_samples = mine_equiv_samples(ds, *art.patterns, cfg.patterns.max_gap_s);
    require(!equiv_samples.empty(),
            "no training pairs with retained motion patterns");
    art.maps = init_equiv_maps(art.patterns->pattern_count(), d, derive_seed(seed, 4));
  }
  std::vector<TimedPair> timed;
  if (needs_slow) {
    timed = build_timed_pairs(ds, tc.temporal_window_s, 3.0, seed);
    require(!timed.empty(), "no temporal pairs for the slowness regularizer");
  }

  if (cfg.train.labels_per_class == 0) {
    // unsupervised mode: no classifier stack
    if (needs_equiv) {
      art.result = train_unsupervised(art.net, art.maps, ds.frames, equiv_samples, tc);
    } else if (needs_slow) {
      const PairDistance dist =
          method == TrainMethod::Temporal ? PairDistance::L1 : PairDistance::L2;
      art.result = train_slowness(art.net, ds.frames, timed, dist, tc);
    } else {
      throw InputError("labels_per_class=0 requires a pair-based method");
    }
    return art;
  }

  const auto labeled = pick_labeled_subset(ds, cfg.train.labels_per_class, seed);
  art.head = init_classifier(d, ds.classes, derive_seed(seed, 5));
  art.result = train_joint(art.net, needs_equiv ? &art.maps : nullptr, art.head,
                           ds.frames, labeled, equiv_samples, timed, method, tc);
  return art;
}

Tensor features_of_frames(const Network& net, const std::vector<Tensor>& frames) {
  return compute_features_all(net, frames);
}

// Seeded disjoint split of n indices: the first floor(n*fraction) shuffled
// indices fit the map, the rest measure it.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> fit_measure_split(
    std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const std::size_t cut = static_cast<std::size_t>(static_cast<double>(n) * fraction);
  require(cut >= 1 && cut < n, "fit/measure split degenerate");
  return {{idx.begin(), idx.begin() + cut}, {idx.begin() + cut, idx.end()}};
}

Tensor rows_subset(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out({rows.size(), m.dim(1)});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.data() + r * m.dim(1));
  }
  return out;
}

char fmt_buf[256];

std::string fmt(const char* format, double v) {
  std::snprintf(fmt_buf, sizeof fmt_buf, format, v);
  return fmt_buf;
}

}  // namespace

// --- gen-world ----------------------------------------------------------------

void cmd_gen_world(const RunConfig& cfg, const std::string& out_dir) {
  WorldHandle world = world_from_config(cfg.world);
  Dataset ds = gen_world_dataset(world, cfg.world, derive_seed(cfg.seed, 51));
  fs::create_directories(out_dir);
  write_dataset(out_dir, ds);
}

// --- mine -----------------------------------------------------------------------

void cmd_mine(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& out_dir) {
  Dataset ds = read_dataset(dataset_dir);
  MotionPatternModel model = pattern_model_for(cfg, ds, "");
  json doc;
  doc["model"] = pattern_model_to_json(model);
  doc["k"] = cfg.patterns.k;
  doc["g"] = cfg.patterns.g;
  doc["max_gap_s"] = cfg.patterns.max_gap_s;
  doc["declared"] = !cfg.patterns.declare.empty();
  fs::create_directories(out_dir);
  write_json_file((fs::path(out_dir) / "pattern_model.json").string(), doc);
}

// --- train ----------------------------------------------------------------------

void cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& patterns_path, const std::string& out_dir) {
  Dataset ds = read_dataset(dataset_dir);
  WorldHandle world = world_from_manifest(ds.manifest, dataset_dir);
  TrainedArtifacts art =
      train_once(cfg, ds, world, patterns_path, derive_seed(cfg.seed, 60));
  fs::create_directories(out_dir);
  save_checkpoint((fs::path(out_dir) / "checkpoint").string(), art.net,
                  art.maps.count() > 0 ? &art.maps : nullptr,
                  !art.head.weight.empty() ? &art.head : nullptr,
                  art.patterns.has_value() ? &*art.patterns : nullptr, cfg.seed,
                  art.result.iterations);
  write_trace_csv((fs::path(out_dir) / "loss_trace.csv").string(), art.result.trace);
}

// --- eval -----------------------------------------------------------------------

namespace {

struct RhoRow {
  std::string motion;
  std::string kind;  // atomic | composite | composite_direct
  RhoResult fitted;
  std::optional<RhoResult> learned;
  std::size_t n_fit = 0, n_measure = 0;
  bool ridge = false;
};

RhoRow eval_motion_rho(const WorldHandle& world, const Network& net,
                       const EquivMapSet& maps,
                       const std::optional<MotionPatternModel>& patterns,
                       std::span<const std::string> motions, bool composite,
                       const EvalSection& ev, std::uint64_t seed,
                       const std::vector<AffineMap>* composed_fit) {
  MotionPairSet pairs = world_motion_pairs(world, motions, ev.eval_pairs, seed, true);
  Tensor zb = features_of_frames(net, pairs.before);
  Tensor za = features_of_frames(net, pairs.after);
  auto [fit_idx, meas_idx] =
      fit_measure_split(pairs.before.size(), ev.fit_fraction, derive_seed(seed, 3));

  RhoRow row;
  row.motion = motions[0];
  for (std::size_t i = 1; i < motions.size(); ++i) row.motion += "+" + motions[i];
  row.kind = composite ? "composite" : "atomic";
  row.n_fit = fit_idx.size();
  row.n_measure = meas_idx.size();

  Tensor zb_meas = rows_subset(zb, meas_idx);
  Tensor za_meas = rows_subset(za, meas_idx);

  AffineMap measure_map;
  if (composed_fit != nullptr) {
    // composite map composed from the atomic fits (rightmost applied first)
    measure_map = compose_maps(*composed_fit);
  } else {
    AffineFit fit = fit_equiv_map(rows_subset(zb, fit_idx), rows_subset(za, fit_idx));
    row.ridge = fit.ridge_flagged;
    measure_map = std::move(fit.map);
  }
  row.fitted = rho(zb_meas, za_meas, measure_map);

  // rho under the trained map (before -> after direction), when available
  if (maps.count() > 0 && patterns.has_value() && !composite) {
    // identify the pattern of this motion by its unit pose delta
    PoseDelta d;
    d.gap_s = 1.0;
    d.delta.assign(patterns->pose_dim(), 0.0);
    const auto& names = world.motions();
    for (std::size_t m = 0; m < names.size(); ++m) {
      if (names[m] == motions[0] && m < d.delta.size()) d.delta[m] = 1.0;
    }
    if (world.kind == "texture") {
      CamPose base;
      CamPose moved = world.texture->apply_motion(motions[0], base);
      const auto pv0 = TextureWorld::pose_vector(base);
      const auto pv1 = TextureWorld::pose_vector(moved);
      for (std::size_t i = 0; i < d.delta.size() && i < pv0.size(); ++i) {
        d.delta[i] = pv1[i] - pv0[i];
      }
    }
    try {
      const auto pattern = assign_pattern(*patterns, d);
      if (pattern.has_value() &&
          static_cast<std::size_t>(*pattern) <= maps.count()) {
        row.learned = rho(za_meas, zb_meas, maps.map(*pattern));
      }
    } catch (const InputError&) {
      // pose dimensionality differs from the mined model; skip learned rho
    }
  }
  return row;
}

}  // namespace

void cmd_eval(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& checkpoint_dir, const std::string& out_dir) {
  Dataset ds = read_dataset(dataset_dir);
  WorldHandle world = world_from_manifest(ds.manifest, dataset_dir);
  LoadedCheckpoint ck = load_checkpoint(checkpoint_dir);
  fs::create_directories(out_dir);

  const auto& motions = world.motions();

  // 1) equivariance rho per atomic motion, plus composites via Eq-composition
  std::vector<RhoRow> rho_rows;
  std::vector<AffineMap> atomic_fits;
  for (std::size_t m = 0; m < motions.size(); ++m) {
    const std::vector<std::string> seq{motions[m]};
    RhoRow row = eval_motion_rho(world, ck.net, ck.maps, ck.patterns, seq, false,
                                 cfg.eval, derive_seed(cfg.seed, 900 + m), nullptr);
    // keep the atomic fitted map for composition
    MotionPairSet pairs = world_motion_pairs(world, seq, cfg.eval.eval_pairs,
                                             derive_seed(cfg.seed, 900 + m), true);
    Tensor zb = features_of_frames(ck.net, pairs.before);
    Tensor za = features_of_frames(ck.net, pairs.after);
    auto [fit_idx, meas_idx] = fit_measure_split(pairs.before.size(), cfg.eval.fit_fraction,
                                                 derive_seed(derive_seed(cfg.seed, 900 + m), 3));
    atomic_fits.push_back(
        fit_equiv_map(rows_subset(zb, fit_idx), rows_subset(za, fit_idx)).map);
    rho_rows.push_back(std::move(row));
  }
  std::vector<std::vector<std::string>> composites = cfg.eval.composites;
  if (composites.empty() && motions.size() >= 2) {
    composites.push_back({motions[0], motions[1]});
  }
  for (std::size_t c = 0; c < composites.size(); ++c) {
    const auto& seq = composites[c];
    for (const auto& name : seq) {
      require(std::find(motions.begin(), motions.end(), name) != motions.end(),
              "composite motion uses unknown atomic motion: " + name);
    }
    // fitted-map composition: maps run after -> before, so the last motion's
    // map applies first
    std::vector<AffineMap> chain;
    for (const auto& name : seq) {
      const std::size_t m = static_cast<std::size_t>(
          std::find(motions.begin(), motions.end(), name) - motions.begin());
      chain.push_back(atomic_fits[m]);
    }
    RhoRow composed = eval_motion_rho(world, ck.net, ck.maps, ck.patterns, seq, true,
                                      cfg.eval, derive_seed(cfg.seed, 950 + c), &chain);
    rho_rows.push_back(std::move(composed));
    RhoRow direct = eval_motion_rho(world, ck.net, ck.maps, ck.patterns, seq, true,
                                    cfg.eval, derive_seed(cfg.seed, 950 + c), nullptr);
    direct.kind = "composite_direct";
    rho_rows.push_back(std::move(direct));
  }

  // 2) recognition accuracy on a fresh test draw
  WorldSection test_section = cfg.world;
  test_section.episodes = std::max<std::size_t>(cfg.eval.test_episodes, 1);
  Dataset test_ds = gen_world_dataset(world, test_section, derive_seed(cfg.seed, 70));
  std::vector<std::size_t> test_idx(test_ds.frames.size());
  std::iota(test_idx.begin(), test_idx.end(), 0);

  json accuracy_by_k = json::object();
  if (!ck.head.weight.empty()) {
    for (std::size_t k : cfg.eval.top_k) {
      const double acc = topk_accuracy(ck.net, ck.head, test_ds.frames, test_idx,
                                       test_ds.labels, k);
      accuracy_by_k["top_" + std::to_string(k)] = acc;
      accuracy_by_k["chance_top_" + std::to_string(k)] =
          chance_accuracy(test_ds.classes, k);
    }
  }

  AccuracySummary protocol;
  if (!ck.head.weight.empty()) {
    std::vector<double> runs;
    if (cfg.eval.repetitions >= 2) {
      for (std::size_t rep = 0; rep < cfg.eval.repetitions; ++rep) {
        TrainedArtifacts art = train_once(cfg, ds, world, "",
                                          derive_seed(cfg.seed, 7100 + rep));
        runs.push_back(topk_accuracy(art.net, art.head, test_ds.frames, test_idx,
                                     test_ds.labels, cfg.eval.top_k.front()));
      }
    } else {
      runs.push_back(topk_accuracy(ck.net, ck.head, test_ds.frames, test_idx,
                                   test_ds.labels, cfg.eval.top_k.front()));
    }
    protocol = summarize_runs(runs);
  }

  // 3) slowness AUROC on held-out pairs
  const auto held_pairs =
      build_timed_pairs(test_ds, cfg.train.config.temporal_window_s, 3.0,
                        derive_seed(cfg.seed, 72));
  json auroc_json;
  RocReport roc;
  if (!held_pairs.empty()) {
    std::vector<std::size_t> is, js;
    std::vector<double> gaps;
    for (const auto& p : held_pairs) {
      is.push_back(p.i);
      js.push_back(p.j);
      gaps.push_back(p.gap_s);
    }
    Tensor zi = compute_features(ck.net, test_ds.frames, is);
    Tensor zj = compute_features(ck.net, test_ds.frames, js);
    const PairDistance dist = cfg.train.method == TrainMethod::Temporal
                                  ? PairDistance::L1
                                  : PairDistance::L2;
    roc = slowness_auroc(zi, zj, gaps, cfg.train.config.temporal_window_s, dist);
  }

  // 4) analogy retrieval over adjacent test pairs
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (const PoseDelta& d : build_pairs(test_ds.poses, cfg.world.dt_s * 1.5)) {
    candidates.emplace_back(static_cast<std::size_t>(d.i),
                            static_cast<std::size_t>(d.j));
  }
  Tensor all_feats = features_of_frames(ck.net, test_ds.frames);
  {
    std::ofstream out(fs::path(out_dir) / "analogy_index.csv", std::ios::binary);
    require(out.good(), "cannot write analogy_index.csv");
    out << "query_i,query_j,rank,space,neighbor_i,neighbor_j,distance\n";
    Rng qrng(derive_seed(cfg.seed, 73));
    const std::size_t n_queries = std::min(cfg.eval.analogy_queries, candidates.size());
    for (std::size_t q = 0; q < n_queries; ++q) {
      const auto query = candidates[qrng.below(candidates.size())];
      AnalogyResult res = analogy_nn(all_feats, test_ds.frames, candidates, query,
                                     cfg.eval.analogy_k);
      for (std::size_t r = 0; r < res.feature_neighbors.size(); ++r) {
        const auto& nb = candidates[res.feature_neighbors[r].pair_index];
        out << query.first << "," << query.second << "," << (r + 1) << ",feature,"
            << nb.first << "," << nb.second << ","
            << fmt("%.17g", res.feature_neighbors[r].distance) << "\n";
      }
      for (std::size_t r = 0; r < res.pixel_neighbors.size(); ++r) {
        const auto& nb = candidates[res.pixel_neighbors[r].pair_index];
        out << query.first << "," << query.second << "," << (r + 1) << ",pixel,"
            << nb.first << "," << nb.second << ","
            << fmt("%.17g", res.pixel_neighbors[r].distance) << "\n";
      }
    }
  }

  // --- report files ---
  {
    std::ofstream out(fs::path(out_dir) / "rho_report.csv", std::ios::binary);
    require(out.good(), "cannot write rho_report.csv");
    out << "motion,kind,rho_fitted,rho_learned,n_fit,n_measure,skipped,ridge\n";
    for (const auto& r : rho_rows) {
      out << r.motion << "," << r.kind << ",";
      out << (r.fitted.value.has_value() ? fmt("%.17g", *r.fitted.value) : "nan");
      out << ",";
      out << (r.learned.has_value() && r.learned->value.has_value()
                  ? fmt("%.17g", *r.learned->value)
                  : "");
      out << "," << r.n_fit << "," << r.n_measure << "," << r.fitted.skipped << ","
          << (r.ridge ? 1 : 0) << "\n";
    }
  }
  if (roc.auroc.has_value() || roc.positives + roc.negatives > 0) {
    std::ofstream out(fs::path(out_dir) / "roc.csv", std::ios::binary);
    require(out.good(), "cannot write roc.csv");
    out << "threshold,fpr,tpr\n";
    for (std::size_t i = 0; i < roc.thresholds.size(); ++i) {
      out << fmt("%.17g", roc.thresholds[i]) << "," << fmt("%.17g", roc.fpr[i]) << ","
          << fmt("%.17g", roc.tpr[i]) << "\n";
    }
  }

  json summary;
  double rho_atomic = 0.0, rho_composite = 0.0;
  std::size_t n_atomic = 0, n_composite = 0;
  json rho_detail = json::array();
  for (const auto& r : rho_rows) {
    json jr;
    jr["motion"] = r.motion;
    jr["kind"] = r.kind;
    if (r.fitted.value.has_value()) jr["rho_fitted"] = *r.fitted.value;
    if (r.learned.has_value() && r.learned->value.has_value()) {
      jr["rho_learned"] = *r.learned->value;
    }
    jr["n_fit"] = r.n_fit;
    jr["n_measure"] = r.n_measure;
    jr["skipped"] = r.fitted.skipped;
    jr["ridge_flagged"] = r.ridge;
    rho_detail.push_back(jr);
    if (!r.fitted.value.has_value()) continue;
    if (r.kind == "atomic") {
      rho_atomic += *r.fitted.value;
      ++n_atomic;
    } else if (r.kind == "composite") {
      rho_composite += *r.fitted.value;
      ++n_composite;
    }
  }
  if (n_atomic > 0) summary["rho_atomic"] = rho_atomic / static_cast<double>(n_atomic);
  if (n_composite > 0) {
    summary["rho_composite"] = rho_composite / static_cast<double>(n_composite);
  }
  summary["rho_detail"] = rho_detail;
  if (!ck.head.weight.empty()) {
    summary["accuracy_mean"] = protocol.mean;
    summary["accuracy_stderr"] = protocol.stderr_;
    summary["accuracy_runs"] = protocol.runs;
    summary["accuracy_by_top_k"] = accuracy_by_k;
  }
  if (roc.auroc.has_value()) {
    summary["auroc"] = *roc.auroc;
  } else {
    summary["auroc_undefined"] = true;
  }
  summary["method"] = method_name(cfg.train.method);
  summary["seed"] = cfg.seed;
  write_json_file((fs::path(out_dir) / "eval_report.json").string(), summary);
}

// --- nbv ------------------------------------------------------------------------

void cmd_nbv(const RunConfig& cfg, const std::string& dataset_dir,
             const std::string& checkpoint_dir, const std::string& out_dir) {
  Dataset ds = read_dataset(dataset_dir);
  WorldHandle world = world_from_manifest(ds.manifest, dataset_dir);
  fs::create_directories(out_dir);
  const std::size_t classes = world.classes();

  if (cfg.nbv.features == "chance") {
    // analytic chance row: uniform prediction over C classes
    json report;
    report["features"] = "chance";
    report["acc_1view"] = 100.0 / static_cast<double>(classes);
    report["acc_2view"] = 100.0 / static_cast<double>(classes);
    report["classes"] = classes;
    write_json_file((fs::path(out_dir) / "nbv_report.json").string(), report);
    return;
  }

  std::optional<LoadedCheckpoint> ck;
  std::function<std::vector<double>(const Tensor&)> embed;
  if (cfg.nbv.features == "oracle") {
    require(world.kind == "latent_linear",
            "oracle features need a latent_linear dataset");
    const LatentLinearWorld& lw = *world.latent;
    embed = [&lw](const Tensor& frame) { return lw.oracle_features(frame); };
  } else {
    require(!checkpoint_dir.empty(), "nbv with net features needs --checkpoint");
    ck.emplace(load_checkpoint(checkpoint_dir));
    const Network& net = ck->net;
    embed = [&net](const Tensor& frame) {
      std::vector<std::size_t> shape{1};
      const auto& in = net.input_shape();
      shape.insert(shape.end(), in.begin(), in.end());
      Tensor batch(shape, std::vector<double>(frame.data(), frame.data() + frame.size()));
      Tensor f = forward(net, batch);
      return std::vector<double>(f.data(), f.data() + f.size());
    };
  }

  std::vector<std::vector<std::string>> views = cfg.nbv.candidate_views;
  if (views.empty()) {
    for (const auto& m : world.motions()) views.push_back({m});
    if (world.motions().size() >= 2) {
      views.push_back({world.motions()[0], world.motions()[1]});
    }
  }

  auto embed_set = [&](const std::vector<Tensor>& frames) {
    require(!frames.empty(), "empty frame set");
    const std::size_t d = embed(frames.front()).size();
    Tensor out({frames.size(), d});
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto v = embed(frames[i]);
      std::copy(v.begin(), v.end(), out.data() + i * d);
    }
    return out;
  };

  // training banks
  std::vector<NbvCandidate> candidates;
  bool any_downgrade = false;
  for (std::size_t v = 0; v < views.size(); ++v) {
    MotionPairSet pairs = world_motion_pairs(world, views[v], cfg.nbv.train_pairs,
                                             derive_seed(cfg.seed, 1000 + v), true);
    Tensor zb = embed_set(pairs.before);
    Tensor za = embed_set(pairs.after);
    NbvCandidate cand;
    cand.view = static_cast<int>(v) + 1;
    // forward prediction map: z(x) -> z(g x)
    cand.predict_map = fit_equiv_map(za, zb).map;
    cand.classifier = build_pair_classifier(zb, za, pairs.labels, classes, cfg.nbv.k,
                                            cand.view);
    any_downgrade = any_downgrade || cand.classifier.knn.k_downgraded;
    candidates.push_back(std::move(cand));
  }

  // single-view bank
  MotionPairSet singles = world_motion_pairs(world, views[0], cfg.nbv.train_pairs,
                                             derive_seed(cfg.seed, 1100), true);
  Tensor single_bank = embed_set(singles.before);
  KnnClassifier single_knn =
      build_knn_classifier(single_bank, singles.labels, classes, cfg.nbv.k);

  // test episodes
  require(cfg.nbv.test_episodes >= 1, "nbv.test_episodes must be >= 1");
  std::vector<int> test_labels;
  std::vector<Tensor> test_frames;
  std::vector<std::vector<std::vector<double>>> test_views(cfg.nbv.test_episodes);
  Rng trng(derive_seed(cfg.seed, 1200));
  for (std::size_t s = 0; s < cfg.nbv.test_episodes; ++s) {
    const std::size_t cls = trng.below(classes);
    test_labels.push_back(static_cast<int>(cls));
    if (world.kind == "latent_linear") {
      const LatentLinearWorld& lw = *world.latent;
      auto latent = lw.sample_class_latent(cls, trng);
      test_frames.push_back(lw.observe(latent, &trng));
      for (const auto& seq : views) {
        auto moved = latent;
        for (const auto& name : seq) moved = lw.apply_motion(lw.motion_id(name), moved);
        test_views[s].push_back(embed(lw.observe(moved, &trng)));
      }
    } else {
      const TextureWorld& tw = *world.texture;
      CamPose pose;
      pose.tx = trng.uniform(-25.0, 25.0);
      pose.ty = trng.uniform(-25.0, 25.0);
      pose.theta = trng.uniform(0.0, 6.283185307179586);
      pose.zoom = trng.uniform(0.95, 1.05);
      test_frames.push_back(tw.render(cls, pose));
      for (const auto& seq : views) {
        CamPose moved = pose;
        for (const auto& name : seq) moved = tw.apply_motion(name, moved);
        test_views[s].push_back(embed(tw.render(cls, moved)));
      }
    }
  }
  Tensor feats0 = embed_set(test_frames);

  NbvOutcome outcome = evaluate_nbv(
      feats0, test_labels, single_knn, candidates,
      [&](std::size_t sample, int view) -> std::optional<std::vector<double>> {
        if (view < 1 || static_cast<std::size_t>(view) > views.size()) {
          return std::nullopt;
        }
        return test_views[sample][static_cast<std::size_t>(view) - 1];
      });

  json report;
  report["features"] = cfg.nbv.features;
  report["acc_1view"] = outcome.acc_1view;
  report["acc_2view"] = outcome.acc_2view;
  report["evaluated"] = outcome.evaluated;
  report["skipped"] = outcome.skipped;
  report["classes"] = classes;
  report["k"] = candidates.front().classifier.knn.k;
  report["k_downgraded"] = any_downgrade;
  json view_names = json::array();
  for (const auto& seq : views) {
    std::string name = seq[0];
    for (std::size_t i = 1; i < seq.size(); ++i) name += "+" + seq[i];
    view_names.push_back(name);
  }
  report["views"] = view_names;
  json samples = json::array();
  for (const auto& s : outcome.samples) {
    samples.push_back({{"view", s.selected_view},
                       {"entropies", s.entropies},
                       {"correct_1view", s.correct_1view},
                       {"correct_2view", s.correct_2view},
                       {"skipped", s.skipped}});
  }
  report["samples"] = samples;
  write_json_file((fs::path(out_dir) / "nbv_report.json").string(), report);
}

// --- sweep -----------------------------------------------------------------------

void cmd_sweep(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& out_dir) {
  Dataset ds = read_dataset(dataset_dir);
  WorldHandle world = world_from_manifest(ds.manifest, dataset_dir);
  fs::create_directories(out_dir);

  WorldSection val_section = cfg.world;
  val_section.episodes = std::max<std::size_t>(cfg.eval.test_episodes, 1);
  Dataset val_ds = gen_world_dataset(world, val_section, derive_seed(cfg.seed, 75));
  std::vector<std::size_t> val_idx(val_ds.frames.size());
  std::iota(val_idx.begin(), val_idx.end(), 0);

  auto validate = [&](const TrainedArtifacts& art) {
    return topk_accuracy(art.net, art.head, val_ds.frames, val_idx, val_ds.labels, 1);
  };

  std::ofstream csv(fs::path(out_dir) / "sweep.csv", std::ios::binary);
  require(csv.good(), "cannot write sweep.csv");
  csv << "phase,lr,lambda,val_accuracy\n";

  // phase 1: base learning rate by clsnet validation accuracy
  RunConfig cls_cfg = cfg;
  cls_cfg.train.method = TrainMethod::Clsnet;
  double best_lr = cfg.sweep.lr_grid.front();
  double best_acc = -1.0;
  for (double lr : cfg.sweep.lr_grid) {
    TrainedArtifacts art =
        train_once(cls_cfg, ds, world, "", derive_seed(cfg.seed, 61), lr);
    const double acc = validate(art);
    csv << "lr," << fmt("%.17g", lr) << ",0," << fmt("%.17g", acc) << "\n";
    if (acc > best_acc) {
      best_acc = acc;
      best_lr = lr;
    }
  }

  // phase 2: regularizer weight on a logarithmic grid (steps of sqrt(10))
  double best_lambda = 0.0;
  double best_lambda_acc = best_acc;
  if (cfg.train.method != TrainMethod::Clsnet) {
    best_lambda_acc = -1.0;
    for (double e = cfg.sweep.lambda_min_exp; e <= cfg.sweep.lambda_max_exp + 1e-9;
         e += 0.5) {
      const double lambda = std::pow(10.0, e);
      TrainedArtifacts art =
          train_once(cfg, ds, world, "", derive_seed(cfg.seed, 62), best_lr, lambda);
      const double acc = validate(art);
      csv << "lambda," << fmt("%.17g", best_lr) << "," << fmt("%.17g", lambda) << ","
          << fmt("%.17g", acc) << "\n";
      if (acc > best_lambda_acc) {
        best_lambda_acc = acc;
        best_lambda = lambda;
      }
    }
  }

  json best;
  best["method"] = method_name(cfg.train.method);
  best["lr"] = best_lr;
  best["lambda"] = best_lambda;
  best["val_accuracy"] = best_lambda_acc;
  write_json_file((fs::path(out_dir) / "sweep_best.json").string(), best);
}

// --- gradcheck ----------------------------------------------------------------

void cmd_gradcheck(const RunConfig& cfg, const std::string& out_dir) {
  const double h = 1e-5;
  const double tol = 1e-4;
  json results = json::array();
  bool all_ok = true;

  auto check_net = [&](const std::string& name, Network& net, const Tensor& batch) {
    FeatureLoss loss = [](const Tensor& f, Tensor* df) {
      double acc = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        acc += 0.5 * f[i] * f[i];
        if (df != nullptr) (*df)[i] = f[i];
      }
      return acc;
    };
    FdReport rep = finite_diff_check(net, loss, batch, h);
    const bool ok = rep.max_rel_error < tol;
    all_ok = all_ok && ok;
    std::printf("gradcheck %-18s max_rel_error=%.3e %s\n", name.c_str(),
                rep.max_rel_error, ok ? "PASS" : "FAIL");
    results.push_back({{"name", name},
                       {"max_rel_error", rep.max_rel_error},
                       {"pass", ok},
                       {"params", rep.params_checked}});
  };

  Rng rng(derive_seed(cfg.seed, 90));
  auto rand_batch = [&](std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
  };

  {
    Network net({6}, {LayerSpec::fully_connected(6, 4)});
    init_xavier(net, 1);
    check_net("fully_connected", net, rand_batch({3, 6}));
  }
  {
    Network net({1, 6, 6}, {LayerSpec::conv(1, 2, 3, 1),
                            LayerSpec::fully_connected(2 * 4 * 4, 3)});
    init_xavier(net, 2);
    check_net("conv", net, rand_batch({2, 1, 6, 6}));
  }
  {
    Network net({1, 6, 6}, {LayerSpec::max_pool(2, 2),
                            LayerSpec::fully_connected(9, 3)});
    init_xavier(net, 3);
    check_net("max_pool", net, rand_batch({2, 1, 6, 6}));
  }
  {
    Network net({1, 6, 6}, {LayerSpec::avg_pool(2, 2),
                            LayerSpec::fully_connected(9, 3)});
    init_xavier(net, 4);
    check_net("avg_pool", net, rand_batch({2, 1, 6, 6}));
  }
  {
    Network net({5}, {LayerSpec::fully_connected(5, 4), LayerSpec::relu(),
                      LayerSpec::fully_connected(4, 3)});
    init_xavier(net, 5);
    // keep activations away from the ReLU kink
    Tensor batch = rand_batch({3, 5});
    check_net("relu_stack", net, batch);
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json doc;
    doc["results"] = results;
    doc["tolerance"] = tol;
    doc["h"] = h;
    write_json_file((fs::path(out_dir) / "gradcheck.json").string(), doc);
  }
  if (!all_ok) throw NumericError("gradient check failed");
}

// --- argv entry point --------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"ego-motion equivariant feature learning pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dataset_dir, checkpoint_path;
  auto add_common = [&](CLI::App* sub, bool need_config, bool need_out,
                        bool need_dataset, bool need_checkpoint) {
    auto* c = sub->add_option("--config", config_path, "run config JSON");
    if (need_config) c->required();
    auto* o = sub->add_option("--out", out_dir, "output directory");
    if (need_out) o->required();
    auto* d = sub->add_option("--dataset", dataset_dir, "dataset directory");
    if (need_dataset) d->required();
    auto* k = sub->add_option("--checkpoint", checkpoint_path,
                              "checkpoint directory (or pattern model for train)");
    if (need_checkpoint) k->required();
  };

  CLI::App* gen = app.add_subcommand("gen-world", "generate a synthetic dataset");
  add_common(gen, true, true, false, false);
  CLI::App* mine = app.add_subcommand("mine", "mine discrete motion patterns");
  add_common(mine, true, true, true, false);
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, true, true, true, false);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, true, true, true, true);
  CLI::App* nbv = app.add_subcommand("nbv", "next-best-view evaluation");
  add_common(nbv, true, true, true, false);
  CLI::App* sweep = app.add_subcommand("sweep", "greedy lr / lambda search");
  add_common(sweep, true, true, true, false);
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks");
  add_common(gradcheck, false, false, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "EGOEQ_ERROR[input]: " << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (gen->parsed()) {
      cmd_gen_world(cfg, out_dir);
    } else if (mine->parsed()) {
      cmd_mine(cfg, dataset_dir, out_dir);
    } else if (train->parsed()) {
      cmd_train(cfg, dataset_dir, checkpoint_path, out_dir);
    } else if (eval->parsed()) {
      cmd_eval(cfg, dataset_dir, checkpoint_path, out_dir);
    } else if (nbv->parsed()) {
      cmd_nbv(cfg, dataset_dir, checkpoint_path, out_dir);
    } else if (sweep->parsed()) {
      cmd_sweep(cfg, dataset_dir, out_dir);
    } else if (gradcheck->parsed()) {
      cmd_gradcheck(cfg, out_dir);
    }
  } catch (const InputError& e) {
    std::cerr << "EGOEQ_ERROR[input]: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "EGOEQ_ERROR[numeric]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "EGOEQ_ERROR[input]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace egoeq
