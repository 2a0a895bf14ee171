#include "egoeq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace egoeq {

TrainMethod parse_method(const std::string& name) {
  if (name == "clsnet") return TrainMethod::Clsnet;
  if (name == "temporal") return TrainMethod::Temporal;
  if (name == "drlim") return TrainMethod::Drlim;
  if (name == "equiv") return TrainMethod::Equiv;
  if (name == "equiv_drlim") return TrainMethod::EquivDrlim;
  throw InputError("unknown training method: " + name);
}

std::string method_name(TrainMethod m) {
  switch (m) {
    case TrainMethod::Clsnet: return "clsnet";
    case TrainMethod::Temporal: return "temporal";
    case TrainMethod::Drlim: return "drlim";
    case TrainMethod::Equiv: return "equiv";
    case TrainMethod::EquivDrlim: return "equiv_drlim";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(lambda_equiv >= 0.0 && lambda_slow >= 0.0, "lambdas must be >= 0");
  require(margin_equiv > 0.0 && margin_slow > 0.0, "margins must be positive");
  require(temporal_window_s > 0.0, "temporal_window_s must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(batch_size_cls >= 1 && batch_size_pairs >= 1, "batch sizes must be >= 1");
  require(neg_ratio >= 0.0, "neg_ratio must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0,1)");
}

std::vector<EquivSample> mine_equiv_samples(const Dataset& ds,
                                            const MotionPatternModel& model,
                                            double max_gap_s) {
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < ds.poses.size(); ++i) index[ds.poses[i].frame_id] = i;
  std::vector<EquivSample> out;
  for (const PoseDelta& d : build_pairs(ds.poses, max_gap_s)) {
    const auto pattern = assign_pattern(model, d);
    if (!pattern.has_value()) continue;
    EquivSample s;
    s.xi = index.at(d.i);
    s.xj = index.at(d.j);
    s.pattern = *pattern;
    out.push_back(s);
  }
  return out;
}

std::vector<TimedPair> build_timed_pairs(const Dataset& ds, double T,
                                         double neg_per_pos, std::uint64_t seed) {
  require(T > 0.0, "build_timed_pairs: T must be positive");
  std::vector<TimedPair> pairs;
  for (const PoseDelta& d : build_pairs(ds.poses, T)) {
    TimedPair p;
    p.i = static_cast<std::size_t>(d.i);
    p.j = static_cast<std::size_t>(d.j);
    p.gap_s = d.gap_s;
    pairs.push_back(p);
  }
  const std::size_t n_pos = pairs.size();
  const std::size_t want_neg =
      static_cast<std::size_t>(std::llround(neg_per_pos * static_cast<double>(n_pos)));
  Rng rng(derive_seed(seed, 7));
  std::size_t guard = 0;
  while (pairs.size() < n_pos + want_neg && guard < 1000 * (want_neg + 1)) {
    ++guard;
    const std::size_t a = rng.below(ds.poses.size());
    const std::size_t b = rng.below(ds.poses.size());
    if (a == b) continue;
    const std::size_t i = std::min(a, b), j = std::max(a, b);
    const double gap = ds.poses[j].time_s - ds.poses[i].time_s;
    if (gap <= T) continue;
    pairs.push_back({i, j, gap});
  }
  return pairs;
}

std::vector<LabeledSample> pick_labeled_subset(const Dataset& ds,
                                               std::size_t per_class,
                                               std::uint64_t seed) {
  require(!ds.labels.empty(), "dataset carries no labels");
  require(ds.classes >= 1, "dataset class count missing");
  Rng rng(derive_seed(seed, 11));
  std::vector<LabeledSample> out;
  for (std::size_t c = 0; c < ds.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
      if (ds.labels[i] == static_cast<int>(c)) members.push_back(i);
    }
    require(members.size() >= per_class,
            "class " + std::to_string(c) + " has only " +
                std::to_string(members.size()) + " frames, need " +
                std::to_string(per_class));
    // seeded partial Fisher-Yates draw
    for (std::size_t t = 0; t < per_class; ++t) {
      const std::size_t pick = t + rng.below(members.size() - t);
      std::swap(members[t], members[pick]);
      out.push_back({members[t], static_cast<int>(c)});
    }
  }
  return out;
}

EquivBatch make_equiv_batch(const std::vector<Tensor>& frames,
                            std::span<const EquivRow> rows,
                            const std::vector<std::size_t>& input_shape) {
  require(!rows.empty(), "make_equiv_batch: empty batch");
  std::vector<std::size_t> xi, xj;
  EquivBatch b;
  for (const auto& r : rows) {
    xi.push_back(r.xi);
    xj.push_back(r.xj);
    b.map_id.push_back(r.map_id);
    b.positive.push_back(r.positive);
  }
  b.xi = gather_batch(frames, xi, input_shape);
  b.xj = gather_batch(frames, xj, input_shape);
  return b;
}

SlownessBatch make_slowness_batch(const std::vector<Tensor>& frames,
                                  std::span<const TimedPair> pairs, double T,
                                  const std::vector<std::size_t>& input_shape) {
  require(!pairs.empty(), "make_slowness_batch: empty batch");
  std::vector<std::size_t> xi, xj;
  SlownessBatch b;
  for (const auto& p : pairs) {
    xi.push_back(p.i);
    xj.push_back(p.j);
    b.neighbor.push_back(p.gap_s <= T ? 1 : 0);
  }
  b.xi = gather_batch(frames, xi, input_shape);
  b.xj = gather_batch(frames, xj, input_shape);
  return b;
}

JointLossParts joint_loss_parts(const Network& net, const EquivMapSet* maps,
                                const ClassifierHead* head,
                                const Tensor* labeled_images,
                                std::span<const int> labels, const EquivBatch* pairs,
                                const SlownessBatch* slow_pairs, double lambda_equiv,
                                double lambda_slow, double delta_equiv,
                                double margin_slow, PairDistance slow_dist,
                                ModelGrads* grads, bool normalize_pairs) {
  JointLossParts parts;
  const bool want = grads != nullptr;
  if (want) {
    grads->net = zero_gradients(net);
    if (maps != nullptr) grads->maps = zero_map_grads(*maps);
    if (head != nullptr) {
      grads->head_weight = Tensor(head->weight.shape());
      grads->head_bias = Tensor(head->bias.shape());
    }
  }

  if (head != nullptr && labeled_images != nullptr) {
    ForwardTape tape;
    Tensor feats = want ? forward(net, *labeled_images, &tape)
                        : forward(net, *labeled_images);
    if (want) {
      Tensor dfeats(feats.shape());
      parts.cls = softmax_loss_backward(*head, feats, labels, dfeats,
                                        grads->head_weight, grads->head_bias);
      backward(net, tape, dfeats, grads->net);
    } else {
      parts.cls = softmax_loss(*head, feats, labels);
    }
  }

  if (maps != nullptr && pairs != nullptr && pairs->rows() > 0 && lambda_equiv != 0.0) {
    const double scale =
        normalize_pairs ? 1.0 / static_cast<double>(pairs->rows()) : 1.0;
    ForwardTape tape_i, tape_j;
    Tensor zi = want ? forward(net, pairs->xi, &tape_i) : forward(net, pairs->xi);
    Tensor zj = want ? forward(net, pairs->xj, &tape_j) : forward(net, pairs->xj);
    if (want) {
      Tensor dzi(zi.shape()), dzj(zj.shape());
      std::vector<AffineMap> dmaps = zero_map_grads(*maps);
      parts.equiv = scale * equiv_head_loss(*maps, zi, zj, pairs->map_id,
                                            pairs->positive, delta_equiv, &dzi, &dzj,
                                            &dmaps);
      const double w = lambda_equiv * scale;
      for (std::size_t i = 0; i < dzi.size(); ++i) dzi[i] *= w;
      for (std::size_t i = 0; i < dzj.size(); ++i) dzj[i] *= w;
      backward(net, tape_i, dzi, grads->net);
      backward(net, tape_j, dzj, grads->net);
      for (std::size_t g = 0; g < dmaps.size(); ++g) {
        for (std::size_t t = 0; t < dmaps[g].weight.size(); ++t) {
          grads->maps[g].weight[t] += w * dmaps[g].weight[t];
        }
        for (std::size_t t = 0; t < dmaps[g].bias.size(); ++t) {
          grads->maps[g].bias[t] += w * dmaps[g].bias[t];
        }
      }
    } else {
      parts.equiv = scale * equiv_head_loss(*maps, zi, zj, pairs->map_id,
                                            pairs->positive, delta_equiv, nullptr,
                                            nullptr, nullptr);
    }
  }

  if (slow_pairs != nullptr && !slow_pairs->neighbor.empty() && lambda_slow != 0.0) {
    const double scale =
        normalize_pairs ? 1.0 / static_cast<double>(slow_pairs->neighbor.size()) : 1.0;
    ForwardTape tape_i, tape_j;
    Tensor zi = want ? forward(net, slow_pairs->xi, &tape_i) : forward(net, slow_pairs->xi);
    Tensor zj = want ? forward(net, slow_pairs->xj, &tape_j) : forward(net, slow_pairs->xj);
    if (want) {
      Tensor dzi(zi.shape()), dzj(zj.shape());
      parts.slow = scale * slowness_head_loss(zi, zj, slow_pairs->neighbor,
                                              margin_slow, slow_dist, &dzi, &dzj);
      const double w = lambda_slow * scale;
      for (std::size_t i = 0; i < dzi.size(); ++i) dzi[i] *= w;
      for (std::size_t i = 0; i < dzj.size(); ++i) dzj[i] *= w;
      backward(net, tape_i, dzi, grads->net);
      backward(net, tape_j, dzj, grads->net);
    } else {
      parts.slow = scale * slowness_head_loss(zi, zj, slow_pairs->neighbor,
                                              margin_slow, slow_dist, nullptr,
                                              nullptr);
    }
  }

  parts.total = parts.cls + lambda_equiv * parts.equiv + lambda_slow * parts.slow;
  return parts;
}

double equiv_loss(const Network& net, const EquivMapSet& maps, const EquivBatch& batch,
                  double delta) {
  require(batch.rows() > 0, "equiv_loss: empty batch");
  JointLossParts p = joint_loss_parts(net, &maps, nullptr, nullptr, {}, &batch, nullptr,
                                      1.0, 0.0, delta, 1.0, PairDistance::L2, nullptr);
  return p.equiv;
}

double slowness_loss(const Network& net, const SlownessBatch& batch, PairDistance dist,
                     double margin) {
  Tensor zi = forward(net, batch.xi);
  Tensor zj = forward(net, batch.xj);
  return slowness_head_loss(zi, zj, batch.neighbor, margin, dist, nullptr, nullptr);
}

double joint_loss(const Network& net, const EquivMapSet& maps,
                  const ClassifierHead& head, const Tensor& labeled_images,
                  std::span<const int> labels, const EquivBatch& pairs, double lambda,
                  double delta) {
  const bool have_labeled = !labeled_images.empty();
  JointLossParts p = joint_loss_parts(
      net, &maps, &head, have_labeled ? &labeled_images : nullptr, labels, &pairs,
      nullptr, lambda, 0.0, delta, 1.0, PairDistance::L2, nullptr);
  return p.cls + lambda * p.equiv;
}

namespace {

// Parameter/gradient flattening; order is net layers, then maps, then head.
ParamRefs collect_params(Network& net, EquivMapSet* maps, ClassifierHead* head) {
  ParamRefs refs = network_params(net);
  if (maps != nullptr) {
    for (auto& m : maps->maps) {
      refs.add(m.weight);
      refs.add(m.bias);
    }
  }
  if (head != nullptr) {
    refs.add(head->weight);
    refs.add(head->bias);
  }
  return refs;
}

void flatten_grads(const Network& net, const ModelGrads& g, bool with_maps,
                   bool with_head, std::vector<Tensor>& out) {
  std::size_t slot = 0;
  for (const auto& lp : g.net.layers) {
    if (lp.weight.empty()) continue;
    out[slot++] = lp.weight;
    out[slot++] = lp.bias;
  }
  if (with_maps) {
    for (const auto& m : g.maps) {
      out[slot++] = m.weight;
      out[slot++] = m.bias;
    }
  }
  if (with_head) {
    out[slot++] = g.head_weight;
    out[slot++] = g.head_bias;
  }
  require(slot == out.size(), "internal: gradient flattening misaligned");
}

std::vector<EquivRow> assemble_equiv_rows(const std::vector<EquivSample>& positives,
                                          double neg_ratio, Rng& rng) {
  // Bucket positives by pattern so negatives draw from other patterns only.
  std::unordered_map<int, std::vector<std::size_t>> by_pattern;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    by_pattern[positives[i].pattern].push_back(i);
  }
  std::vector<int> patterns;
  for (const auto& [p, _] : by_pattern) patterns.push_back(p);
  std::sort(patterns.begin(), patterns.end());

  std::vector<EquivRow> rows;
  for (const auto& s : positives) {
    rows.push_back({s.xi, s.xj, s.pattern, 1});
  }
  if (neg_ratio > 0.0 && patterns.size() > 1) {
    for (const auto& s : positives) {
      const std::size_t n_full = static_cast<std::size_t>(neg_ratio);
      const double frac = neg_ratio - static_cast<double>(n_full);
      std::size_t n = n_full + ((frac > 0.0 && rng.uniform01() < frac) ? 1 : 0);
      for (std::size_t t = 0; t < n; ++t) {
        // uniform pair from the other retained patterns
        int other;
        do {
          other = patterns[rng.below(patterns.size())];
        } while (other == s.pattern);
        const auto& bucket = by_pattern[other];
        const EquivSample& q = positives[bucket[rng.below(bucket.size())]];
        rows.push_back({q.xi, q.xj, s.pattern, 0});
      }
    }
  }
  // seeded shuffle
  for (std::size_t i = rows.size(); i > 1; --i) {
    std::swap(rows[i - 1], rows[rng.below(i)]);
  }
  return rows;
}

template <typename StepFn>
TrainResult run_epochs(std::size_t epochs, std::size_t batches_per_epoch,
                       const StepFn& step) {
  TrainResult res;
  std::uint64_t iter = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      TraceRow row = step(e, b, iter);
      epoch_sum += row.total;
      res.trace.push_back(row);
      ++iter;
    }
    res.epoch_mean_loss.push_back(epoch_sum / static_cast<double>(batches_per_epoch));
  }
  res.iterations = iter;
  return res;
}

}  // namespace

TrainResult train_unsupervised(Network& net, EquivMapSet& maps,
                               const std::vector<Tensor>& frames,
                               const std::vector<EquivSample>& positives,
                               const TrainConfig& cfg) {
  cfg.validate();
  require(!positives.empty(), "train_unsupervised: no positive pairs");
  if (cfg.epochs == 0) return {};

  ParamRefs params = collect_params(net, &maps, nullptr);
  OptimizerState state(cfg.learning_rate, cfg.momentum, params);
  Rng pair_rng(derive_seed(cfg.seed, 2));

  std::vector<EquivRow> rows = assemble_equiv_rows(positives, cfg.neg_ratio, pair_rng);
  const std::size_t bs = std::min(cfg.batch_size_pairs, rows.size());
  const std::size_t batches = (rows.size() + bs - 1) / bs;

  return run_epochs(cfg.epochs, batches,
                    [&](std::size_t, std::size_t b, std::uint64_t iter) {
    if (b == 0 && iter > 0) {
      rows = assemble_equiv_rows(positives, cfg.neg_ratio, pair_rng);
    }
    // fractional neg_ratio can shift the row count between epochs; clamp
    const std::size_t lo = std::min(b * bs, rows.size() - 1);
    const std::size_t hi = std::min(lo + bs, rows.size());
    EquivBatch batch = make_equiv_batch(frames, std::span(rows).subspan(lo, hi - lo),
                                        net.input_shape());
    double loss = nesterov_cycle(params, state, [&](std::vector<Tensor>& grads) {
      ModelGrads mg;
      JointLossParts p = joint_loss_parts(net, &maps, nullptr, nullptr, {}, &batch,
                                          nullptr, 1.0, 0.0, cfg.margin_equiv,
                                          cfg.margin_slow, PairDistance::L2, &mg, true);
      flatten_grads(net, mg, true, false, grads);
      return p.total;
    });
    return TraceRow{iter, loss, 0.0, loss};
  });
}

TrainResult train_slowness(Network& net, const std::vector<Tensor>& frames,
                           const std::vector<TimedPair>& pairs, PairDistance dist,
                           const TrainConfig& cfg) {
  cfg.validate();
  require(!pairs.empty(), "train_slowness: no pairs");
  if (cfg.epochs == 0) return {};

  ParamRefs params = collect_params(net, nullptr, nullptr);
  OptimizerState state(cfg.learning_rate, cfg.momentum, params);
  Rng rng(derive_seed(cfg.seed, 3));
  std::vector<TimedPair> order = pairs;
  const std::size_t bs = std::min(cfg.batch_size_pairs, order.size());
  const std::size_t batches = (order.size() + bs - 1) / bs;

  return run_epochs(cfg.epochs, batches, [&](std::size_t, std::size_t b, std::uint64_t iter) {
    if (b == 0) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
      }
    }
    const std::size_t lo = b * bs;
    const std::size_t hi = std::min(lo + bs, order.size());
    SlownessBatch batch = make_slowness_batch(
        frames, std::span(order).subspan(lo, hi - lo), cfg.temporal_window_s,
        net.input_shape());
    double loss = nesterov_cycle(params, state, [&](std::vector<Tensor>& grads) {
      ModelGrads mg;
      JointLossParts p =
          joint_loss_parts(net, nullptr, nullptr, nullptr, {}, nullptr, &batch, 0.0,
                           1.0, cfg.margin_equiv, cfg.margin_slow, dist, &mg, true);
      flatten_grads(net, mg, false, false, grads);
      return p.total;
    });
    return TraceRow{iter, loss, 0.0, loss};
  });
}

TrainResult train_joint(Network& net, EquivMapSet* maps, ClassifierHead& head,
                        const std::vector<Tensor>& frames,
                        const std::vector<LabeledSample>& labeled,
                        const std::vector<EquivSample>& equiv_positives,
                        const std::vector<TimedPair>& timed_pairs, TrainMethod method,
                        const TrainConfig& cfg) {
  cfg.validate();
  require(!labeled.empty(), "train_joint: labeled set is empty");
  if (cfg.epochs == 0) return {};

  const bool use_equiv = (method == TrainMethod::Equiv ||
                          method == TrainMethod::EquivDrlim) &&
                         cfg.lambda_equiv > 0.0;
  const bool use_slow = (method == TrainMethod::Temporal ||
                         method == TrainMethod::Drlim ||
                         method == TrainMethod::EquivDrlim) &&
                        cfg.lambda_slow > 0.0;
  const PairDistance slow_dist =
      method == TrainMethod::Temporal ? PairDistance::L1 : PairDistance::L2;
  if (use_equiv) {
    require(maps != nullptr && !equiv_positives.empty(),
            "train_joint: equiv method needs maps and mined pairs");
  }
  if (use_slow) {
    require(!timed_pairs.empty(), "train_joint: slowness method needs timed pairs");
  }

  ParamRefs params = collect_params(net, use_equiv ? maps : nullptr, &head);
  OptimizerState state(cfg.learning_rate, cfg.momentum, params);

  Rng cls_rng(derive_seed(cfg.seed, 1));
  Rng pair_rng(derive_seed(cfg.seed, 2));
  Rng slow_rng(derive_seed(cfg.seed, 3));

  // labeled stream: shuffled cyclic batches
  std::vector<std::size_t> cls_order(labeled.size());
  std::iota(cls_order.begin(), cls_order.end(), 0);
  std::size_t cls_cursor = cls_order.size();  // forces initial shuffle
  auto next_labeled_batch = [&](Tensor& images, std::vector<int>& lab) {
    const std::size_t bs = std::min(cfg.batch_size_cls, labeled.size());
    std::vector<std::size_t> idx;
    lab.clear();
    while (idx.size() < bs) {
      if (cls_cursor == cls_order.size()) {
        for (std::size_t i = cls_order.size(); i > 1; --i) {
          std::swap(cls_order[i - 1], cls_order[cls_rng.below(i)]);
        }
        cls_cursor = 0;
      }
      const LabeledSample& s = labeled[cls_order[cls_cursor++]];
      idx.push_back(s.x);
      lab.push_back(s.label);
    }
    images = gather_batch(frames, idx, net.input_shape());
  };

  // slowness stream: shuffled cyclic batches
  std::vector<TimedPair> slow_order = timed_pairs;
  std::size_t slow_cursor = slow_order.size();
  auto next_slow_batch = [&]() {
    const std::size_t bs = std::min(cfg.batch_size_pairs, slow_order.size());
    std::vector<TimedPair> chunk;
    while (chunk.size() < bs) {
      if (slow_cursor == slow_order.size()) {
        for (std::size_t i = slow_order.size(); i > 1; --i) {
          std::swap(slow_order[i - 1], slow_order[slow_rng.below(i)]);
        }
        slow_cursor = 0;
      }
      chunk.push_back(slow_order[slow_cursor++]);
    }
    return make_slowness_batch(frames, chunk, cfg.temporal_window_s, net.input_shape());
  };

  // The epoch axis follows the regularizer's pair stream when there is one,
  // otherwise the labeled set.
  std::vector<EquivRow> equiv_rows;
  std::size_t batches_per_epoch;
  if (use_equiv) {
    equiv_rows = assemble_equiv_rows(equiv_positives, cfg.neg_ratio, pair_rng);
    const std::size_t bs = std::min(cfg.batch_size_pairs, equiv_rows.size());
    batches_per_epoch = (equiv_rows.size() + bs - 1) / bs;
  } else if (use_slow) {
    const std::size_t bs = std::min(cfg.batch_size_pairs, slow_order.size());
    batches_per_epoch = (slow_order.size() + bs - 1) / bs;
  } else {
    const std::size_t bs = std::min(cfg.batch_size_cls, labeled.size());
    batches_per_epoch = (labeled.size() + bs - 1) / bs;
  }

  const double le = use_equiv ? cfg.lambda_equiv : 0.0;
  const double ls = use_slow ? cfg.lambda_slow : 0.0;

  return run_epochs(cfg.epochs, batches_per_epoch,
                    [&](std::size_t, std::size_t b, std::uint64_t iter) {
    if (use_equiv && b == 0 && iter > 0) {
      equiv_rows = assemble_equiv_rows(equiv_positives, cfg.neg_ratio, pair_rng);
    }
    Tensor cls_images;
    std::vector<int> cls_labels;
    next_labeled_batch(cls_images, cls_labels);

    EquivBatch ebatch;
    if (use_equiv) {
      const std::size_t bs = std::min(cfg.batch_size_pairs, equiv_rows.size());
      const std::size_t lo = std::min(b * bs, equiv_rows.size() - 1);
      const std::size_t hi = std::min(lo + bs, equiv_rows.size());
      ebatch = make_equiv_batch(frames, std::span(equiv_rows).subspan(lo, hi - lo),
                                net.input_shape());
    }
    SlownessBatch sbatch;
    if (use_slow) sbatch = next_slow_batch();

    JointLossParts parts;
    double loss = nesterov_cycle(params, state, [&](std::vector<Tensor>& grads) {
      ModelGrads mg;
      parts = joint_loss_parts(net, use_equiv ? maps : nullptr, &head, &cls_images,
                               cls_labels, use_equiv ? &ebatch : nullptr,
                               use_slow ? &sbatch : nullptr, le, ls, cfg.margin_equiv,
                               cfg.margin_slow, slow_dist, &mg, true);
      flatten_grads(net, mg, use_equiv, true, grads);
      return parts.total;
    });
    const double reg = le * parts.equiv + ls * parts.slow;
    return TraceRow{iter, loss, parts.cls, reg};
  });
}

Tensor compute_features(const Network& net, const std::vector<Tensor>& frames,
                        std::span<const std::size_t> indices) {
  require(!indices.empty(), "compute_features: empty index list");
  Tensor out({indices.size(), net.feature_dim()});
  const std::size_t chunk = 256;
  for (std::size_t lo = 0; lo < indices.size(); lo += chunk) {
    const std::size_t hi = std::min(lo + chunk, indices.size());
    Tensor batch = gather_batch(frames, indices.subspan(lo, hi - lo), net.input_shape());
    Tensor feats = forward(net, batch);
    std::copy(feats.data(), feats.data() + feats.size(),
              out.data() + lo * net.feature_dim());
  }
  return out;
}

Tensor compute_features_all(const Network& net, const std::vector<Tensor>& frames) {
  std::vector<std::size_t> idx(frames.size());
  std::iota(idx.begin(), idx.end(), 0);
  return compute_features(net, frames, idx);
}

double mean_feature_norm(const Network& net, const std::vector<Tensor>& frames,
                         std::span<const std::size_t> indices) {
  Tensor feats = compute_features(net, frames, indices);
  double acc = 0.0;
  for (std::size_t r = 0; r < feats.dim(0); ++r) acc += l2_norm(feats.row(r));
  return acc / static_cast<double>(feats.dim(0));
}

void write_trace_csv(const std::string& path, std::span<const TraceRow> trace) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write trace CSV: " + path);
  out << "iteration,loss_total,loss_cls,loss_equiv\n";
  char buf[128];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(row.iteration), row.total, row.cls,
                  row.equiv);
    out << buf;
  }
  require(out.good(), "failed writing trace CSV: " + path);
}

}  // namespace egoeq
