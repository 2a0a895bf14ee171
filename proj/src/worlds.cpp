#include "egoeq/worlds.hpp"

#include <algorithm>
#include <cmath>

namespace egoeq {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Tensor orthonormal_columns(std::size_t n, std::size_t k, double scale, Rng& rng) {
  require(k <= n, "latent world: latent_dim must not exceed observation dim");
  // random normal matrix, then modified Gram-Schmidt on columns
  Tensor a({n, k});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal();
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double d = 0.0;
      for (std::size_t r = 0; r < n; ++r) d += a.at2(r, c) * a.at2(r, p);
      for (std::size_t r = 0; r < n; ++r) a.at2(r, c) -= d * a.at2(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += a.at2(r, c) * a.at2(r, c);
    norm = std::sqrt(norm);
    require(norm > 1e-8, "latent world: observation matrix lost column rank");
    for (std::size_t r = 0; r < n; ++r) a.at2(r, c) /= norm;
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= scale;
  return a;
}

Tensor plane_rotation(std::size_t k, std::size_t p, std::size_t q, double angle) {
  Tensor t({k, k});
  for (std::size_t i = 0; i < k; ++i) t.at2(i, i) = 1.0;
  const double c = std::cos(angle), s = std::sin(angle);
  t.at2(p, p) = c;
  t.at2(q, q) = c;
  t.at2(p, q) = -s;
  t.at2(q, p) = s;
  return t;
}

}  // namespace

LatentLinearWorld::LatentLinearWorld(LatentLinearConfig cfg) : cfg_(std::move(cfg)) {
  require(cfg_.latent_dim >= 2, "latent world: latent_dim must be >= 2");
  require(!cfg_.motions.empty(), "latent world: at least one motion required");
  require(cfg_.classes >= 1, "latent world: at least one class required");
  require(cfg_.noise_sigma >= 0.0, "latent world: noise_sigma must be >= 0");
  const std::size_t n = cfg_.obs_side * cfg_.obs_side;
  Rng rng(derive_seed(cfg_.seed, 0));
  a_ = orthonormal_columns(n, cfg_.latent_dim, cfg_.observation_scale, rng);
  {
    Tensor eye({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.at2(i, i) = 1.0;
    pinv_ = normal_equations_solve(a_, eye);  // (k, n)
  }
  // One orthogonal plane rotation per motion. Consecutive motions share an
  // axis (planes (m, m+1)), so distinct motions do not commute, the way
  // elevation/azimuth steps on a view sphere interact. Training only ever
  // sees single-step pairs, so pattern labels stay unambiguous.
  for (std::size_t m = 0; m < cfg_.motions.size(); ++m) {
    const std::size_t p = m % cfg_.latent_dim;
    const std::size_t q = (m + 1) % cfg_.latent_dim;
    require(p != q, "latent world: latent_dim too small for the motion list");
    transforms_.push_back(plane_rotation(cfg_.latent_dim, p, q, 0.45 + 0.12 * m));
  }
  // class prototypes: unit latents kept pairwise separated while possible
  Rng prng(derive_seed(cfg_.seed, 1));
  std::size_t attempts = 0;
  while (prototypes_.size() < cfg_.classes) {
    std::vector<double> s(cfg_.latent_dim);
    for (double& v : s) v = prng.normal();
    const double norm = l2_norm(s);
    if (norm < 1e-9) continue;
    for (double& v : s) v /= norm;
    bool ok = true;
    for (const auto& p : prototypes_) {
      if (l2_distance(p, s) < 0.6) {
        ok = false;
        break;
      }
    }
    if (ok || ++attempts > 200) {
      prototypes_.push_back(std::move(s));
      attempts = 0;
    }
  }
}

int LatentLinearWorld::motion_id(const std::string& name) const {
  for (std::size_t i = 0; i < cfg_.motions.size(); ++i) {
    if (cfg_.motions[i] == name) return static_cast<int>(i) + 1;
  }
  throw InputError("unknown motion name: " + name);
}

std::vector<double> LatentLinearWorld::apply_motion(int id,
                                                    std::span<const double> latent) const {
  require(id >= 1 && static_cast<std::size_t>(id) <= transforms_.size(),
          "motion id out of range");
  return matvec(transforms_[id - 1], latent);
}

Tensor LatentLinearWorld::observe(std::span<const double> latent, Rng* noise) const {
  const std::size_t n = cfg_.obs_side * cfg_.obs_side;
  require(latent.size() == cfg_.latent_dim, "observe: latent dimension mismatch");
  Tensor frame({cfg_.obs_side, cfg_.obs_side});
  for (std::size_t p = 0; p < n; ++p) {
    const double* row = a_.data() + p * cfg_.latent_dim;
    double acc = cfg_.observation_offset;
    for (std::size_t i = 0; i < cfg_.latent_dim; ++i) acc += row[i] * latent[i];
    if (noise != nullptr && cfg_.noise_sigma > 0.0) {
      acc += cfg_.noise_sigma * noise->normal();
    }
    frame[p] = acc;
  }
  return frame;
}

std::vector<double> LatentLinearWorld::oracle_features(const Tensor& frame) const {
  const std::size_t n = cfg_.obs_side * cfg_.obs_side;
  require(frame.size() == n, "oracle_features: frame size mismatch");
  std::vector<double> centered(n);
  for (std::size_t p = 0; p < n; ++p) centered[p] = frame[p] - cfg_.observation_offset;
  return matvec(pinv_, centered);
}

std::vector<double> LatentLinearWorld::sample_class_latent(std::size_t cls,
                                                           Rng& rng) const {
  require(cls < prototypes_.size(), "class index out of range");
  std::vector<double> s = prototypes_[cls];
  for (double& v : s) v += cfg_.class_jitter * rng.normal();
  return s;
}

Episode gen_latent_episode(const LatentLinearWorld& world, std::size_t length,
                           std::span<const std::string> script, std::uint64_t seed,
                           int class_id, double t0, double dt,
                           std::int64_t first_frame_id) {
  require(length >= 1, "episode length must be >= 1");
  require(script.size() + 1 == length, "script length must be frames - 1");
  Rng rng(seed);
  Episode ep;
  ep.label = class_id;
  const std::size_t cls = class_id >= 0
                              ? static_cast<std::size_t>(class_id)
                              : static_cast<std::size_t>(rng.below(world.config().classes));
  std::vector<double> s = world.sample_class_latent(cls, rng);
  std::vector<double> pose(world.motion_count(), 0.0);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) {
      const std::string& step = script[t - 1];
      if (step != "hold") {
        const int m = world.motion_id(step);
        s = world.apply_motion(m, s);
        pose[static_cast<std::size_t>(m) - 1] += 1.0;
      }
    }
    ep.latents.push_back(s);
    ep.frames.push_back(world.observe(s, &rng));
    EgoPoseRecord rec;
    rec.frame_id = first_frame_id + static_cast<std::int64_t>(t);
    rec.time_s = t0 + static_cast<double>(t) * dt;
    rec.pose = pose;
    ep.poses.push_back(std::move(rec));
  }
  return ep;
}

MotionPairSet gen_motion_pairs(const LatentLinearWorld& world,
                               std::span<const std::string> motions, std::size_t count,
                               std::uint64_t seed, bool with_noise) {
  require(!motions.empty(), "gen_motion_pairs: motion sequence required");
  Rng rng(seed);
  MotionPairSet set;
  set.before.reserve(count);
  set.after.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = rng.below(world.config().classes);
    std::vector<double> s = world.sample_class_latent(cls, rng);
    std::vector<double> s2 = s;
    for (const auto& name : motions) s2 = world.apply_motion(world.motion_id(name), s2);
    Rng* noise = with_noise ? &rng : nullptr;
    set.before.push_back(world.observe(s, noise));
    set.after.push_back(world.observe(s2, noise));
    set.labels.push_back(static_cast<int>(cls));
  }
  return set;
}

Dataset gen_latent_dataset(const LatentLinearWorld& world,
                           const EpisodeDatasetOptions& opts, std::uint64_t seed) {
  require(opts.episodes >= 1 && opts.episode_length >= 1, "empty dataset requested");
  Dataset ds;
  ds.classes = world.config().classes;
  Rng rng(derive_seed(seed, 100));
  std::int64_t next_id = 0;
  for (std::size_t e = 0; e < opts.episodes; ++e) {
    const int cls = static_cast<int>(e % ds.classes);  // round robin keeps classes covered
    std::vector<std::string> script;
    for (std::size_t t = 0; t + 1 < opts.episode_length; ++t) {
      if (opts.hold_prob > 0.0 && rng.uniform01() < opts.hold_prob) {
        script.emplace_back("hold");
      } else {
        script.push_back(
            world.config().motions[rng.below(world.config().motions.size())]);
      }
    }
    const double t0 =
        static_cast<double>(e) *
        (static_cast<double>(opts.episode_length) * opts.dt + opts.episode_gap_s);
    Episode ep = gen_latent_episode(world, opts.episode_length, script,
                                    derive_seed(seed, 200 + e), cls, t0, opts.dt,
                                    next_id);
    next_id += static_cast<std::int64_t>(ep.frames.size());
    for (auto& f : ep.frames) ds.frames.push_back(std::move(f));
    for (auto& p : ep.poses) ds.poses.push_back(std::move(p));
    ds.labels.insert(ds.labels.end(), ep.frames.size(), cls);
  }
  ds.manifest["world"] = {{"kind", "latent_linear"},
                          {"latent_dim", world.config().latent_dim},
                          {"obs_side", world.config().obs_side},
                          {"classes", world.config().classes},
                          {"noise_sigma", world.config().noise_sigma},
                          {"observation_scale", world.config().observation_scale},
                          {"observation_offset", world.config().observation_offset},
                          {"class_jitter", world.config().class_jitter},
                          {"motions", world.config().motions},
                          {"seed", world.config().seed}};
  ds.manifest["episode_length"] = opts.episode_length;
  ds.manifest["episodes"] = opts.episodes;
  ds.manifest["seed"] = seed;
  return ds;
}

// ---------------------------------------------------------------------------
// Texture world
// ---------------------------------------------------------------------------

TextureWorld::TextureWorld(TextureWorldConfig cfg) : cfg_(std::move(cfg)) {
  require(cfg_.frame_size >= 4, "texture world: frame_size must be >= 4");
  require(cfg_.classes >= 1, "texture world: at least one class required");
  require(cfg_.zoom_step > 0.0, "texture world: zoom_step must be positive");
  for (const auto& m : cfg_.motions) apply_motion(m, CamPose{});  // validates names
}

int TextureWorld::motion_id(const std::string& name) const {
  for (std::size_t i = 0; i < cfg_.motions.size(); ++i) {
    if (cfg_.motions[i] == name) return static_cast<int>(i) + 1;
  }
  throw InputError("unknown motion name: " + name);
}

namespace {

double lattice01(std::uint64_t seed, std::size_t cls, int octave, long ix, long iy) {
  std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ULL * (cls + 1)) ^
                    (0xc2b2ae3d27d4eb4fULL * static_cast<std::uint64_t>(octave + 1));
  h ^= static_cast<std::uint64_t>(ix) * 0xd6e8feb86659fd93ULL;
  h ^= static_cast<std::uint64_t>(iy) * 0xa0761d6478bd642fULL;
  std::uint64_t state = h;
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, std::size_t cls, int octave, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const long ix = static_cast<long>(fx), iy = static_cast<long>(fy);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  const double v00 = lattice01(seed, cls, octave, ix, iy);
  const double v10 = lattice01(seed, cls, octave, ix + 1, iy);
  const double v01 = lattice01(seed, cls, octave, ix, iy + 1);
  const double v11 = lattice01(seed, cls, octave, ix + 1, iy + 1);
  const double a = v00 + (v10 - v00) * tx;
  const double b = v01 + (v11 - v01) * tx;
  return a + (b - a) * ty;
}

}  // namespace

double TextureWorld::sample(std::size_t cls, double x, double y) const {
  require(cls < cfg_.classes, "texture class out of range");
  const double base = value_noise(cfg_.seed, cls, 0, x / 7.3, y / 7.3);
  const double detail = value_noise(cfg_.seed, cls, 1, x / 2.9, y / 2.9);
  return 0.65 * base + 0.35 * detail;
}

Tensor TextureWorld::render(std::size_t cls, const CamPose& pose) const {
  require(pose.zoom > 0.0, "render: zoom must be positive");
  const std::size_t hw = cfg_.frame_size;
  double theta = std::fmod(pose.theta, kTwoPi);
  if (theta < 0.0) theta += kTwoPi;
  const double c = std::cos(theta), s = std::sin(theta);
  const double scale = 1.0 / pose.zoom;
  const double half = (static_cast<double>(hw) - 1.0) / 2.0;
  Tensor frame({hw, hw});
  for (std::size_t r = 0; r < hw; ++r) {
    for (std::size_t col = 0; col < hw; ++col) {
      const double u = static_cast<double>(col) - half;
      const double v = static_cast<double>(r) - half;
      const double wx = pose.tx + scale * (c * u - s * v);
      const double wy = pose.ty + scale * (s * u + c * v);
      frame[r * hw + col] = sample(cls, wx, wy);
    }
  }
  return frame;
}

CamPose TextureWorld::apply_motion(const std::string& name, CamPose pose) const {
  if (name == "hold") return pose;
  if (name == "left_turn") {
    pose.theta += cfg_.turn_step;
  } else if (name == "right_turn") {
    pose.theta -= cfg_.turn_step;
  } else if (name == "zoom_in") {
    pose.zoom *= cfg_.zoom_step;
  } else if (name == "zoom_out") {
    pose.zoom /= cfg_.zoom_step;
  } else if (name == "shift_right") {
    pose.tx += cfg_.shift_step;
  } else if (name == "shift_up") {
    pose.ty -= cfg_.shift_step;
  } else {
    throw InputError("unknown texture motion: " + name);
  }
  return pose;
}

std::vector<double> TextureWorld::pose_vector(const CamPose& pose) {
  return {pose.tx, pose.ty, pose.theta, std::log(pose.zoom)};
}

Dataset gen_texture_dataset(const TextureWorld& world,
                            const TextureDatasetOptions& opts, std::uint64_t seed) {
  require(opts.episodes >= 1 && opts.episode_length >= 1, "empty dataset requested");
  Dataset ds;
  ds.classes = world.config().classes;
  Rng rng(derive_seed(seed, 300));
  std::int64_t next_id = 0;
  for (std::size_t e = 0; e < opts.episodes; ++e) {
    const int cls = static_cast<int>(e % ds.classes);  // round robin keeps classes covered
    CamPose pose;
    pose.tx = rng.uniform(-25.0, 25.0);
    pose.ty = rng.uniform(-25.0, 25.0);
    pose.theta = rng.uniform(0.0, kTwoPi);
    pose.zoom = rng.uniform(0.95, 1.05);
    const double t0 =
        static_cast<double>(e) *
        (static_cast<double>(opts.episode_length) * opts.dt + opts.episode_gap_s);
    for (std::size_t t = 0; t < opts.episode_length; ++t) {
      if (t > 0) {
        if (opts.hold_prob > 0.0 && rng.uniform01() < opts.hold_prob) {
          // hold
        } else {
          const auto& motions = world.config().motions;
          pose = world.apply_motion(motions[rng.below(motions.size())], pose);
        }
      }
      ds.frames.push_back(world.render(static_cast<std::size_t>(cls), pose));
      EgoPoseRecord rec;
      rec.frame_id = next_id++;
      rec.time_s = t0 + static_cast<double>(t) * opts.dt;
      rec.pose = TextureWorld::pose_vector(pose);
      ds.poses.push_back(std::move(rec));
      ds.labels.push_back(cls);
    }
  }
  ds.manifest["world"] = {{"kind", "texture"},
                          {"frame_size", world.config().frame_size},
                          {"classes", world.config().classes},
                          {"motions", world.config().motions},
                          {"turn_step", world.config().turn_step},
                          {"zoom_step", world.config().zoom_step},
                          {"shift_step", world.config().shift_step},
                          {"seed", world.config().seed}};
  ds.manifest["episode_length"] = opts.episode_length;
  ds.manifest["episodes"] = opts.episodes;
  ds.manifest["seed"] = seed;
  return ds;
}

MotionPairSet gen_texture_motion_pairs(const TextureWorld& world,
                                       std::span<const std::string> motions,
                                       std::size_t count, std::uint64_t seed) {
  require(!motions.empty(), "gen_texture_motion_pairs: motion sequence required");
  Rng rng(derive_seed(seed, 17));
  MotionPairSet set;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = rng.below(world.config().classes);
    CamPose pose;
    pose.tx = rng.uniform(-25.0, 25.0);
    pose.ty = rng.uniform(-25.0, 25.0);
    pose.theta = rng.uniform(0.0, kTwoPi);
    pose.zoom = rng.uniform(0.95, 1.05);
    CamPose moved = pose;
    for (const auto& name : motions) moved = world.apply_motion(name, moved);
    set.before.push_back(world.render(cls, pose));
    set.after.push_back(world.render(cls, moved));
    set.labels.push_back(static_cast<int>(cls));
  }
  return set;
}

}  // namespace egoeq
