#ifndef EGOEQ_WORLDS_HPP
#define EGOEQ_WORLDS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "egoeq/dataset.hpp"
#include "egoeq/linalg.hpp"
#include "egoeq/motion.hpp"

namespace egoeq {

// ---------------------------------------------------------------------------
// Latent-linear world: observations are a fixed linear image of a latent
// state, and each named motion acts on the latent by an orthogonal matrix.
// Exactly equivariant features (pinv(A) applied to the pixels) exist by
// construction, which is what makes this the certification testbed.
// ---------------------------------------------------------------------------

struct LatentLinearConfig {
  std::size_t latent_dim = 4;
  std::size_t obs_side = 8;           // frames are obs_side x obs_side
  std::size_t classes = 5;
  double noise_sigma = 0.01;
  double observation_scale = 0.45;    // column scale of A
  double observation_offset = 0.5;    // keeps pixels PGM-friendly
  double class_jitter = 0.15;
  std::vector<std::string> motions = {"u", "r"};
  std::uint64_t seed = 1;
};

class LatentLinearWorld {
 public:
  explicit LatentLinearWorld(LatentLinearConfig cfg);

  const LatentLinearConfig& config() const { return cfg_; }
  std::size_t motion_count() const { return transforms_.size(); }
  int motion_id(const std::string& name) const;  // 1-based
  const std::string& motion_name(int id) const { return cfg_.motions[id - 1]; }

  const Tensor& observation_matrix() const { return a_; }
  const Tensor& motion_transform(int id) const { return transforms_[id - 1]; }
  const std::vector<double>& prototype(std::size_t cls) const { return prototypes_[cls]; }

  std::vector<double> apply_motion(int id, std::span<const double> latent) const;
  // x = A s + offset (+ noise when rng is given)
  Tensor observe(std::span<const double> latent, Rng* noise = nullptr) const;
  // Exact linear decode: pinv(A) (x - offset). Oracle features for tests,
  // NBV runs and equivariance certificates.
  std::vector<double> oracle_features(const Tensor& frame) const;

  std::vector<double> sample_class_latent(std::size_t cls, Rng& rng) const;

 private:
  LatentLinearConfig cfg_;
  Tensor a_;                        // (n, k), orthonormal columns * scale
  Tensor pinv_;                     // (k, n)
  std::vector<Tensor> transforms_;  // (k, k) per motion
  std::vector<std::vector<double>> prototypes_;
};

struct Episode {
  std::vector<Tensor> frames;
  std::vector<EgoPoseRecord> poses;  // pose = cumulative step count per motion
  std::vector<std::vector<double>> latents;
  int label = -1;
};

// Script entries are motion names or "hold"; script length = frames - 1.
// Deterministic under seed.
Episode gen_latent_episode(const LatentLinearWorld& world, std::size_t length,
                           std::span<const std::string> script, std::uint64_t seed,
                           int class_id = -1, double t0 = 0.0, double dt = 0.1,
                           std::int64_t first_frame_id = 0);

// Paired frames (x, g_m(...g_1(x))) for the given motion sequence, sampled at
// random class latents. Returns stacked before/after frames.
struct MotionPairSet {
  std::vector<Tensor> before, after;
  std::vector<int> labels;
};
MotionPairSet gen_motion_pairs(const LatentLinearWorld& world,
                               std::span<const std::string> motions, std::size_t count,
                               std::uint64_t seed, bool with_noise = false);

// Multi-episode dataset on a single time axis; inter-episode gaps are large
// enough that build_pairs never pairs across episodes.
struct EpisodeDatasetOptions {
  std::size_t episodes = 20;
  std::size_t episode_length = 9;
  double dt = 0.1;
  double episode_gap_s = 30.0;
  double hold_prob = 0.0;
};
Dataset gen_latent_dataset(const LatentLinearWorld& world,
                           const EpisodeDatasetOptions& opts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Texture window world: a seeded procedural texture per class, viewed through
// a translating / rotating / zooming camera window.
// ---------------------------------------------------------------------------

struct CamPose {
  double tx = 0.0, ty = 0.0;
  double theta = 0.0;  // radians
  double zoom = 1.0;
};

struct TextureWorldConfig {
  std::size_t frame_size = 16;
  std::size_t classes = 3;
  std::vector<std::string> motions = {"left_turn", "right_turn", "zoom_in"};
  double turn_step = 0.25;    // radians per turn motion
  double zoom_step = 1.25;    // zoom factor per zoom motion
  double shift_step = 2.0;    // pixels per shift motion
  std::uint64_t seed = 1;
};

class TextureWorld {
 public:
  explicit TextureWorld(TextureWorldConfig cfg);

  const TextureWorldConfig& config() const { return cfg_; }
  int motion_id(const std::string& name) const;
  std::size_t motion_count() const { return cfg_.motions.size(); }

  // Smooth value-noise texture in [0,1]; deterministic under (seed, class).
  double sample(std::size_t cls, double x, double y) const;
  Tensor render(std::size_t cls, const CamPose& pose) const;

  CamPose apply_motion(const std::string& name, CamPose pose) const;
  // Pose vector for mining: (tx, ty, theta, log zoom).
  static std::vector<double> pose_vector(const CamPose& pose);

 private:
  TextureWorldConfig cfg_;
};

struct TextureDatasetOptions {
  std::size_t episodes = 20;
  std::size_t episode_length = 9;
  double dt = 0.1;
  double episode_gap_s = 30.0;
  double hold_prob = 0.25;
};
Dataset gen_texture_dataset(const TextureWorld& world,
                            const TextureDatasetOptions& opts, std::uint64_t seed);

// Paired renders (before, after motion sequence) at random start poses.
MotionPairSet gen_texture_motion_pairs(const TextureWorld& world,
                                       std::span<const std::string> motions,
                                       std::size_t count, std::uint64_t seed);

}  // namespace egoeq

#endif
