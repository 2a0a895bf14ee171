#ifndef EGOEQ_CHECKPOINT_HPP
#define EGOEQ_CHECKPOINT_HPP

#include <optional>
#include <string>

#include "egoeq/losses.hpp"
#include "egoeq/motion.hpp"
#include "egoeq/network.hpp"

#include <json.hpp>

namespace egoeq {

// Checkpoint directory: manifest.json (layer specs, shapes, seed, iteration,
// named blob offsets, pattern model) + weights.bin (little-endian 64-bit
// floats concatenated in manifest order). Round trips are bitwise exact.

nlohmann::json layer_spec_to_json(const LayerSpec& s);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

nlohmann::json pattern_model_to_json(const MotionPatternModel& m);
MotionPatternModel pattern_model_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& dir, const Network& net,
                     const EquivMapSet* maps, const ClassifierHead* head,
                     const MotionPatternModel* patterns, std::uint64_t seed,
                     std::uint64_t iteration);

struct LoadedCheckpoint {
  Network net;
  EquivMapSet maps;                           // empty when not saved
  ClassifierHead head;                        // empty when not saved
  std::optional<MotionPatternModel> patterns;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace egoeq

#endif
