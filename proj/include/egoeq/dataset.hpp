#ifndef EGOEQ_DATASET_HPP
#define EGOEQ_DATASET_HPP

#include <optional>
#include <string>
#include <vector>

#include "egoeq/motion.hpp"
#include "egoeq/tensor.hpp"

#include <json.hpp>

namespace egoeq {

// In-memory frame stream: grayscale frames in [0,1], pose records aligned by
// index (frame_id == index), optional class labels.
struct Dataset {
  std::vector<Tensor> frames;  // each (h, w)
  std::vector<EgoPoseRecord> poses;
  std::vector<int> labels;  // empty, or one label per frame (-1 = unlabeled)
  std::size_t classes = 0;
  nlohmann::json manifest;  // world config echo, seed, counts

  std::size_t size() const { return frames.size(); }
  std::size_t frame_height() const { return frames.empty() ? 0 : frames.front().dim(0); }
  std::size_t frame_width() const { return frames.empty() ? 0 : frames.front().dim(1); }
};

// Binary PGM (P5, maxval 255). Values quantized with round(v*255), clamped.
void write_pgm(const std::string& path, const Tensor& frame);
Tensor read_pgm(const std::string& path);

// Directory layout: manifest.json, poses.csv, labels.csv (when labeled),
// frames/frame_NNNNNN.pgm. Reading back yields exactly the quantized values.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

// Stacks frames[indices] into a batch shaped for the given per-sample input
// shape (flat (n) or (1,h,w)).
Tensor gather_batch(const std::vector<Tensor>& frames,
                    std::span<const std::size_t> indices,
                    const std::vector<std::size_t>& input_shape);

}  // namespace egoeq

#endif
