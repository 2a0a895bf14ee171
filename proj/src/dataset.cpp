#include "egoeq/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace egoeq {

namespace fs = std::filesystem;

void write_pgm(const std::string& path, const Tensor& frame) {
  require(frame.rank() == 2, "write_pgm: frame must be (h, w)");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write PGM: " + path);
  const std::size_t h = frame.dim(0), w = frame.dim(1);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double q = std::round(frame[i] * 255.0);
    bytes[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, q)));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(out.good(), "failed writing PGM: " + path);
}

namespace {

// Reads one whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (!tok.empty()) return tok;
  throw InputError("truncated PGM header at byte " + std::to_string(in.tellg()) +
                   ": " + path);
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open PGM: " + path);
  require(pgm_token(in, path) == "P5", "not a binary PGM (P5): " + path);
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pgm_token(in, path));
    h = std::stoul(pgm_token(in, path));
    maxval = std::stoul(pgm_token(in, path));
  } catch (const std::exception&) {
    throw InputError("malformed PGM header: " + path);
  }
  require(w > 0 && h > 0, "PGM with empty dimensions: " + path);
  require(maxval == 255, "PGM maxval must be 255: " + path);
  std::vector<unsigned char> bytes(w * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw InputError("truncated PGM pixel data at byte offset " +
                     std::to_string(in.gcount()) + " of " +
                     std::to_string(bytes.size()) + ": " + path);
  }
  Tensor frame({h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    frame[i] = static_cast<double>(bytes[i]) / 255.0;
  }
  return frame;
}

namespace {

std::string frame_name(std::size_t idx) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.pgm", idx);
  return buf;
}

void write_labels_csv(const std::string& path, std::span<const int> labels) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write labels CSV: " + path);
  out << "frame_id,class\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i << "," << labels[i] << "\n";
  }
  require(out.good(), "failed writing labels CSV: " + path);
}

std::vector<int> read_labels_csv(const std::string& path, std::size_t n_frames) {
  std::ifstream in(path);
  require(in.good(), "cannot open labels CSV: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "labels CSV is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "frame_id,class", "labels CSV header must be 'frame_id,class': " + path);
  std::vector<int> labels(n_frames, -1);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      require(comma != std::string::npos, "missing comma");
      const std::size_t id = std::stoul(line.substr(0, comma));
      require(id < n_frames, "frame_id out of range");
      labels[id] = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw InputError("labels CSV parse error at " + path + ":" +
                       std::to_string(line_no));
    }
  }
  return labels;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
  require(!ds.frames.empty(), "write_dataset: dataset has no frames");
  require(ds.poses.size() == ds.frames.size(),
          "write_dataset: one pose record per frame required");
  fs::create_directories(fs::path(dir) / "frames");
  nlohmann::json manifest = ds.manifest;
  manifest["frames"] = ds.frames.size();
  manifest["height"] = ds.frame_height();
  manifest["width"] = ds.frame_width();
  manifest["pose_dim"] = ds.poses.front().pose.size();
  manifest["classes"] = ds.classes;
  manifest["labeled"] = !ds.labels.empty();
  {
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    require(out.good(), "cannot write dataset manifest in " + dir);
    out << manifest.dump(2) << "\n";
  }
  write_pose_csv((fs::path(dir) / "poses.csv").string(), ds.poses);
  if (!ds.labels.empty()) {
    require(ds.labels.size() == ds.frames.size(),
            "write_dataset: labels must cover all frames");
    write_labels_csv((fs::path(dir) / "labels.csv").string(), ds.labels);
  }
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    write_pgm((fs::path(dir) / "frames" / frame_name(i)).string(), ds.frames[i]);
  }
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream min(root / "manifest.json");
  require(min.good(), "cannot open dataset manifest: " + (root / "manifest.json").string());
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const std::exception& e) {
    throw InputError("malformed dataset manifest in " + dir + ": " + e.what());
  }
  Dataset ds;
  ds.manifest = manifest;
  const std::size_t n = manifest.at("frames").get<std::size_t>();
  ds.classes = manifest.value("classes", 0);
  ds.poses = read_pose_csv((root / "poses.csv").string());
  require(ds.poses.size() == n, "dataset pose count does not match manifest: " + dir);
  if (manifest.value("labeled", false)) {
    ds.labels = read_labels_csv((root / "labels.csv").string(), n);
  }
  ds.frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.frames.push_back(read_pgm((root / "frames" / frame_name(i)).string()));
  }
  return ds;
}

Tensor gather_batch(const std::vector<Tensor>& frames,
                    std::span<const std::size_t> indices,
                    const std::vector<std::size_t>& input_shape) {
  require(!indices.empty(), "gather_batch: empty batch");
  const std::size_t sample = Tensor::shape_product(input_shape);
  std::vector<std::size_t> shape{indices.size()};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  Tensor batch(shape);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Tensor& f = frames[indices[r]];
    require(f.size() == sample, "gather_batch: frame size " + std::to_string(f.size()) +
                                    " does not match network input " +
                                    Tensor::shape_str(input_shape));
    std::copy(f.data(), f.data() + sample, batch.data() + r * sample);
  }
  return batch;
}

}  // namespace egoeq
