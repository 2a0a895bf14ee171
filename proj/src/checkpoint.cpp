#include "egoeq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace egoeq {

namespace fs = std::filesystem;

nlohmann::json layer_spec_to_json(const LayerSpec& s) {
  nlohmann::json j;
  j["kind"] = layer_kind_name(s.kind);
  switch (s.kind) {
    case LayerKind::FullyConnected:
      j["in"] = s.in_dim;
      j["out"] = s.out_dim;
      break;
    case LayerKind::Conv:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      j["window"] = s.window;
      j["stride"] = s.stride;
      break;
    case LayerKind::ReLU:
      break;
  }
  return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  try {
    if (kind == "fully_connected") {
      return LayerSpec::fully_connected(j.at("in").get<std::size_t>(),
                                        j.at("out").get<std::size_t>());
    }
    if (kind == "conv") {
      return LayerSpec::conv(j.at("in_channels").get<std::size_t>(),
                             j.at("out_channels").get<std::size_t>(),
                             j.at("kernel").get<std::size_t>(),
                             j.value("stride", std::size_t{1}));
    }
    if (kind == "max_pool") {
      return LayerSpec::max_pool(j.at("window").get<std::size_t>(),
                                 j.at("stride").get<std::size_t>());
    }
    if (kind == "avg_pool") {
      return LayerSpec::avg_pool(j.at("window").get<std::size_t>(),
                                 j.at("stride").get<std::size_t>());
    }
    if (kind == "relu") return LayerSpec::relu();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad layer spec: " + std::string(e.what()));
  }
  throw InputError("unknown layer kind: " + kind);
}

nlohmann::json pattern_model_to_json(const MotionPatternModel& m) {
  nlohmann::json j;
  j["centroids"] = m.centroids;
  j["retained"] = m.retained;
  j["mean"] = m.standardization.mean;
  j["scale"] = m.standardization.scale;
  return j;
}

MotionPatternModel pattern_model_from_json(const nlohmann::json& j) {
  MotionPatternModel m;
  try {
    m.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    m.retained = j.at("retained").get<std::vector<std::size_t>>();
    m.standardization.mean = j.at("mean").get<std::vector<double>>();
    m.standardization.scale = j.at("scale").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad pattern model: " + std::string(e.what()));
  }
  require(!m.centroids.empty(), "pattern model has no centroids");
  for (std::size_t idx : m.retained) {
    require(idx < m.centroids.size(), "pattern model retains unknown centroid");
  }
  return m;
}

namespace {

void write_le_doubles(std::ofstream& out, const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(t[i]);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

void read_le_doubles(std::ifstream& in, Tensor& t, const std::string& name) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (in.gcount() != 8) {
      throw InputError("checkpoint blob truncated while reading " + name);
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    t[i] = std::bit_cast<double>(bits);
  }
}

struct BlobPlan {
  std::string name;
  const Tensor* tensor;
};

std::vector<BlobPlan> plan_blobs(const Network& net, const EquivMapSet* maps,
                                 const ClassifierHead* head) {
  std::vector<BlobPlan> plan;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& p = net.params()[i];
    if (p.weight.empty()) continue;
    plan.push_back({"layer" + std::to_string(i) + ".weight", &p.weight});
    plan.push_back({"layer" + std::to_string(i) + ".bias", &p.bias});
  }
  if (maps != nullptr) {
    for (std::size_t g = 0; g < maps->count(); ++g) {
      plan.push_back({"map" + std::to_string(g + 1) + ".weight", &maps->maps[g].weight});
      plan.push_back({"map" + std::to_string(g + 1) + ".bias", &maps->maps[g].bias});
    }
  }
  if (head != nullptr && !head->weight.empty()) {
    plan.push_back({"head.weight", &head->weight});
    plan.push_back({"head.bias", &head->bias});
  }
  return plan;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Network& net,
                     const EquivMapSet* maps, const ClassifierHead* head,
                     const MotionPatternModel* patterns, std::uint64_t seed,
                     std::uint64_t iteration) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "egoeq-checkpoint";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["iteration"] = iteration;
  manifest["input_shape"] = net.input_shape();
  manifest["feature_dim"] = net.feature_dim();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : net.layers()) layers.push_back(layer_spec_to_json(s));
  manifest["layers"] = layers;
  if (maps != nullptr) {
    manifest["maps"] = {{"count", maps->count()}, {"dim", maps->dim()}};
  }
  if (head != nullptr && !head->weight.empty()) {
    manifest["head"] = {{"feature_dim", head->feature_dim()},
                        {"classes", head->classes()}};
  }
  if (patterns != nullptr) manifest["pattern_model"] = pattern_model_to_json(*patterns);

  const auto plan = plan_blobs(net, maps, head);
  nlohmann::json blobs = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& b : plan) {
    blobs.push_back({{"name", b.name},
                     {"shape", b.tensor->shape()},
                     {"offset_bytes", offset},
                     {"count", b.tensor->size()}});
    offset += b.tensor->size() * 8;
  }
  manifest["blobs"] = blobs;
  manifest["blob_file"] = "weights.bin";

  {
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
    require(out.good(), "cannot write checkpoint manifest in " + dir);
    out << manifest.dump(2) << "\n";
    require(out.good(), "failed writing checkpoint manifest in " + dir);
  }
  {
    std::ofstream out(fs::path(dir) / "weights.bin", std::ios::binary);
    require(out.good(), "cannot write checkpoint blob in " + dir);
    for (const auto& b : plan) write_le_doubles(out, *b.tensor);
    require(out.good(), "failed writing checkpoint blob in " + dir);
  }
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  std::ifstream min(fs::path(dir) / "manifest.json");
  require(min.good(), "cannot open checkpoint manifest: " + dir);
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const std::exception& e) {
    throw InputError("malformed checkpoint manifest in " + dir + ": " + e.what());
  }
  require(manifest.value("format", "") == "egoeq-checkpoint",
          "not an egoeq checkpoint: " + dir);

  std::vector<LayerSpec> specs;
  for (const auto& j : manifest.at("layers")) specs.push_back(layer_spec_from_json(j));
  const auto input_shape = manifest.at("input_shape").get<std::vector<std::size_t>>();

  LoadedCheckpoint ck{Network(input_shape, specs)};
  ck.seed = manifest.value("seed", std::uint64_t{0});
  ck.iteration = manifest.value("iteration", std::uint64_t{0});

  if (manifest.contains("maps")) {
    const std::size_t count = manifest["maps"].at("count").get<std::size_t>();
    const std::size_t dim = manifest["maps"].at("dim").get<std::size_t>();
    for (std::size_t g = 0; g < count; ++g) {
      AffineMap m;
      m.weight = Tensor({dim, dim});
      m.bias = Tensor({dim});
      ck.maps.maps.push_back(std::move(m));
    }
  }
  if (manifest.contains("head")) {
    const std::size_t d = manifest["head"].at("feature_dim").get<std::size_t>();
    const std::size_t c = manifest["head"].at("classes").get<std::size_t>();
    ck.head.weight = Tensor({d, c});
    ck.head.bias = Tensor({c});
  }
  if (manifest.contains("pattern_model")) {
    ck.patterns = pattern_model_from_json(manifest["pattern_model"]);
  }

  std::ifstream blob(fs::path(dir) / manifest.value("blob_file", "weights.bin"),
                     std::ios::binary);
  require(blob.good(), "cannot open checkpoint blob in " + dir);
  auto& params = ck.net.mutable_params();
  for (auto& p : params) {
    if (p.weight.empty()) continue;
    read_le_doubles(blob, p.weight, "layer weight");
    read_le_doubles(blob, p.bias, "layer bias");
  }
  for (auto& m : ck.maps.maps) {
    read_le_doubles(blob, m.weight, "map weight");
    read_le_doubles(blob, m.bias, "map bias");
  }
  if (!ck.head.weight.empty()) {
    read_le_doubles(blob, ck.head.weight, "head weight");
    read_le_doubles(blob, ck.head.bias, "head bias");
  }
  return ck;
}

}  // namespace egoeq
