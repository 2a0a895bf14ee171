#ifndef EGOEQ_NETWORK_HPP
#define EGOEQ_NETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "egoeq/tensor.hpp"

namespace egoeq {

enum class LayerKind { FullyConnected, Conv, MaxPool, AvgPool, ReLU };

std::string layer_kind_name(LayerKind k);

// One layer of the chain. Only the fields for the given kind are meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in_dim = 0, out_dim = 0;                          // FullyConnected
  std::size_t in_channels = 0, out_channels = 0, kernel = 0;    // Conv
  std::size_t window = 0;                                       // pooling
  std::size_t stride = 1;                                       // Conv / pooling

  static LayerSpec fully_connected(std::size_t in_dim, std::size_t out_dim);
  static LayerSpec conv(std::size_t in_channels, std::size_t out_channels,
                        std::size_t kernel, std::size_t stride = 1);
  static LayerSpec max_pool(std::size_t window, std::size_t stride);
  static LayerSpec avg_pool(std::size_t window, std::size_t stride);
  static LayerSpec relu();

  bool has_params() const {
    return kind == LayerKind::FullyConnected || kind == LayerKind::Conv;
  }
};

struct LayerParams {
  Tensor weight;
  Tensor bias;
};

// A fixed chain of layers with its parameters. The per-sample input shape is
// set at construction and the whole chain is shape-checked then; feature_dim
// is the flattened size of the last layer's output.
//
// One Network value is the single source of weights for every Siamese stack:
// callers run forward() on the same object for each stack, so tying never has
// to be synchronized.
class Network {
 public:
  Network(std::vector<std::size_t> input_shape, std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  // activation_shape(i) = per-sample input shape of layer i;
  // activation_shape(layers().size()) = per-sample output shape.
  const std::vector<std::size_t>& activation_shape(std::size_t i) const {
    return act_shapes_[i];
  }
  std::size_t feature_dim() const { return feature_dim_; }

  const std::vector<LayerParams>& params() const { return params_; }
  // Mutation bumps the version so stale tapes are detectable in backward().
  std::vector<LayerParams>& mutable_params() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }

  std::size_t param_count() const;

 private:
  std::vector<std::size_t> input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<std::size_t>> act_shapes_;
  std::vector<LayerParams> params_;
  std::size_t feature_dim_ = 0;
  std::uint64_t version_ = 0;
};

// Activation record from one forward pass; reused by backward for exact
// reverse-mode gradients.
struct ForwardTape {
  std::vector<Tensor> activations;             // activations[i] = input to layer i
  std::vector<std::vector<std::size_t>> pool_argmax;  // per max-pool layer, one entry per layer slot
  std::size_t batch = 0;
  const Network* net = nullptr;
  std::uint64_t net_version = 0;
};

// Runs the chain on a batch (first axis = sample). Returns features with
// shape (batch, feature_dim). Pass a tape to enable backward().
Tensor forward(const Network& net, const Tensor& batch, ForwardTape* tape = nullptr);

struct Gradients {
  std::vector<LayerParams> layers;  // shapes mirror Network::params()
};

Gradients zero_gradients(const Network& net);

// Accumulates parameter gradients into grads and returns the input gradient.
// grad_out must match the forward features' shape; the tape must come from a
// forward() on this net with unchanged parameters.
Tensor backward(const Network& net, const ForwardTape& tape, const Tensor& grad_out,
                Gradients& grads);

// Glorot uniform init: weights ~ U[-b, b], b = sqrt(6 / (fan_in + fan_out)),
// biases zero. Deterministic for a fixed seed.
void init_xavier(Network& net, std::uint64_t seed);

double xavier_bound(std::size_t fan_in, std::size_t fan_out);

}  // namespace egoeq

#endif
