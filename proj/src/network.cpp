#include "egoeq/network.hpp"

#include <cmath>

namespace egoeq {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::FullyConnected: return "fully_connected";
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "max_pool";
    case LayerKind::AvgPool: return "avg_pool";
    case LayerKind::ReLU: return "relu";
  }
  return "?";
}

LayerSpec LayerSpec::fully_connected(std::size_t in_dim, std::size_t out_dim) {
  require(in_dim > 0 && out_dim > 0, "fully_connected dims must be positive");
  LayerSpec s;
  s.kind = LayerKind::FullyConnected;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  return s;
}

LayerSpec LayerSpec::conv(std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel, std::size_t stride) {
  require(in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0,
          "conv parameters must be positive");
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::max_pool(std::size_t window, std::size_t stride) {
  require(window > 0 && stride > 0, "pool parameters must be positive");
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.window = window;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::avg_pool(std::size_t window, std::size_t stride) {
  LayerSpec s = max_pool(window, stride);
  s.kind = LayerKind::AvgPool;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::ReLU;
  return s;
}

namespace {

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride) {
  return (in - kernel) / stride + 1;  // valid, no padding
}

std::vector<std::size_t> infer_output_shape(const LayerSpec& s,
                                            const std::vector<std::size_t>& in,
                                            std::size_t layer_index) {
  const std::string where =
      "layer " + std::to_string(layer_index) + " (" + layer_kind_name(s.kind) + ")";
  switch (s.kind) {
    case LayerKind::FullyConnected: {
      const std::size_t flat = Tensor::shape_product(in);
      require(flat == s.in_dim, where + ": expected flattened input of " +
                                    std::to_string(s.in_dim) + ", got " +
                                    Tensor::shape_str(in));
      return {s.out_dim};
    }
    case LayerKind::Conv: {
      require(in.size() == 3, where + ": expects (channels,h,w) input, got " +
                                  Tensor::shape_str(in));
      require(in[0] == s.in_channels,
              where + ": expects " + std::to_string(s.in_channels) +
                  " input channels, got " + std::to_string(in[0]));
      require(in[1] >= s.kernel && in[2] >= s.kernel,
              where + ": kernel " + std::to_string(s.kernel) +
                  " larger than input " + Tensor::shape_str(in));
      return {s.out_channels, conv_out(in[1], s.kernel, s.stride),
              conv_out(in[2], s.kernel, s.stride)};
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: {
      require(in.size() == 3, where + ": expects (channels,h,w) input, got " +
                                  Tensor::shape_str(in));
      require(in[1] >= s.window && in[2] >= s.window,
              where + ": window " + std::to_string(s.window) +
                  " larger than input " + Tensor::shape_str(in));
      return {in[0], conv_out(in[1], s.window, s.stride),
              conv_out(in[2], s.window, s.stride)};
    }
    case LayerKind::ReLU:
      return in;
  }
  throw InputError(where + ": unknown layer kind");
}

LayerParams make_params(const LayerSpec& s) {
  LayerParams p;
  switch (s.kind) {
    case LayerKind::FullyConnected:
      p.weight = Tensor({s.out_dim, s.in_dim});
      p.bias = Tensor({s.out_dim});
      break;
    case LayerKind::Conv:
      p.weight = Tensor({s.out_channels, s.in_channels, s.kernel, s.kernel});
      p.bias = Tensor({s.out_channels});
      break;
    default:
      break;
  }
  return p;
}

}  // namespace

Network::Network(std::vector<std::size_t> input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  require(!input_shape_.empty(), "network input shape must be non-empty");
  require(!layers_.empty(), "network needs at least one layer");
  Tensor::shape_product(input_shape_);  // validates positivity
  act_shapes_.push_back(input_shape_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    act_shapes_.push_back(infer_output_shape(layers_[i], act_shapes_.back(), i));
    params_.push_back(make_params(layers_[i]));
  }
  feature_dim_ = Tensor::shape_product(act_shapes_.back());
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void init_xavier(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  auto& params = net.mutable_params();
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const LayerSpec& s = net.layers()[i];
    if (!s.has_params()) continue;
    std::size_t fan_in = 0, fan_out = 0;
    if (s.kind == LayerKind::FullyConnected) {
      fan_in = s.in_dim;
      fan_out = s.out_dim;
    } else {
      fan_in = s.in_channels * s.kernel * s.kernel;
      fan_out = s.out_channels * s.kernel * s.kernel;
    }
    const double b = xavier_bound(fan_in, fan_out);
    for (std::size_t j = 0; j < params[i].weight.size(); ++j) {
      params[i].weight[j] = rng.uniform(-b, b);
    }
    params[i].bias.fill(0.0);
  }
}

namespace {

struct BatchView {
  std::size_t n;           // batch size
  std::size_t c, h, w;     // per-sample spatial dims (c*h*w = sample size)
};

BatchView spatial_view(const std::vector<std::size_t>& sample_shape, std::size_t batch) {
  require(sample_shape.size() == 3, "spatial layer on non-spatial activation");
  return {batch, sample_shape[0], sample_shape[1], sample_shape[2]};
}

void fc_forward(const LayerSpec& s, const LayerParams& p, const Tensor& in, Tensor& out) {
  const std::size_t n = in.dim(0);
  parallel_for(n, [&](std::size_t r) {
    auto x = in.row(r);
    auto y = out.row(r);
    for (std::size_t o = 0; o < s.out_dim; ++o) {
      const double* wrow = p.weight.data() + o * s.in_dim;
      double acc = p.bias[o];
      for (std::size_t i = 0; i < s.in_dim; ++i) acc += wrow[i] * x[i];
      y[o] = acc;
    }
  });
}

void fc_backward(const LayerSpec& s, const LayerParams& p, const Tensor& in,
                 const Tensor& gout, LayerParams& gp, Tensor& gin) {
  const std::size_t n = in.dim(0);
  for (std::size_t r = 0; r < n; ++r) {
    auto x = in.row(r);
    auto g = gout.row(r);
    auto gx = gin.row(r);
    for (std::size_t o = 0; o < s.out_dim; ++o) {
      const double go = g[o];
      gp.bias[o] += go;
      double* gwrow = gp.weight.data() + o * s.in_dim;
      const double* wrow = p.weight.data() + o * s.in_dim;
      for (std::size_t i = 0; i < s.in_dim; ++i) {
        gwrow[i] += go * x[i];
        gx[i] += go * wrow[i];
      }
    }
  }
}

void conv_forward(const LayerSpec& s, const LayerParams& p, const BatchView& v,
                  const Tensor& in, const std::vector<std::size_t>& out_shape,
                  Tensor& out) {
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  const std::size_t k = s.kernel, st = s.stride;
  parallel_for(v.n, [&](std::size_t r) {
    const double* xin = in.data() + r * v.c * v.h * v.w;
    double* xout = out.data() + r * s.out_channels * oh * ow;
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = p.bias[oc];
          for (std::size_t ic = 0; ic < v.c; ++ic) {
            const double* wbase = p.weight.data() + ((oc * v.c + ic) * k) * k;
            const double* ibase = xin + ic * v.h * v.w;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const double* irow = ibase + (y * st + ky) * v.w + x * st;
              const double* wrow = wbase + ky * k;
              for (std::size_t kx = 0; kx < k; ++kx) acc += wrow[kx] * irow[kx];
            }
          }
          xout[(oc * oh + y) * ow + x] = acc;
        }
      }
    }
  });
}

void conv_backward(const LayerSpec& s, const LayerParams& p, const BatchView& v,
                   const Tensor& in, const std::vector<std::size_t>& out_shape,
                   const Tensor& gout, LayerParams& gp, Tensor& gin) {
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  const std::size_t k = s.kernel, st = s.stride;
  for (std::size_t r = 0; r < v.n; ++r) {
    const double* xin = in.data() + r * v.c * v.h * v.w;
    double* gxin = gin.data() + r * v.c * v.h * v.w;
    const double* gx = gout.data() + r * s.out_channels * oh * ow;
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = gx[(oc * oh + y) * ow + x];
          if (go == 0.0) continue;
          gp.bias[oc] += go;
          for (std::size_t ic = 0; ic < v.c; ++ic) {
            const double* wbase = p.weight.data() + ((oc * v.c + ic) * k) * k;
            double* gwbase = gp.weight.data() + ((oc * v.c + ic) * k) * k;
            const double* ibase = xin + ic * v.h * v.w;
            double* gibase = gxin + ic * v.h * v.w;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::size_t iy = y * st + ky;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::size_t ix = x * st + kx;
                gwbase[ky * k + kx] += go * ibase[iy * v.w + ix];
                gibase[iy * v.w + ix] += go * wbase[ky * k + kx];
              }
            }
          }
        }
      }
    }
  }
}

void pool_forward(const LayerSpec& s, const BatchView& v, const Tensor& in,
                  const std::vector<std::size_t>& out_shape, Tensor& out,
                  std::vector<std::size_t>* argmax) {
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  const std::size_t wnd = s.window, st = s.stride;
  const bool is_max = s.kind == LayerKind::MaxPool;
  if (is_max) argmax->assign(out.size(), 0);
  const double inv_area = 1.0 / static_cast<double>(wnd * wnd);
  parallel_for(v.n, [&](std::size_t r) {
    for (std::size_t c = 0; c < v.c; ++c) {
      const double* iplane = in.data() + (r * v.c + c) * v.h * v.w;
      const std::size_t plane_off = (r * v.c + c) * v.h * v.w;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const std::size_t out_idx = ((r * v.c + c) * oh + y) * ow + x;
          if (is_max) {
            // ties break to the lowest linear index: strict > keeps the first
            double best = iplane[(y * st) * v.w + x * st];
            std::size_t best_idx = (y * st) * v.w + x * st;
            for (std::size_t ky = 0; ky < wnd; ++ky) {
              for (std::size_t kx = 0; kx < wnd; ++kx) {
                const std::size_t idx = (y * st + ky) * v.w + (x * st + kx);
                if (iplane[idx] > best) {
                  best = iplane[idx];
                  best_idx = idx;
                }
              }
            }
            out[out_idx] = best;
            (*argmax)[out_idx] = plane_off + best_idx;
          } else {
            double acc = 0.0;
            for (std::size_t ky = 0; ky < wnd; ++ky) {
              for (std::size_t kx = 0; kx < wnd; ++kx) {
                acc += iplane[(y * st + ky) * v.w + (x * st + kx)];
              }
            }
            out[out_idx] = acc * inv_area;
          }
        }
      }
    }
  });
}

void pool_backward(const LayerSpec& s, const BatchView& v,
                   const std::vector<std::size_t>& out_shape, const Tensor& gout,
                   const std::vector<std::size_t>& argmax, Tensor& gin) {
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  const std::size_t wnd = s.window, st = s.stride;
  if (s.kind == LayerKind::MaxPool) {
    for (std::size_t i = 0; i < gout.size(); ++i) gin[argmax[i]] += gout[i];
    return;
  }
  const double inv_area = 1.0 / static_cast<double>(wnd * wnd);
  for (std::size_t r = 0; r < v.n; ++r) {
    for (std::size_t c = 0; c < v.c; ++c) {
      double* gplane = gin.data() + (r * v.c + c) * v.h * v.w;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const double g = gout[((r * v.c + c) * oh + y) * ow + x] * inv_area;
          for (std::size_t ky = 0; ky < wnd; ++ky) {
            for (std::size_t kx = 0; kx < wnd; ++kx) {
              gplane[(y * st + ky) * v.w + (x * st + kx)] += g;
            }
          }
        }
      }
    }
  }
}

std::vector<std::size_t> batched(std::size_t n, const std::vector<std::size_t>& sample) {
  std::vector<std::size_t> s;
  s.reserve(sample.size() + 1);
  s.push_back(n);
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

}  // namespace

Tensor forward(const Network& net, const Tensor& batch, ForwardTape* tape) {
  require(batch.rank() >= 1 && batch.dim(0) >= 1, "forward: batch size must be >= 1");
  const std::size_t n = batch.dim(0);
  const std::size_t sample = batch.size() / n;
  require(sample == Tensor::shape_product(net.input_shape()),
          "forward: batch sample size " + std::to_string(sample) +
              " does not match network input shape " +
              Tensor::shape_str(net.input_shape()));

  if (tape != nullptr) {
    tape->activations.clear();
    tape->pool_argmax.assign(net.layers().size(), {});
    tape->batch = n;
    tape->net = &net;
    tape->net_version = net.version();
  }

  Tensor cur({n, sample}, std::vector<double>(batch.data(), batch.data() + batch.size()));
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    const LayerSpec& s = net.layers()[li];
    const auto& in_shape = net.activation_shape(li);
    const auto& out_shape = net.activation_shape(li + 1);
    Tensor out(batched(n, out_shape));
    if (tape != nullptr) tape->activations.push_back(cur);
    switch (s.kind) {
      case LayerKind::FullyConnected: {
        Tensor flat({n, Tensor::shape_product(in_shape)},
                    std::vector<double>(cur.data(), cur.data() + cur.size()));
        fc_forward(s, net.params()[li], flat, out);
        break;
      }
      case LayerKind::Conv:
        conv_forward(s, net.params()[li], spatial_view(in_shape, n), cur, out_shape, out);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        std::vector<std::size_t> argmax;
        pool_forward(s, spatial_view(in_shape, n), cur, out_shape, out,
                     tape != nullptr ? &tape->pool_argmax[li] : &argmax);
        break;
      }
      case LayerKind::ReLU:
        parallel_for(cur.size(), [&](std::size_t i) { out[i] = cur[i] > 0.0 ? cur[i] : 0.0; });
        break;
    }
    cur = std::move(out);
  }
  // features are always reported flat: (batch, feature_dim)
  return Tensor({n, net.feature_dim()},
                std::vector<double>(cur.data(), cur.data() + cur.size()));
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  g.layers.reserve(net.params().size());
  for (const auto& p : net.params()) {
    LayerParams gp;
    if (!p.weight.empty()) {
      gp.weight = Tensor(p.weight.shape());
      gp.bias = Tensor(p.bias.shape());
    }
    g.layers.push_back(std::move(gp));
  }
  return g;
}

Tensor backward(const Network& net, const ForwardTape& tape, const Tensor& grad_out,
                Gradients& grads) {
  require(tape.net == &net, "backward: tape was produced by a different network");
  require(tape.net_version == net.version(),
          "backward: stale tape, network parameters changed since forward");
  require(tape.activations.size() == net.layers().size(),
          "backward: tape does not cover the layer chain");
  require(grad_out.rank() == 2 && grad_out.dim(0) == tape.batch &&
              grad_out.dim(1) == net.feature_dim(),
          "backward: grad_out shape must be (batch, feature_dim)");
  require(grads.layers.size() == net.params().size(),
          "backward: gradient buffer does not match network");

  const std::size_t n = tape.batch;
  Tensor g = grad_out;
  for (std::size_t li = net.layers().size(); li-- > 0;) {
    const LayerSpec& s = net.layers()[li];
    const auto& in_shape = net.activation_shape(li);
    const auto& out_shape = net.activation_shape(li + 1);
    const Tensor& acts = tape.activations[li];
    Tensor gin(batched(n, in_shape));
    switch (s.kind) {
      case LayerKind::FullyConnected: {
        Tensor flat({n, Tensor::shape_product(in_shape)},
                    std::vector<double>(acts.data(), acts.data() + acts.size()));
        Tensor gflat({n, Tensor::shape_product(in_shape)});
        fc_backward(s, net.params()[li], flat, g, grads.layers[li], gflat);
        gin = std::move(gflat);
        break;
      }
      case LayerKind::Conv:
        conv_backward(s, net.params()[li], spatial_view(in_shape, n), acts, out_shape,
                      g, grads.layers[li], gin);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        pool_backward(s, spatial_view(in_shape, n), out_shape, g,
                      tape.pool_argmax[li], gin);
        break;
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < g.size(); ++i) {
          gin[i] = acts[i] > 0.0 ? g[i] : 0.0;  // derivative at exactly 0 is 0
        }
        break;
    }
    g = std::move(gin);
  }
  return g;
}

}  // namespace egoeq
