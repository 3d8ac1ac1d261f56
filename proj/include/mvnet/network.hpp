#pragma once

// Network execution. A CompiledNetwork binds a NetworkSpec to its weights;
// apply_layer runs one inverted-bottleneck layer either over a whole clip
// (offline, temporal context from zero padding) or over a subclip with
// carried state (streaming, temporal context from stream buffers).

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvnet/arch.hpp"
#include "mvnet/causal.hpp"
#include "mvnet/tensor.hpp"
#include "mvnet/weights.hpp"

namespace mvnet {

struct FusedNorm {
  std::vector<float> scale;
  std::vector<float> bias;

  void apply(VideoTensor &x) const { channel_affine_inplace(x, scale, bias); }
};

struct CompiledLayer {
  LayerSpec spec;
  std::string path;
  std::size_t in_channels = 0;
  bool block_entry = false;

  WeightTensor expand;
  FusedNorm expand_norm;
  WeightTensor depthwise;
  FusedNorm depthwise_norm;
  std::optional<SqueezeExciteWeights> se;
  WeightTensor project;
  FusedNorm project_norm;
  std::optional<WeightTensor> skip;
  FusedNorm skip_norm;
  std::optional<float> rezero;

  /// Residual branch is added to the input (or the ResNet-D skip) scaled by ReZero.
  bool residual() const noexcept { return rezero.has_value(); }
};

struct CompiledNetwork {
  NetworkSpec spec;
  WeightTensor stem;
  FusedNorm stem_norm;
  std::vector<CompiledLayer> layers;
  WeightTensor head_conv;
  FusedNorm head_norm;
  std::vector<float> hidden_w, hidden_b, classifier_w, classifier_b;

  static CompiledNetwork build(const NetworkSpec &spec, const Weights &w) {
    validate(spec);
    check_weights(spec, w);
    auto norm = [&](const std::string &p) { return FusedNorm{w.get(p + ".scale").data, w.get(p + ".bias").data}; };

    CompiledNetwork net;
    net.spec = spec;
    net.stem = w.conv("stem.conv");
    net.stem_norm = norm("stem.norm");
    std::size_t cin = spec.stem.width;
    for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi)
      for (std::size_t li = 0; li < spec.blocks[bi].layers.size(); ++li) {
        const auto &ls = spec.blocks[bi].layers[li];
        CompiledLayer l;
        l.spec = ls;
        l.path = layer_path(bi, li);
        l.in_channels = cin;
        l.block_entry = li == 0;
        l.expand = w.conv(l.path + ".expand.conv");
        l.expand_norm = norm(l.path + ".expand.norm");
        l.depthwise = w.conv(l.path + ".dw.conv", ls.expand);
        l.depthwise_norm = norm(l.path + ".dw.norm");
        if (ls.se != SeMode::None)
          l.se = w.squeeze_excite(l.path + ".se");
        l.project = w.conv(l.path + ".project.conv");
        l.project_norm = norm(l.path + ".project.norm");
        if (l.block_entry) {
          l.skip = w.conv(l.path + ".skip.conv");
          l.skip_norm = norm(l.path + ".skip.norm");
        }
        if (w.contains(l.path + ".rezero"))
          l.rezero = w.scalar(l.path + ".rezero");
        net.layers.push_back(std::move(l));
        cin = ls.base;
      }
    net.head_conv = w.conv("head.conv");
    net.head_norm = norm("head.norm");
    net.hidden_w = w.get("head.hidden.w").data;
    net.hidden_b = w.get("head.hidden.b").data;
    net.classifier_w = w.get("head.classifier.w").data;
    net.classifier_b = w.get("head.classifier.b").data;
    return net;
  }
};

/// Carried temporal state of one layer during streaming.
struct LayerStream {
  std::optional<StreamBuffer> buffer;
  std::optional<CgapState> cgap;

  std::size_t bytes() const noexcept {
    return (buffer ? buffer->bytes() : 0) + (cgap ? cgap->bytes() : 0);
  }
};

namespace detail {

inline VideoTensor pointwise(const VideoTensor &x, const WeightTensor &k) {
  return conv3d(x, k, {1, 1}, PaddingSpec{});
}

} // namespace detail

/// Stem: 1 x k^2 convolution, stride 2, norm, hard swish.
inline VideoTensor apply_stem(const CompiledNetwork &net, const VideoTensor &video) {
  const auto &s = net.spec;
  if (video.channels() != s.video.channels || video.height() != s.video.size || video.width() != s.video.size)
    throw ShapeError("video " + to_string(video.dims()) + " does not match network input " +
                     std::to_string(s.video.size) + "x" + std::to_string(s.video.size) + "x" +
                     std::to_string(s.video.channels));
  const auto pad = balanced_padding(static_cast<int>(s.stem.kernel.space));
  auto x = conv3d(video, net.stem, {2, 2}, PaddingSpec{{0, 0}, pad, pad});
  net.stem_norm.apply(x);
  hard_swish_inplace(x);
  return x;
}

/// ResNet-D shortcut: 1 x 3 x 3 average pool (with the layer's stride), 1 x 1 x 1 conv, norm.
inline VideoTensor apply_skip(const CompiledLayer &layer, const VideoTensor &x) {
  const std::size_t s = layer.spec.stride;
  auto pooled = avg_pool_spatial(x, 3, {s, s}, {1, 1}, {1, 1});
  auto y = detail::pointwise(pooled, *layer.skip);
  layer.skip_norm.apply(y);
  return y;
}

/// One inverted-bottleneck layer.
///
/// With `stream == nullptr` the clip is treated as the whole video: temporal
/// context is zero padding and CGAP starts fresh. Otherwise temporal context
/// comes from `stream` and `frame_base` is the absolute index of the clip's
/// first frame.
inline VideoTensor apply_layer(const CompiledLayer &layer, const VideoTensor &x, LayerStream *stream = nullptr,
                               std::size_t frame_base = 0) {
  const auto &ls = layer.spec;
  if (x.channels() != layer.in_channels)
    throw ShapeError(layer.path + ": input has " + std::to_string(x.channels()) + " channels, expected " +
                     std::to_string(layer.in_channels));

  auto h = detail::pointwise(x, layer.expand);
  layer.expand_norm.apply(h);
  hard_swish_inplace(h);

  const auto sp = balanced_padding(static_cast<int>(ls.kernel.space));
  const Stride2 stride{ls.stride, ls.stride};
  if (stream && ls.temporal()) {
    h = buffered_causal_conv(*stream->buffer, h, layer.depthwise, stride, sp, sp);
  } else {
    const AxisPad tp = ls.causal ? causal_padding(static_cast<int>(ls.kernel.time))
                                 : balanced_padding(static_cast<int>(ls.kernel.time));
    h = conv3d(h, layer.depthwise, stride, PaddingSpec{tp, sp, sp});
  }
  layer.depthwise_norm.apply(h);
  hard_swish_inplace(h);

  if (layer.se) {
    if (ls.se == SeMode::Causal) {
      if (stream) {
        h = causal_se(h, *layer.se, *stream->cgap, frame_base, ls.pos_enc);
      } else {
        CgapState fresh;
        h = causal_se(h, *layer.se, fresh, 0, ls.pos_enc);
      }
    } else {
      h = non_causal_se(h, *layer.se);
    }
  }

  auto y = detail::pointwise(h, layer.project);
  layer.project_norm.apply(y);

  if (layer.block_entry)
    return add_scaled(apply_skip(layer, x), y, *layer.rezero);
  if (layer.residual())
    return add_scaled(x, y, *layer.rezero);
  return y;
}

/// Head convolution followed by a per-frame spatial mean: T x 1 x 1 x C.
inline VideoTensor head_features(const CompiledNetwork &net, const VideoTensor &x) {
  auto y = detail::pointwise(x, net.head_conv);
  net.head_norm.apply(y);
  hard_swish_inplace(y);
  return spatial_mean(y);
}

/// Dense hidden layer, hard swish, classifier.
inline std::vector<float> classify(const CompiledNetwork &net, std::span<const float> feature) {
  const auto &h = net.spec.head;
  auto hidden = dense(feature, net.hidden_w, h.conv_width, h.hidden_width, net.hidden_b);
  for (auto &v : hidden)
    v = hard_swish(v);
  return dense(hidden, net.classifier_w, h.hidden_width, h.classes, net.classifier_b);
}

struct ForwardResult {
  std::vector<std::vector<float>> frame_logits; // T x classes
  std::vector<float> clip_logits;
};

/// Temporal pooling of per-frame head features for the clip prediction:
/// CGAP for streamable networks, a plain mean otherwise (identical in value
/// at the end of the clip).
inline std::vector<float> pool_clip_features(const NetworkSpec &spec, const VideoTensor &features) {
  if (is_streamable(spec)) {
    CgapState cgap;
    std::vector<float> mean;
    for (std::size_t t = 0; t < features.frames(); ++t)
      mean = cgap_step(cgap, features.frame(t));
    return mean;
  }
  return global_avg_pool(features);
}

/// Full-clip inference.
inline ForwardResult forward_offline(const CompiledNetwork &net, const VideoTensor &video) {
  if (video.frames() == 0)
    throw ContractError("forward_offline needs at least one frame");
  auto x = apply_stem(net, video);
  for (const auto &layer : net.layers)
    x = apply_layer(layer, x);
  const auto features = head_features(net, x);

  ForwardResult r;
  r.frame_logits.reserve(features.frames());
  for (std::size_t t = 0; t < features.frames(); ++t)
    r.frame_logits.push_back(classify(net, features.frame(t)));
  r.clip_logits = classify(net, pool_clip_features(net.spec, features));
  return r;
}

inline ForwardResult forward_offline(const NetworkSpec &spec, const Weights &weights, const VideoTensor &video) {
  return forward_offline(CompiledNetwork::build(spec, weights), video);
}

} // namespace mvnet
