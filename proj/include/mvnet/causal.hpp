#pragma once

// Causal temporal operators: padding rules, the stream buffer, cumulative
// global average pooling (CGAP), causal squeeze-excite with a sinusoidal
// frame-index encoding, and temporal shift expressed as a one-frame buffer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvnet/error.hpp"
#include "mvnet/rounding.hpp"
#include "mvnet/tensor.hpp"

namespace mvnet {

/// SAME padding for stride 1: symmetric for odd k, the extra frame on the right for even k.
inline AxisPad balanced_padding(int k) {
  if (k < 1)
    throw ContractError("kernel extent must be >= 1, got " + std::to_string(k));
  if (k % 2 == 1)
    return {(k - 1) / 2, (k - 1) / 2};
  return {(k - 2) / 2, k / 2};
}

/// Balanced padding with everything moved before the first frame.
inline AxisPad causal_padding(int k) {
  const AxisPad p = balanced_padding(k);
  return {p.left + p.right, 0};
}

/// Last `width` frames of a layer's input, carried between subclips.
class StreamBuffer {
public:
  StreamBuffer() = default;

  /// Zero-initialised buffer of `width` frames shaped h x w x c.
  StreamBuffer(std::size_t width, std::size_t h, std::size_t w, std::size_t c) : state_(width, h, w, c) {}

  std::size_t width() const noexcept { return state_.frames(); }
  const VideoTensor &state() const noexcept { return state_; }
  std::size_t bytes() const noexcept { return state_.size() * sizeof(float); }

  void reset() { std::fill(state_.data().begin(), state_.data().end(), 0.0f); }

  /// Mutable access for fault injection in tests.
  VideoTensor &mutable_state() noexcept { return state_; }

  /// Replace the state with the last `width()` frames of `joined`.
  void advance(const VideoTensor &joined) {
    const std::size_t b = width();
    if (joined.frames() < b || !joined.same_frame_shape(state_))
      throw ShapeError("stream buffer update shape mismatch");
    if (b == 0)
      return;
    const auto fs = joined.frame_size();
    const auto src = joined.data().subspan((joined.frames() - b) * fs);
    std::copy(src.begin(), src.end(), state_.data().begin());
  }

private:
  VideoTensor state_;
};

/// Runs `op` on buffer ++ clip and rolls the buffer forward.
///
/// `op` sees `width()` frames of left context followed by the clip and must
/// return exactly clip.frames() frames.
template <typename Op>
VideoTensor stream_buffer_apply(StreamBuffer &buffer, const VideoTensor &clip, Op &&op) {
  if (clip.frames() < 1)
    throw ContractError("stream_buffer_apply needs at least one frame");
  if (!clip.same_frame_shape(buffer.state()))
    throw ShapeError("clip " + to_string(clip.dims()) + " does not match stream buffer " +
                     to_string(buffer.state().dims()));
  const VideoTensor joined = concat_time(buffer.state(), clip);
  VideoTensor features = op(joined);
  if (features.frames() != clip.frames())
    throw ShapeError("buffered op produced " + std::to_string(features.frames()) + " frames for a " +
                     std::to_string(clip.frames()) + "-frame clip");
  buffer.advance(joined);
  return features;
}

/// Causal temporal convolution whose left context comes from `buffer` (width k_t - 1).
inline VideoTensor buffered_causal_conv(StreamBuffer &buffer, const VideoTensor &clip, const WeightTensor &kernel,
                                        Stride2 stride, AxisPad pad_h, AxisPad pad_w, std::span<const float> bias = {}) {
  if (buffer.width() + 1 != kernel.kt())
    throw ShapeError("stream buffer width " + std::to_string(buffer.width()) + " does not fit temporal kernel " +
                     std::to_string(kernel.kt()));
  return stream_buffer_apply(buffer, clip, [&](const VideoTensor &joined) {
    return conv3d(joined, kernel, stride, PaddingSpec{{0, 0}, pad_h, pad_w}, bias);
  });
}

/// Cumulative sum and frame count behind CGAP.
struct CgapState {
  std::vector<float> running_sum;
  std::size_t count = 0;

  std::size_t bytes() const noexcept { return running_sum.size() * sizeof(float); }
  void reset() {
    running_sum.clear();
    count = 0;
  }
};

/// Adds one frame to the running sum and returns the mean of all frames seen.
inline std::vector<float> cgap_step(CgapState &state, std::span<const float> frame) {
  if (state.count == 0 && state.running_sum.empty())
    state.running_sum.assign(frame.size(), 0.0f);
  if (frame.size() != state.running_sum.size())
    throw ShapeError("CGAP frame size changed from " + std::to_string(state.running_sum.size()) + " to " +
                     std::to_string(frame.size()));
  ++state.count;
  const float n = static_cast<float>(state.count);
  std::vector<float> mean(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    state.running_sum[i] += frame[i];
    mean[i] = state.running_sum[i] / n;
  }
  return mean;
}

/// Current CGAP mean without adding a frame.
inline std::vector<float> cgap_mean(const CgapState &state) {
  if (state.count == 0)
    throw ContractError("CGAP mean requested before any frame");
  std::vector<float> mean(state.running_sum.size());
  const float n = static_cast<float>(state.count);
  for (std::size_t i = 0; i < mean.size(); ++i)
    mean[i] = state.running_sum[i] / n;
  return mean;
}

/// Transformer-style sinusoid of the absolute frame index over `dim` channels.
/// For odd `dim` the trailing entry is 0.
inline std::vector<float> positional_encoding(std::size_t t, std::size_t dim) {
  std::vector<float> pe(dim, 0.0f);
  const std::size_t even = dim - dim % 2;
  for (std::size_t i = 0; 2 * i < even; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(even));
    const double angle = static_cast<double>(t) / freq;
    pe[2 * i] = static_cast<float>(std::sin(angle));
    pe[2 * i + 1] = static_cast<float>(std::cos(angle));
  }
  return pe;
}

/// Bottleneck width of the squeeze-excite projection for `c` channels.
inline std::size_t se_width(std::size_t c) {
  return static_cast<std::size_t>(std::max<long long>(8, round_to_multiple(static_cast<double>(c) / 4.0, 8)));
}

struct SqueezeExciteWeights {
  std::size_t channels = 0;
  std::size_t hidden = 0;
  std::vector<float> reduce;      // channels x hidden
  std::vector<float> reduce_bias; // hidden
  std::vector<float> expand;      // hidden x channels
  std::vector<float> expand_bias; // channels

  static SqueezeExciteWeights zeros(std::size_t c, std::size_t hidden) {
    return {c, hidden, std::vector<float>(c * hidden), std::vector<float>(hidden), std::vector<float>(hidden * c),
            std::vector<float>(c)};
  }

  void validate() const {
    if (reduce.size() != channels * hidden || reduce_bias.size() != hidden || expand.size() != hidden * channels ||
        expand_bias.size() != channels)
      throw ShapeError("squeeze-excite weights inconsistent with " + std::to_string(channels) + " -> " +
                       std::to_string(hidden));
  }
};

/// hard_sigmoid(expand(relu(reduce(squeeze)))).
inline std::vector<float> se_gate(const SqueezeExciteWeights &w, std::span<const float> squeeze) {
  auto hidden = dense(squeeze, w.reduce, w.channels, w.hidden, w.reduce_bias);
  for (auto &h : hidden)
    h = relu(h);
  auto gate = dense(hidden, w.expand, w.hidden, w.channels, w.expand_bias);
  for (auto &g : gate)
    g = hard_sigmoid(g);
  return gate;
}

inline void scale_frame(std::span<float> frame, std::span<const float> gate) {
  const std::size_t c = gate.size();
  for (std::size_t i = 0; i < frame.size(); i += c)
    for (std::size_t k = 0; k < c; ++k)
      frame[i + k] *= gate[k];
}

/// Squeeze-excite gated per frame by the cumulative mean up to that frame.
///
/// `cgap` carries the running sum across calls; `base_frame_index` is the
/// absolute index of the clip's first frame (used by the positional encoding).
inline VideoTensor causal_se(const VideoTensor &clip, const SqueezeExciteWeights &weights, CgapState &cgap,
                             std::size_t base_frame_index, bool pos_enc = true) {
  weights.validate();
  if (clip.channels() != weights.channels)
    throw ShapeError("causal_se: clip has " + std::to_string(clip.channels()) + " channels, weights expect " +
                     std::to_string(weights.channels));
  VideoTensor out = clip;
  const VideoTensor pooled = spatial_mean(clip);
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    auto squeeze = cgap_step(cgap, pooled.frame(t));
    if (pos_enc) {
      const auto pe = positional_encoding(base_frame_index + t, weights.channels);
      for (std::size_t k = 0; k < squeeze.size(); ++k)
        squeeze[k] += pe[k];
    }
    scale_frame(out.frame(t), se_gate(weights, squeeze));
  }
  return out;
}

/// Squeeze-excite with one spatiotemporal average over the whole clip.
inline VideoTensor non_causal_se(const VideoTensor &clip, const SqueezeExciteWeights &weights) {
  weights.validate();
  if (clip.channels() != weights.channels)
    throw ShapeError("non_causal_se: clip has " + std::to_string(clip.channels()) + " channels, weights expect " +
                     std::to_string(weights.channels));
  VideoTensor out = clip;
  const auto gate = se_gate(weights, global_avg_pool(clip));
  for (std::size_t t = 0; t < out.frames(); ++t)
    scale_frame(out.frame(t), gate);
  return out;
}

/// Number of channels moved by a temporal shift of `fraction`.
inline std::size_t shifted_channels(double fraction, std::size_t channels) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ContractError("shift fraction must lie in [0, 1]");
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(channels)));
}

/// Temporal shift as a one-frame stream buffer: the first floor(fraction * C)
/// channels of frame t come from frame t - 1.
inline VideoTensor temporal_shift(const VideoTensor &clip, StreamBuffer &buffer, double fraction) {
  if (buffer.width() != 1)
    throw ContractError("temporal shift needs a one-frame buffer, got width " + std::to_string(buffer.width()));
  const std::size_t moved = shifted_channels(fraction, clip.channels());
  return stream_buffer_apply(buffer, clip, [&](const VideoTensor &joined) {
    VideoTensor out = slice_frames(joined, 1, joined.frames() - 1);
    const std::size_t c = joined.channels();
    for (std::size_t t = 0; t < out.frames(); ++t) {
      const auto prev = joined.frame(t);
      auto cur = out.frame(t);
      for (std::size_t i = 0; i < cur.size(); i += c)
        std::copy_n(prev.begin() + static_cast<std::ptrdiff_t>(i), moved, cur.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return out;
  });
}

} // namespace mvnet
