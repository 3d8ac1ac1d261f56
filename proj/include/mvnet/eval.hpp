#pragma once

// Evaluation modes over a whole video: single clip, multi-clip logit
// averaging, and the two-network temporal ensemble.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mvnet/arch.hpp"
#include "mvnet/cost.hpp"
#include "mvnet/network.hpp"
#include "mvnet/tensor.hpp"
#include "mvnet/weights.hpp"

namespace mvnet {

inline std::vector<float> softmax(std::span<const float> logits) {
  std::vector<float> p(logits.size());
  if (logits.empty())
    return p;
  const float m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - m);
    p[i] = static_cast<float>(e);
    z += e;
  }
  for (auto &v : p)
    v = static_cast<float>(v / z);
  return p;
}

/// Indices of the k largest probabilities, descending (ties by lower index).
inline std::vector<std::pair<std::size_t, float>> top_k(std::span<const float> probs, std::size_t k) {
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); });
  std::vector<std::pair<std::size_t, float>> out;
  for (std::size_t i = 0; i < k; ++i)
    out.emplace_back(idx[i], probs[idx[i]]);
  return out;
}

struct EvalResult {
  std::vector<float> logits;
  std::vector<float> probabilities;
  std::vector<std::pair<std::size_t, float>> top;
  std::string mode;
  std::size_t clips = 1;
  std::size_t frames_per_clip = 0;
  double fps = 0.0;
};

inline EvalResult make_result(std::vector<float> logits, std::string mode, std::size_t clips, std::size_t frames,
                              double fps, std::size_t k = 5) {
  EvalResult r;
  r.probabilities = softmax(logits);
  r.top = top_k(r.probabilities, k);
  r.logits = std::move(logits);
  r.mode = std::move(mode);
  r.clips = clips;
  r.frames_per_clip = frames;
  r.fps = fps;
  return r;
}

/// Every `stride`-th frame, one offline pass.
inline EvalResult eval_single_clip(const CompiledNetwork &net, const VideoTensor &video, std::size_t stride = 1) {
  if (stride < 1)
    throw ContractError("frame stride must be >= 1");
  const auto clip = stride_frames(video, stride);
  if (clip.frames() == 0)
    throw ContractError("no frames left after striding");
  auto r = forward_offline(net, clip);
  return make_result(std::move(r.clip_logits), "single_clip", 1, clip.frames(),
                     static_cast<double>(net.spec.video.tau) / static_cast<double>(stride));
}

/// Mean logits of `n` windows of `t_clip` frames starting every `clip_stride` frames.
inline EvalResult eval_multi_clip(const CompiledNetwork &net, const VideoTensor &video, std::size_t n,
                                  std::size_t t_clip, std::size_t clip_stride) {
  if (n < 1 || t_clip < 1)
    throw ContractError("multi-clip needs n >= 1 and T_clip >= 1");
  const std::size_t last_start = (n - 1) * clip_stride;
  if (last_start + t_clip > video.frames())
    throw ContractError("clip window [" + std::to_string(last_start) + ", " + std::to_string(last_start + t_clip) +
                        ") exceeds the " + std::to_string(video.frames()) + "-frame video");
  std::vector<float> sum;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = forward_offline(net, slice_frames(video, i * clip_stride, t_clip));
    if (sum.empty())
      sum.assign(r.clip_logits.size(), 0.0f);
    for (std::size_t k = 0; k < sum.size(); ++k)
      sum[k] += r.clip_logits[k];
  }
  for (auto &v : sum)
    v /= static_cast<float>(n);
  return make_result(std::move(sum), "multi_clip", n, t_clip, static_cast<double>(net.spec.video.tau));
}

/// Two networks at half the frame rate: `a` sees frames 0, 2, 4, ... and `b`
/// sees frames offset, offset + 2, ...; their logits are averaged.
inline EvalResult eval_temporal_ensemble(const CompiledNetwork &a, const CompiledNetwork &b, const VideoTensor &video,
                                         std::size_t frame_offset = 1) {
  if (video.frames() <= frame_offset)
    throw ContractError("video too short for a frame offset of " + std::to_string(frame_offset));
  const auto ra = forward_offline(a, stride_frames(video, 2, 0));
  const auto rb = forward_offline(b, stride_frames(video, 2, frame_offset));
  if (ra.clip_logits.size() != rb.clip_logits.size())
    throw ShapeError("ensemble members disagree on the number of classes");
  std::vector<float> mean(ra.clip_logits.size());
  for (std::size_t k = 0; k < mean.size(); ++k)
    mean[k] = (ra.clip_logits[k] + rb.clip_logits[k]) / 2.0f;
  return make_result(std::move(mean), "ensemble", 2, (video.frames() + 1) / 2,
                     static_cast<double>(a.spec.video.tau) / 2.0);
}

/// GFLOPs of the ensemble on a `video.frames`-frame input (each member sees half).
inline double ensemble_flops(const NetworkSpec &a, const NetworkSpec &b, const VideoSpec &video) {
  VideoSpec va = video, vb = video;
  va.frames = (video.frames + 1) / 2;
  vb.frames = video.frames / 2;
  return network_flops(a, va) + network_flops(b, vb);
}

} // namespace mvnet
