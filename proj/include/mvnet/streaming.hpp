#pragma once

// Online inference: a session pushes non-overlapping subclips through a
// causal network, carrying stream buffers and CGAP sums between pushes, and
// returns logits for exactly the frames pushed.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mvnet/arch.hpp"
#include "mvnet/causal.hpp"
#include "mvnet/network.hpp"
#include "mvnet/tensor.hpp"
#include "mvnet/weights.hpp"

namespace mvnet {

/// Sizes of consecutive subclips pushed into a session.
struct ClipPlan {
  std::vector<std::size_t> chunks;

  /// ceil(total / t_clip) pushes of t_clip frames; the last may be shorter.
  static ClipPlan fixed(std::size_t t_clip, std::size_t total) {
    if (t_clip == 0)
      throw ContractError("T_clip must be >= 1");
    ClipPlan p;
    for (std::size_t done = 0; done < total; done += t_clip)
      p.chunks.push_back(std::min(t_clip, total - done));
    return p;
  }

  std::size_t total() const { return std::accumulate(chunks.begin(), chunks.end(), std::size_t{0}); }

  std::string label() const {
    std::string s = "(";
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (i == 8 && chunks.size() > 10) {
        s += ",... x" + std::to_string(chunks.size());
        break;
      }
      s += (i ? "," : "") + std::to_string(chunks[i]);
    }
    return s + ")";
  }
};

class StreamingSession {
public:
  StreamingSession(const NetworkSpec &spec, const Weights &weights)
      : StreamingSession(std::make_shared<const CompiledNetwork>(CompiledNetwork::build(spec, weights))) {}

  explicit StreamingSession(std::shared_ptr<const CompiledNetwork> net) : net_(std::move(net)) {
    if (auto blocker = streaming_blocker(net_->spec))
      throw StreamingUnsupported(blocker->first, blocker->second);
    std::size_t res = strided_extent(net_->spec.video.size, 2);
    for (const auto &layer : net_->layers) {
      LayerStream s;
      if (layer.spec.temporal())
        s.buffer.emplace(layer.spec.kernel.time - 1, res, res, layer.spec.expand);
      if (layer.spec.se == SeMode::Causal)
        s.cgap = sized_cgap(layer.spec.expand);
      streams_.push_back(std::move(s));
      res = strided_extent(res, layer.spec.stride);
    }
    head_cgap_ = sized_cgap(net_->spec.head.conv_width);
  }

  const NetworkSpec &spec() const noexcept { return net_->spec; }
  std::size_t frames_seen() const noexcept { return frames_seen_; }

  /// Per-layer carried state, indexed like CompiledNetwork::layers.
  const std::vector<LayerStream> &layer_streams() const noexcept { return streams_; }
  std::vector<LayerStream> &layer_streams() noexcept { return streams_; }
  const CgapState &head_cgap() const noexcept { return head_cgap_; }

  std::size_t buffer_count() const {
    return static_cast<std::size_t>(
        std::count_if(streams_.begin(), streams_.end(), [](const LayerStream &s) { return s.buffer.has_value(); }));
  }

  /// Bytes of state carried between pushes (buffers and CGAP sums).
  std::size_t state_bytes() const {
    std::size_t n = head_cgap_.bytes();
    for (const auto &s : streams_)
      n += s.bytes();
    return n;
  }

  /// Logits for each pushed frame, in order.
  std::vector<std::vector<float>> push(const VideoTensor &clip) {
    if (clip.frames() == 0)
      throw ContractError("push needs at least one frame");
    auto x = apply_stem(*net_, clip);
    for (std::size_t i = 0; i < net_->layers.size(); ++i)
      x = apply_layer(net_->layers[i], x, &streams_[i], frames_seen_);
    const auto features = head_features(*net_, x);

    std::vector<std::vector<float>> logits;
    logits.reserve(features.frames());
    for (std::size_t t = 0; t < features.frames(); ++t) {
      cgap_step(head_cgap_, features.frame(t));
      logits.push_back(classify(*net_, features.frame(t)));
    }
    frames_seen_ += clip.frames();
    return logits;
  }

  /// Clip prediction from every frame seen so far.
  std::vector<float> predict() const {
    if (frames_seen_ == 0)
      throw ContractError("no frames pushed yet");
    return classify(*net_, cgap_mean(head_cgap_));
  }

  void reset() {
    for (auto &s : streams_) {
      if (s.buffer)
        s.buffer->reset();
      if (s.cgap)
        clear(*s.cgap);
    }
    clear(head_cgap_);
    frames_seen_ = 0;
  }

private:
  static CgapState sized_cgap(std::size_t c) { return CgapState{std::vector<float>(c, 0.0f), 0}; }

  static void clear(CgapState &s) {
    std::fill(s.running_sum.begin(), s.running_sum.end(), 0.0f);
    s.count = 0;
  }

  std::shared_ptr<const CompiledNetwork> net_;
  std::vector<LayerStream> streams_;
  CgapState head_cgap_;
  std::size_t frames_seen_ = 0;
};

struct PlanCheck {
  std::string label;
  float max_frame_delta = 0.0f;
  float clip_delta = 0.0f;
  bool pass = false;
};

struct EquivalenceReport {
  float tolerance = 0.0f;
  std::vector<PlanCheck> plans;

  bool pass() const {
    return std::all_of(plans.begin(), plans.end(), [](const PlanCheck &p) { return p.pass; });
  }
};

/// Called after each push; lets tests tamper with session state.
using PushHook = std::function<void(StreamingSession &, std::size_t push_index)>;

/// Streams `video` under every plan and compares against the offline forward pass.
inline EquivalenceReport verify_equivalence(const NetworkSpec &spec, const Weights &weights, const VideoTensor &video,
                                            const std::vector<ClipPlan> &plans, float tolerance,
                                            const PushHook &hook = {}) {
  auto net = std::make_shared<const CompiledNetwork>(CompiledNetwork::build(spec, weights));
  const auto offline = forward_offline(*net, video);

  EquivalenceReport report;
  report.tolerance = tolerance;
  for (const auto &plan : plans) {
    if (plan.total() != video.frames())
      throw ContractError("plan " + plan.label() + " covers " + std::to_string(plan.total()) + " frames, video has " +
                          std::to_string(video.frames()));
    StreamingSession session(net);
    PlanCheck check{plan.label()};
    std::size_t start = 0;
    for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
      const auto logits = session.push(slice_frames(video, start, plan.chunks[i]));
      for (std::size_t t = 0; t < logits.size(); ++t)
        check.max_frame_delta =
            std::max(check.max_frame_delta, max_abs_diff(logits[t], offline.frame_logits[start + t]));
      start += plan.chunks[i];
      if (hook)
        hook(session, i);
    }
    check.clip_delta = max_abs_diff(session.predict(), offline.clip_logits);
    check.pass = check.max_frame_delta <= tolerance && check.clip_delta <= tolerance;
    report.plans.push_back(check);
  }
  return report;
}

} // namespace mvnet
