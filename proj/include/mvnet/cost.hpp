#pragma once

// Analytical cost accounting. One multiply-accumulate counts as one FLOP.
//
// Every row is a single primitive (a convolution, a norm, a pooling, a dense
// layer). Activation bytes are the row's input plus output at the frame count
// of the evaluation mode; persistent stream state is accounted separately.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "mvnet/arch.hpp"
#include "mvnet/causal.hpp"
#include "mvnet/error.hpp"
#include "mvnet/tensor.hpp"

namespace mvnet {

struct CostRow {
  std::string name;
  Dims4 output;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  std::uint64_t activation_bytes = 0;

  bool operator==(const CostRow &) const = default;
};

inline std::uint64_t elems(const Dims4 &d) { return static_cast<std::uint64_t>(d.size()); }

/// Convolution: out_voxels * k_t * k_h * k_w * C_in_per_group MACs.
inline CostRow conv_cost(std::string name, const Dims4 &in, std::size_t kt, std::size_t ks, std::size_t c_out,
                         std::size_t groups, std::size_t stride) {
  const std::size_t cin_g = in.c / groups;
  const auto sp = balanced_padding(static_cast<int>(ks));
  Dims4 out{in.t, detail::conv_out_extent(in.h, sp, ks, stride),
            detail::conv_out_extent(in.w, sp, ks, stride), c_out};
  const std::uint64_t per_out = static_cast<std::uint64_t>(kt) * ks * ks * cin_g;
  return {std::move(name), out, elems(out) * per_out, per_out * c_out,
          (elems(in) + elems(out)) * sizeof(float)};
}

/// Fused per-channel affine: one MAC per output element.
inline CostRow norm_cost(std::string name, const Dims4 &d) {
  return {std::move(name), d, elems(d), 2 * d.c, 2 * elems(d) * sizeof(float)};
}

inline CostRow dense_cost(std::string name, std::size_t in, std::size_t out, std::uint64_t applications = 1) {
  return {std::move(name),
          Dims4{applications, 1, 1, out},
          static_cast<std::uint64_t>(in) * out * applications,
          static_cast<std::uint64_t>(in) * out + out,
          (static_cast<std::uint64_t>(in) + out) * applications * sizeof(float)};
}

/// Elementwise or reduction work with no parameters.
inline CostRow simple_cost(std::string name, const Dims4 &in, const Dims4 &out, std::uint64_t macs) {
  return {std::move(name), out, macs, 0, (elems(in) + elems(out)) * sizeof(float)};
}

/// Rows for one inverted-bottleneck layer over an input of `in` (T frames).
inline std::vector<CostRow> layer_rows(const std::string &path, const LayerSpec &l, const Dims4 &in, bool block_entry) {
  std::vector<CostRow> rows;
  rows.push_back(conv_cost(path + ".expand", in, 1, 1, l.expand, 1, 1));
  const Dims4 e = rows.back().output;
  rows.push_back(norm_cost(path + ".expand.norm", e));
  rows.push_back(conv_cost(path + ".dw", e, l.kernel.time, l.kernel.space, l.expand, l.expand, l.stride));
  const Dims4 d = rows.back().output;
  rows.push_back(norm_cost(path + ".dw.norm", d));
  if (l.se != SeMode::None) {
    const auto hidden = se_width(l.expand);
    const Dims4 squeezed{d.t, 1, 1, d.c};
    if (l.se == SeMode::Causal) {
      // Spatial mean per frame, then a running sum per frame; gate per frame.
      rows.push_back(simple_cost(path + ".se.squeeze", d, squeezed, elems(d) + elems(squeezed)));
      if (l.pos_enc)
        rows.push_back(simple_cost(path + ".se.posenc", squeezed, squeezed, elems(squeezed)));
      rows.push_back(dense_cost(path + ".se.reduce", l.expand, hidden, d.t));
      rows.push_back(dense_cost(path + ".se.expand", hidden, l.expand, d.t));
    } else {
      rows.push_back(simple_cost(path + ".se.squeeze", d, Dims4{1, 1, 1, d.c}, elems(d)));
      rows.push_back(dense_cost(path + ".se.reduce", l.expand, hidden));
      rows.push_back(dense_cost(path + ".se.expand", hidden, l.expand));
    }
    rows.push_back(simple_cost(path + ".se.gate", d, d, elems(d)));
  }
  rows.push_back(conv_cost(path + ".project", d, 1, 1, l.base, 1, 1));
  const Dims4 p = rows.back().output;
  rows.push_back(norm_cost(path + ".project.norm", p));
  if (block_entry) {
    const Dims4 pooled{in.t, p.h, p.w, in.c};
    rows.push_back(simple_cost(path + ".skip.pool", in, pooled, elems(pooled) * 9));
    rows.push_back(conv_cost(path + ".skip", pooled, 1, 1, l.base, 1, 1));
    rows.push_back(norm_cost(path + ".skip.norm", p));
  }
  if (block_entry || (in.c == l.base && l.stride == 1))
    rows.push_back(simple_cost(path + ".residual", p, p, elems(p)));
  return rows;
}

/// All rows for `spec` evaluated on `frames` frames at `size` x `size`.
/// The dense head runs once on the temporally pooled feature.
inline std::vector<CostRow> network_rows(const NetworkSpec &spec, std::size_t frames, std::size_t size) {
  std::vector<CostRow> rows;
  Dims4 x{frames, size, size, spec.video.channels};
  rows.push_back(conv_cost("stem", x, 1, spec.stem.kernel.space, spec.stem.width, 1, 2));
  x = rows.back().output;
  rows.push_back(norm_cost("stem.norm", x));
  for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi)
    for (std::size_t li = 0; li < spec.blocks[bi].layers.size(); ++li) {
      auto lr = layer_rows(layer_path(bi, li), spec.blocks[bi].layers[li], x, li == 0);
      x = lr.back().output;
      rows.insert(rows.end(), lr.begin(), lr.end());
    }
  const auto &h = spec.head;
  rows.push_back(conv_cost("head.conv", x, 1, 1, h.conv_width, 1, 1));
  const Dims4 hc = rows.back().output;
  rows.push_back(norm_cost("head.norm", hc));
  const Dims4 pooled{hc.t, 1, 1, hc.c};
  rows.push_back(simple_cost("head.spatial_pool", hc, pooled, elems(hc)));
  rows.push_back(simple_cost("head.temporal_pool", pooled, Dims4{1, 1, 1, hc.c}, elems(pooled)));
  rows.push_back(dense_cost("head.hidden", h.conv_width, h.hidden_width));
  rows.push_back(dense_cost("head.classifier", h.hidden_width, h.classes));
  return rows;
}

inline std::uint64_t total_macs(const std::vector<CostRow> &rows) {
  std::uint64_t n = 0;
  for (const auto &r : rows)
    n += r.macs;
  return n;
}

inline std::uint64_t network_macs(const NetworkSpec &spec, const VideoSpec &video) {
  return total_macs(network_rows(spec, video.frames, video.size));
}

/// GFLOPs for one video across all frames.
inline double network_flops(const NetworkSpec &spec, const VideoSpec &video) {
  return static_cast<double>(network_macs(spec, video)) / 1e9;
}

inline double network_flops(const NetworkSpec &spec) { return network_flops(spec, spec.video); }

/// Bytes carried between pushes by a streaming session: stream buffers
/// (k_time - 1 frames at each temporal layer) and CGAP running sums.
inline std::uint64_t stream_state_bytes(const NetworkSpec &spec, std::size_t size) {
  std::uint64_t bytes = spec.head.conv_width * sizeof(float);
  std::size_t r = strided_extent(size, 2);
  for (const auto &b : spec.blocks)
    for (const auto &l : b.layers) {
      if (l.temporal())
        bytes += static_cast<std::uint64_t>(l.kernel.time - 1) * r * r * l.expand * sizeof(float);
      if (l.se == SeMode::Causal)
        bytes += l.expand * sizeof(float);
      r = strided_extent(r, l.stride);
    }
  return bytes;
}

struct EvalMode {
  enum class Kind { SingleClip, MultiClip, Streaming };
  Kind kind = Kind::SingleClip;
  std::size_t t_clip = 0;  // multi-clip and streaming
  std::size_t clips = 0;   // multi-clip; 0 derives the count from the coverage
  std::size_t overlap = 0; // multi-clip

  static EvalMode single() { return {}; }
  static EvalMode multi(std::size_t t_clip, std::size_t clips = 0, std::size_t overlap = 0) {
    return {Kind::MultiClip, t_clip, clips, overlap};
  }
  static EvalMode streaming(std::size_t t_clip) { return {Kind::Streaming, t_clip, 0, 0}; }

  std::string label() const {
    switch (kind) {
    case Kind::SingleClip:
      return "single_clip";
    case Kind::MultiClip:
      return "multi_clip(n=" + std::to_string(clips) + ",T_clip=" + std::to_string(t_clip) +
             ",overlap=" + std::to_string(overlap) + ")";
    case Kind::Streaming:
      return "streaming(T_clip=" + std::to_string(t_clip) + ")";
    }
    return "?";
  }
};

namespace detail {

inline EvalMode resolve(EvalMode m, std::size_t total_frames) {
  if (m.kind == EvalMode::Kind::SingleClip)
    return m;
  if (m.t_clip == 0)
    throw ContractError("T_clip must be >= 1");
  if (m.kind == EvalMode::Kind::MultiClip) {
    if (m.overlap >= m.t_clip)
      throw ContractError("multi-clip overlap must be smaller than T_clip");
    if (m.clips == 0) {
      const std::size_t step = m.t_clip - m.overlap;
      m.clips = total_frames <= m.t_clip ? 1 : 1 + (total_frames - m.t_clip + step - 1) / step;
    }
  }
  return m;
}

} // namespace detail

/// Total GFLOPs of evaluating `video` under `mode`.
inline double mode_flops(const NetworkSpec &spec, const VideoSpec &video, EvalMode mode) {
  mode = detail::resolve(mode, video.frames);
  if (mode.kind == EvalMode::Kind::MultiClip) {
    VideoSpec clip = video;
    clip.frames = mode.t_clip;
    return static_cast<double>(mode.clips) * network_flops(spec, clip);
  }
  return network_flops(spec, video);
}

/// Peak working-set bytes: the largest row's input plus output at the mode's
/// frame count, plus persistent stream state in streaming mode.
inline std::uint64_t peak_memory(const NetworkSpec &spec, const VideoSpec &video, EvalMode mode) {
  mode = detail::resolve(mode, video.frames);
  if (mode.kind == EvalMode::Kind::Streaming)
    if (auto blocker = streaming_blocker(spec))
      throw StreamingUnsupported(blocker->first, blocker->second);
  const std::size_t frames = mode.kind == EvalMode::Kind::SingleClip ? video.frames : mode.t_clip;
  std::uint64_t peak = 0;
  for (const auto &r : network_rows(spec, frames, video.size))
    peak = std::max(peak, r.activation_bytes);
  if (mode.kind == EvalMode::Kind::Streaming)
    peak += stream_state_bytes(spec, video.size);
  return peak;
}

struct ModeCost {
  std::string mode;
  double gflops = 0.0;
  std::uint64_t peak_memory_bytes = 0;
  bool operator==(const ModeCost &) const = default;
};

struct CostReport {
  std::string network;
  VideoSpec video;
  std::vector<CostRow> rows; // single full clip
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;
  double gflops_per_video = 0.0;
  std::vector<ModeCost> modes;

  bool operator==(const CostReport &) const = default;
};

inline CostReport cost_report(const NetworkSpec &spec, const VideoSpec &video, const std::vector<EvalMode> &modes) {
  CostReport r;
  r.network = spec.name;
  r.video = video;
  r.rows = network_rows(spec, video.frames, video.size);
  for (const auto &row : r.rows) {
    r.total_macs += row.macs;
    r.total_params += row.params;
  }
  r.gflops_per_video = static_cast<double>(r.total_macs) / 1e9;
  for (const auto &m : modes) {
    const auto resolved = detail::resolve(m, video.frames);
    r.modes.push_back({resolved.label(), mode_flops(spec, video, m), peak_memory(spec, video, m)});
  }
  return r;
}

} // namespace mvnet
