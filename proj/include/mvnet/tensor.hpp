#pragma once

// Dense video tensors and the numeric primitives the engine is built from.
//
// Layout is T-major THWC: one frame is a contiguous H*W*C slab, so the time
// axis can be appended to or sliced without touching the other axes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvnet/error.hpp"

namespace mvnet {

struct Dims4 {
  std::size_t t = 0;
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t c = 1;

  std::size_t frame_size() const noexcept { return h * w * c; }
  std::size_t size() const noexcept { return t * frame_size(); }
  bool operator==(const Dims4 &) const = default;
};

inline std::string to_string(const Dims4 &d) {
  return std::to_string(d.t) + "x" + std::to_string(d.h) + "x" + std::to_string(d.w) + "x" +
         std::to_string(d.c);
}

/// A single video's activations. T may be zero (an empty clip); H, W, C are at least 1.
class VideoTensor {
public:
  VideoTensor() = default;

  explicit VideoTensor(Dims4 dims, float fill = 0.0f) : dims_(dims) {
    check_dims(dims_);
    data_.assign(dims_.size(), fill);
  }

  VideoTensor(std::size_t t, std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : VideoTensor(Dims4{t, h, w, c}, fill) {}

  VideoTensor(Dims4 dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != dims_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                       to_string(dims_));
  }

  const Dims4 &dims() const noexcept { return dims_; }
  std::size_t frames() const noexcept { return dims_.t; }
  std::size_t height() const noexcept { return dims_.h; }
  std::size_t width() const noexcept { return dims_.w; }
  std::size_t channels() const noexcept { return dims_.c; }
  std::size_t frame_size() const noexcept { return dims_.frame_size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float> &storage() const noexcept { return data_; }

  std::span<float> frame(std::size_t t) noexcept { return {data_.data() + t * frame_size(), frame_size()}; }
  std::span<const float> frame(std::size_t t) const noexcept {
    return {data_.data() + t * frame_size(), frame_size()};
  }

  std::size_t index(std::size_t t, std::size_t h, std::size_t w, std::size_t c) const noexcept {
    return ((t * dims_.h + h) * dims_.w + w) * dims_.c + c;
  }
  float &at(std::size_t t, std::size_t h, std::size_t w, std::size_t c) noexcept { return data_[index(t, h, w, c)]; }
  float at(std::size_t t, std::size_t h, std::size_t w, std::size_t c) const noexcept {
    return data_[index(t, h, w, c)];
  }

  /// Same H, W, C (the time axis may differ).
  bool same_frame_shape(const VideoTensor &o) const noexcept {
    return dims_.h == o.dims_.h && dims_.w == o.dims_.w && dims_.c == o.dims_.c;
  }

  bool operator==(const VideoTensor &) const = default;

private:
  static void check_dims(const Dims4 &d) {
    if (d.h == 0 || d.w == 0 || d.c == 0)
      throw ShapeError("tensor dims must be positive in H, W, C, got " + to_string(d));
  }

  Dims4 dims_{};
  std::vector<float> data_;
};

/// Convolution kernel, laid out (k_t, k_h, k_w, C_in/groups, C_out).
class WeightTensor {
public:
  WeightTensor() = default;

  WeightTensor(std::array<std::size_t, 5> dims, std::size_t groups = 1, float fill = 0.0f)
      : dims_(dims), groups_(groups) {
    validate();
    data_.assign(count(dims_), fill);
  }

  WeightTensor(std::array<std::size_t, 5> dims, std::size_t groups, std::vector<float> data)
      : dims_(dims), groups_(groups), data_(std::move(data)) {
    validate();
    if (data_.size() != count(dims_))
      throw ShapeError("kernel data length does not match dims");
  }

  std::size_t kt() const noexcept { return dims_[0]; }
  std::size_t kh() const noexcept { return dims_[1]; }
  std::size_t kw() const noexcept { return dims_[2]; }
  std::size_t in_per_group() const noexcept { return dims_[3]; }
  std::size_t out_channels() const noexcept { return dims_[4]; }
  std::size_t groups() const noexcept { return groups_; }
  std::size_t in_channels() const noexcept { return dims_[3] * groups_; }
  const std::array<std::size_t, 5> &dims() const noexcept { return dims_; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  std::size_t index(std::size_t t, std::size_t h, std::size_t w, std::size_t ci, std::size_t co) const noexcept {
    return (((t * dims_[1] + h) * dims_[2] + w) * dims_[3] + ci) * dims_[4] + co;
  }
  float &at(std::size_t t, std::size_t h, std::size_t w, std::size_t ci, std::size_t co) noexcept {
    return data_[index(t, h, w, ci, co)];
  }
  float at(std::size_t t, std::size_t h, std::size_t w, std::size_t ci, std::size_t co) const noexcept {
    return data_[index(t, h, w, ci, co)];
  }

private:
  static std::size_t count(const std::array<std::size_t, 5> &d) { return d[0] * d[1] * d[2] * d[3] * d[4]; }

  void validate() const {
    for (auto d : dims_)
      if (d == 0)
        throw ShapeError("kernel dims must be positive");
    if (groups_ == 0 || dims_[4] % groups_ != 0)
      throw ShapeError("kernel C_out " + std::to_string(dims_[4]) + " not divisible by groups " +
                       std::to_string(groups_));
  }

  std::array<std::size_t, 5> dims_{1, 1, 1, 1, 1};
  std::size_t groups_ = 1;
  std::vector<float> data_;
};

struct AxisPad {
  int left = 0;
  int right = 0;
  bool operator==(const AxisPad &) const = default;
};

struct PaddingSpec {
  AxisPad t;
  AxisPad h;
  AxisPad w;
  bool operator==(const PaddingSpec &) const = default;
};

struct Stride2 {
  std::size_t h = 1;
  std::size_t w = 1;
};

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, AxisPad pad, std::size_t k, std::size_t stride) {
  const auto padded = static_cast<long long>(in) + pad.left + pad.right;
  if (padded < static_cast<long long>(k))
    throw ShapeError("padded extent " + std::to_string(padded) + " smaller than kernel " + std::to_string(k));
  return static_cast<std::size_t>((padded - static_cast<long long>(k)) / static_cast<long long>(stride)) + 1;
}

inline void check_padding(const PaddingSpec &p) {
  for (auto a : {p.t, p.h, p.w})
    if (a.left < 0 || a.right < 0)
      throw ContractError("negative padding");
}

} // namespace detail

inline Dims4 conv3d_output_dims(const Dims4 &in, const WeightTensor &k, Stride2 stride, const PaddingSpec &pad) {
  return {detail::conv_out_extent(in.t, pad.t, k.kt(), 1), detail::conv_out_extent(in.h, pad.h, k.kh(), stride.h),
          detail::conv_out_extent(in.w, pad.w, k.kw(), stride.w), k.out_channels()};
}

/// Grouped 3D convolution with zero padding and temporal stride 1.
///
/// Each output element is accumulated in a fixed order (taps t, h, w, then
/// input channel) starting from its bias, so results are reproducible and
/// independent of how the time axis was split across calls.
inline VideoTensor conv3d(const VideoTensor &input, const WeightTensor &kernel, Stride2 stride,
                          const PaddingSpec &padding, std::span<const float> bias = {}) {
  detail::check_padding(padding);
  if (stride.h < 1 || stride.h > 2 || stride.w < 1 || stride.w > 2)
    throw ContractError("spatial stride must be 1 or 2");
  if (input.channels() != kernel.in_channels())
    throw ShapeError("conv3d input has " + std::to_string(input.channels()) + " channels, kernel expects " +
                     std::to_string(kernel.in_channels()));
  const std::size_t c_out = kernel.out_channels();
  if (!bias.empty() && bias.size() != c_out)
    throw ShapeError("conv3d bias length mismatch");

  const Dims4 in = input.dims();
  const Dims4 od = conv3d_output_dims(in, kernel, stride, padding);
  VideoTensor out(od);
  if (od.t == 0)
    return out;

  const std::size_t groups = kernel.groups();
  const std::size_t cin_g = kernel.in_per_group();
  const std::size_t cout_g = c_out / groups;
  const bool depthwise = cin_g == 1 && cout_g == 1;
  const float *src = input.data().data();
  const float *wts = kernel.data().data();

  for (std::size_t ot = 0; ot < od.t; ++ot) {
    for (std::size_t oh = 0; oh < od.h; ++oh) {
      for (std::size_t ow = 0; ow < od.w; ++ow) {
        float *acc = &out.at(ot, oh, ow, 0);
        if (bias.empty())
          std::fill(acc, acc + c_out, 0.0f);
        else
          std::copy(bias.begin(), bias.end(), acc);

        for (std::size_t kt = 0; kt < kernel.kt(); ++kt) {
          const long long it = static_cast<long long>(ot + kt) - padding.t.left;
          if (it < 0 || it >= static_cast<long long>(in.t))
            continue;
          for (std::size_t kh = 0; kh < kernel.kh(); ++kh) {
            const long long ih = static_cast<long long>(oh * stride.h + kh) - padding.h.left;
            if (ih < 0 || ih >= static_cast<long long>(in.h))
              continue;
            for (std::size_t kw = 0; kw < kernel.kw(); ++kw) {
              const long long iw = static_cast<long long>(ow * stride.w + kw) - padding.w.left;
              if (iw < 0 || iw >= static_cast<long long>(in.w))
                continue;
              const float *px = src + input.index(static_cast<std::size_t>(it), static_cast<std::size_t>(ih),
                                                  static_cast<std::size_t>(iw), 0);
              const float *tap = wts + kernel.index(kt, kh, kw, 0, 0);
              if (depthwise) {
                for (std::size_t c = 0; c < c_out; ++c)
                  acc[c] += px[c] * tap[c];
                continue;
              }
              for (std::size_t g = 0; g < groups; ++g) {
                for (std::size_t ci = 0; ci < cin_g; ++ci) {
                  const float v = px[g * cin_g + ci];
                  const float *wrow = tap + ci * c_out + g * cout_g;
                  float *arow = acc + g * cout_g;
                  for (std::size_t co = 0; co < cout_g; ++co)
                    arow[co] += v * wrow[co];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Mean of every channel over all T*H*W voxels.
inline std::vector<float> global_avg_pool(const VideoTensor &input) {
  const std::size_t c = input.channels();
  std::vector<double> sum(c, 0.0);
  const auto data = input.data();
  for (std::size_t i = 0; i < data.size(); i += c)
    for (std::size_t k = 0; k < c; ++k)
      sum[k] += data[i + k];
  const double n = static_cast<double>(input.frames() * input.height() * input.width());
  std::vector<float> out(c, 0.0f);
  if (n > 0)
    for (std::size_t k = 0; k < c; ++k)
      out[k] = static_cast<float>(sum[k] / n);
  return out;
}

/// Per-frame spatial mean: T x 1 x 1 x C.
inline VideoTensor spatial_mean(const VideoTensor &input) {
  const std::size_t c = input.channels();
  VideoTensor out(input.frames(), 1, 1, c);
  const double n = static_cast<double>(input.height() * input.width());
  std::vector<double> sum(c);
  for (std::size_t t = 0; t < input.frames(); ++t) {
    std::fill(sum.begin(), sum.end(), 0.0);
    const auto f = input.frame(t);
    for (std::size_t i = 0; i < f.size(); i += c)
      for (std::size_t k = 0; k < c; ++k)
        sum[k] += f[i + k];
    auto o = out.frame(t);
    for (std::size_t k = 0; k < c; ++k)
      o[k] = static_cast<float>(sum[k] / n);
  }
  return out;
}

/// Spatial (1 x k x k) average pooling; padded positions are excluded from the divisor.
inline VideoTensor avg_pool_spatial(const VideoTensor &input, std::size_t k, Stride2 stride, AxisPad pad_h,
                                    AxisPad pad_w) {
  if (pad_h.left < 0 || pad_h.right < 0 || pad_w.left < 0 || pad_w.right < 0)
    throw ContractError("negative padding");
  const Dims4 in = input.dims();
  const Dims4 od{in.t, detail::conv_out_extent(in.h, pad_h, k, stride.h), detail::conv_out_extent(in.w, pad_w, k, stride.w),
                 in.c};
  VideoTensor out(od);
  std::vector<double> acc(in.c);
  for (std::size_t t = 0; t < od.t; ++t)
    for (std::size_t oh = 0; oh < od.h; ++oh)
      for (std::size_t ow = 0; ow < od.w; ++ow) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::size_t n = 0;
        for (std::size_t kh = 0; kh < k; ++kh) {
          const long long ih = static_cast<long long>(oh * stride.h + kh) - pad_h.left;
          if (ih < 0 || ih >= static_cast<long long>(in.h))
            continue;
          for (std::size_t kw = 0; kw < k; ++kw) {
            const long long iw = static_cast<long long>(ow * stride.w + kw) - pad_w.left;
            if (iw < 0 || iw >= static_cast<long long>(in.w))
              continue;
            const float *px = input.data().data() + input.index(t, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), 0);
            for (std::size_t c = 0; c < in.c; ++c)
              acc[c] += px[c];
            ++n;
          }
        }
        float *o = &out.at(t, oh, ow, 0);
        for (std::size_t c = 0; c < in.c; ++c)
          o[c] = static_cast<float>(acc[c] / static_cast<double>(n));
      }
  return out;
}

inline float hard_sigmoid(float x) noexcept { return std::clamp(x + 3.0f, 0.0f, 6.0f) / 6.0f; }

inline float hard_swish(float x) noexcept { return x * std::clamp(x + 3.0f, 0.0f, 6.0f) / 6.0f; }

inline float relu(float x) noexcept { return x > 0.0f ? x : 0.0f; }

template <typename F> void apply_inplace(std::span<float> xs, F &&f) {
  for (auto &x : xs)
    x = f(x);
}

inline void hard_swish_inplace(VideoTensor &x) { apply_inplace(x.data(), [](float v) { return hard_swish(v); }); }

/// Per-channel affine y = x * scale[c] + bias[c] (a batch norm folded for inference).
inline void channel_affine_inplace(VideoTensor &x, std::span<const float> scale, std::span<const float> bias) {
  const std::size_t c = x.channels();
  if (scale.size() != c || bias.size() != c)
    throw ShapeError("affine parameters do not match channel count " + std::to_string(c));
  auto d = x.data();
  for (std::size_t i = 0; i < d.size(); i += c)
    for (std::size_t k = 0; k < c; ++k)
      d[i + k] = d[i + k] * scale[k] + bias[k];
}

/// out = base + alpha * branch, elementwise.
inline VideoTensor add_scaled(const VideoTensor &base, const VideoTensor &branch, float alpha) {
  if (base.dims() != branch.dims())
    throw ShapeError("residual shapes differ: " + to_string(base.dims()) + " vs " + to_string(branch.dims()));
  VideoTensor out = base;
  auto o = out.data();
  const auto b = branch.data();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] += alpha * b[i];
  return out;
}

/// Dense layer y = x W + bias, W laid out (in, out).
inline std::vector<float> dense(std::span<const float> x, std::span<const float> w, std::size_t in, std::size_t out,
                                std::span<const float> bias = {}) {
  if (x.size() != in || w.size() != in * out || (!bias.empty() && bias.size() != out))
    throw ShapeError("dense layer shape mismatch");
  std::vector<float> y(out, 0.0f);
  if (!bias.empty())
    std::copy(bias.begin(), bias.end(), y.begin());
  for (std::size_t i = 0; i < in; ++i) {
    const float v = x[i];
    const float *row = w.data() + i * out;
    for (std::size_t j = 0; j < out; ++j)
      y[j] += v * row[j];
  }
  return y;
}

/// Frames of a followed by frames of b.
inline VideoTensor concat_time(const VideoTensor &a, const VideoTensor &b) {
  if (!a.same_frame_shape(b))
    throw ShapeError("concat_time frame shapes differ: " + to_string(a.dims()) + " vs " + to_string(b.dims()));
  Dims4 d = a.dims();
  d.t += b.frames();
  std::vector<float> data;
  data.reserve(d.size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return VideoTensor(d, std::move(data));
}

/// Frames [start, start + count).
inline VideoTensor slice_frames(const VideoTensor &x, std::size_t start, std::size_t count) {
  if (start + count > x.frames())
    throw ContractError("frame range out of bounds");
  Dims4 d = x.dims();
  d.t = count;
  const auto fs = x.frame_size();
  std::vector<float> data(x.data().begin() + static_cast<std::ptrdiff_t>(start * fs),
                          x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * fs));
  return VideoTensor(d, std::move(data));
}

/// The final `count` frames of x, in order.
inline VideoTensor slice_last_frames(const VideoTensor &x, std::size_t count) {
  if (count > x.frames())
    throw ContractError("cannot take last " + std::to_string(count) + " frames of a " + std::to_string(x.frames()) +
                        "-frame tensor");
  return slice_frames(x, x.frames() - count, count);
}

/// Every `stride`-th frame starting at `offset`.
inline VideoTensor stride_frames(const VideoTensor &x, std::size_t stride, std::size_t offset = 0) {
  if (stride == 0)
    throw ContractError("frame stride must be positive");
  Dims4 d = x.dims();
  d.t = offset < x.frames() ? (x.frames() - offset + stride - 1) / stride : 0;
  VideoTensor out(d);
  for (std::size_t i = 0; i < d.t; ++i) {
    const auto f = x.frame(offset + i * stride);
    std::copy(f.begin(), f.end(), out.frame(i).begin());
  }
  return out;
}

inline bool all_finite(std::span<const float> xs) {
  return std::all_of(xs.begin(), xs.end(), [](float v) { return std::isfinite(v); });
}

inline float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw ShapeError("max_abs_diff length mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

} // namespace mvnet
