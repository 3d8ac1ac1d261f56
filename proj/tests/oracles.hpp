#pragma once

// Independent reference implementations for the test suite. Everything here
// is written from the definitions with plain loops in double precision and
// shares no code with the library beyond its data types.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvnet/arch.hpp"
#include "mvnet/tensor.hpp"
#include "mvnet/weights.hpp"

namespace oracle {

using mvnet::Dims4;
using mvnet::VideoTensor;
using mvnet::WeightTensor;

struct DTensor {
  std::size_t t = 0, h = 0, w = 0, c = 0;
  std::vector<double> v;

  DTensor() = default;
  DTensor(std::size_t t_, std::size_t h_, std::size_t w_, std::size_t c_)
      : t(t_), h(h_), w(w_), c(c_), v(t_ * h_ * w_ * c_, 0.0) {}
  explicit DTensor(const VideoTensor &x) : DTensor(x.frames(), x.height(), x.width(), x.channels()) {
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = x.data()[i];
  }
  double &at(std::size_t a, std::size_t b, std::size_t d, std::size_t e) { return v[((a * h + b) * w + d) * c + e]; }
  double at(std::size_t a, std::size_t b, std::size_t d, std::size_t e) const {
    return v[((a * h + b) * w + d) * c + e];
  }
};

inline double max_abs_diff(const VideoTensor &a, const DTensor &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < b.v.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.v[i]));
  return m;
}

inline std::size_t out_extent(std::size_t n, long long pl, long long pr, std::size_t k, std::size_t s) {
  return static_cast<std::size_t>((static_cast<long long>(n) + pl + pr - static_cast<long long>(k)) /
                                      static_cast<long long>(s) +
                                  1);
}

/// Six nested loops; `macs` counts every multiply-accumulate including padded taps.
inline DTensor conv3d(const DTensor &x, const WeightTensor &k, std::size_t sh, std::size_t sw, long long pt_l,
                      long long pt_r, long long ph_l, long long ph_r, long long pw_l, long long pw_r,
                      const std::vector<float> &bias = {}, std::uint64_t *macs = nullptr) {
  const std::size_t kt = k.kt(), kh = k.kh(), kw = k.kw(), cg = k.in_per_group(), co = k.out_channels();
  const std::size_t groups = k.groups(), og = co / groups;
  DTensor y(out_extent(x.t, pt_l, pt_r, kt, 1), out_extent(x.h, ph_l, ph_r, kh, sh), out_extent(x.w, pw_l, pw_r, kw, sw),
            co);
  for (std::size_t ot = 0; ot < y.t; ++ot)
    for (std::size_t oh = 0; oh < y.h; ++oh)
      for (std::size_t ow = 0; ow < y.w; ++ow)
        for (std::size_t o = 0; o < co; ++o) {
          double acc = bias.empty() ? 0.0 : bias[o];
          const std::size_t g = o / og;
          for (std::size_t a = 0; a < kt; ++a)
            for (std::size_t b = 0; b < kh; ++b)
              for (std::size_t d = 0; d < kw; ++d)
                for (std::size_t i = 0; i < cg; ++i) {
                  if (macs)
                    ++*macs;
                  const long long it = static_cast<long long>(ot + a) - pt_l;
                  const long long ih = static_cast<long long>(oh * sh + b) - ph_l;
                  const long long iw = static_cast<long long>(ow * sw + d) - pw_l;
                  if (it < 0 || ih < 0 || iw < 0 || it >= static_cast<long long>(x.t) ||
                      ih >= static_cast<long long>(x.h) || iw >= static_cast<long long>(x.w))
                    continue;
                  acc += x.at(static_cast<std::size_t>(it), static_cast<std::size_t>(ih), static_cast<std::size_t>(iw),
                              g * cg + i) *
                         static_cast<double>(k.at(a, b, d, i, o));
                }
          y.at(ot, oh, ow, o) = acc;
        }
  return y;
}

/// Mean of the first `n` entries of `xs`.
inline std::vector<double> prefix_mean(const std::vector<std::vector<float>> &xs, std::size_t n) {
  std::vector<double> m(xs.at(0).size(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m.size(); ++k)
      m[k] += xs[i][k];
  for (auto &v : m)
    v /= static_cast<double>(n);
  return m;
}

/// Whole-clip shift: the first floor(f*C) channels of frame t come from frame t-1 (zero at t=0).
inline VideoTensor direct_shift(const VideoTensor &x, double fraction) {
  VideoTensor y = x;
  const std::size_t moved = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(x.channels())));
  for (std::size_t t = 0; t < x.frames(); ++t)
    for (std::size_t h = 0; h < x.height(); ++h)
      for (std::size_t w = 0; w < x.width(); ++w)
        for (std::size_t c = 0; c < moved; ++c)
          y.at(t, h, w, c) = t == 0 ? 0.0f : x.at(t - 1, h, w, c);
  return y;
}

inline double hsig(double x) { return std::min(std::max(x + 3.0, 0.0), 6.0) / 6.0; }
inline double hswish(double x) { return x * hsig(x); }

/// Dense layer with row-major (in x out) weights.
inline std::vector<double> dense(const std::vector<double> &x, const std::vector<float> &w,
                                 const std::vector<float> &b, std::size_t out) {
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = b.empty() ? 0.0 : b[o];
    for (std::size_t i = 0; i < x.size(); ++i)
      acc += x[i] * static_cast<double>(w[i * out + o]);
    y[o] = acc;
  }
  return y;
}

inline std::vector<double> se_gate(const std::vector<double> &s, const std::vector<float> &rw,
                                   const std::vector<float> &rb, const std::vector<float> &ew,
                                   const std::vector<float> &eb, std::size_t hidden) {
  auto hdn = dense(s, rw, rb, hidden);
  for (auto &v : hdn)
    v = std::max(v, 0.0);
  auto g = dense(hdn, ew, eb, s.size());
  for (auto &v : g)
    v = hsig(v);
  return g;
}

inline std::vector<double> posenc(std::size_t t, std::size_t dim) {
  // An odd dim gets the encoding of dim - 1 plus a trailing zero.
  std::vector<double> pe(dim, 0.0);
  const double even = static_cast<double>(dim - dim % 2);
  for (std::size_t i = 0; 2 * i + 1 < dim; ++i) {
    const double angle = static_cast<double>(t) / std::pow(10000.0, static_cast<double>(2 * i) / even);
    pe[2 * i] = std::sin(angle);
    pe[2 * i + 1] = std::cos(angle);
  }
  return pe;
}

/// Nearest multiple of 8 by comparing the two neighbours; ties go up.
inline long long nearest8(double x) {
  const long long lo = static_cast<long long>(std::floor(x / 8.0)) * 8;
  const long long hi = lo + 8;
  return (x - static_cast<double>(lo)) < (static_cast<double>(hi) - x) ? lo : hi;
}

/// Nearest integer, ties up.
inline long long nearest_int(double x) {
  const long long lo = static_cast<long long>(std::floor(x));
  return (x - static_cast<double>(lo)) < 0.5 ? lo : lo + 1;
}

// ---------------------------------------------------------------------------
// Reference network forward pass: double precision, naive convolutions, and
// an instrumented operation counter following the cost conventions (one MAC
// per conv tap, per dense weight, per norm output, per pooled input element).

struct NetResult {
  std::vector<std::vector<double>> frame_logits;
  std::vector<double> clip_logits;
  std::uint64_t macs = 0;
};

struct RefNet {
  const mvnet::NetworkSpec &spec;
  const mvnet::Weights &w;
  std::uint64_t macs = 0;

  const std::vector<float> &vec(const std::string &n) const { return w.get(n).data; }

  WeightTensor kernel(const std::string &n, std::size_t groups = 1) const {
    const auto &t = w.get(n);
    return WeightTensor({t.dims[0], t.dims[1], t.dims[2], t.dims[3], t.dims[4]}, groups, t.data);
  }

  static std::pair<long long, long long> same(std::size_t k) {
    return k % 2 ? std::pair<long long, long long>{(long long)(k - 1) / 2, (long long)(k - 1) / 2}
                 : std::pair<long long, long long>{(long long)(k - 2) / 2, (long long)k / 2};
  }

  void norm(DTensor &x, const std::string &p) {
    const auto &s = vec(p + ".scale"), &b = vec(p + ".bias");
    for (std::size_t i = 0; i < x.v.size(); ++i)
      x.v[i] = x.v[i] * s[i % x.c] + b[i % x.c];
    macs += x.v.size();
  }

  static void act(DTensor &x) {
    for (auto &v : x.v)
      v = hswish(v);
  }

  DTensor pw(const DTensor &x, const std::string &n) {
    return conv3d(x, kernel(n), 1, 1, 0, 0, 0, 0, 0, 0, {}, &macs);
  }

  DTensor layer(const DTensor &x, const mvnet::LayerSpec &l, const std::string &p, bool entry) {
    DTensor h = pw(x, p + ".expand.conv");
    norm(h, p + ".expand.norm");
    act(h);
    const auto sp = same(l.kernel.space);
    auto tp = same(l.kernel.time);
    if (l.causal)
      tp = {tp.first + tp.second, 0};
    h = conv3d(h, kernel(p + ".dw.conv", l.expand), l.stride, l.stride, tp.first, tp.second, sp.first, sp.second,
               sp.first, sp.second, {}, &macs);
    norm(h, p + ".dw.norm");
    act(h);
    if (l.se != mvnet::SeMode::None) {
      const std::size_t hid = w.get(p + ".se.reduce.w").dims[1];
      const auto &rw = vec(p + ".se.reduce.w"), &rb = vec(p + ".se.reduce.b"), &ew = vec(p + ".se.expand.w"),
                 &eb = vec(p + ".se.expand.b");
      // Spatial mean per frame.
      std::vector<std::vector<double>> frame_mean(h.t, std::vector<double>(h.c, 0.0));
      for (std::size_t t = 0; t < h.t; ++t)
        for (std::size_t i = 0; i < h.h; ++i)
          for (std::size_t j = 0; j < h.w; ++j)
            for (std::size_t c = 0; c < h.c; ++c)
              frame_mean[t][c] += h.at(t, i, j, c) / static_cast<double>(h.h * h.w);
      std::vector<std::vector<double>> gates;
      if (l.se == mvnet::SeMode::Causal) {
        macs += h.v.size() + h.t * h.c;
        if (l.pos_enc)
          macs += h.t * h.c;
        std::vector<double> sum(h.c, 0.0);
        for (std::size_t t = 0; t < h.t; ++t) {
          std::vector<double> s(h.c);
          const auto pe = posenc(t, h.c);
          for (std::size_t c = 0; c < h.c; ++c) {
            sum[c] += frame_mean[t][c];
            s[c] = sum[c] / static_cast<double>(t + 1) + (l.pos_enc ? pe[c] : 0.0);
          }
          gates.push_back(se_gate(s, rw, rb, ew, eb, hid));
          macs += 2 * h.c * hid;
        }
      } else {
        macs += h.v.size();
        std::vector<double> s(h.c, 0.0);
        for (std::size_t t = 0; t < h.t; ++t)
          for (std::size_t c = 0; c < h.c; ++c)
            s[c] += frame_mean[t][c] / static_cast<double>(h.t);
        gates.assign(h.t, se_gate(s, rw, rb, ew, eb, hid));
        macs += 2 * h.c * hid;
      }
      for (std::size_t t = 0; t < h.t; ++t)
        for (std::size_t i = 0; i < h.h; ++i)
          for (std::size_t j = 0; j < h.w; ++j)
            for (std::size_t c = 0; c < h.c; ++c)
              h.at(t, i, j, c) *= gates[t][c];
      macs += h.v.size();
    }
    DTensor y = pw(h, p + ".project.conv");
    norm(y, p + ".project.norm");

    const bool has_rezero = w.contains(p + ".rezero");
    DTensor base;
    if (entry) {
      // 3x3 average over in-bounds neighbours only.
      const std::size_t s = l.stride;
      DTensor pooled(x.t, out_extent(x.h, 1, 1, 3, s), out_extent(x.w, 1, 1, 3, s), x.c);
      for (std::size_t t = 0; t < x.t; ++t)
        for (std::size_t i = 0; i < pooled.h; ++i)
          for (std::size_t j = 0; j < pooled.w; ++j)
            for (std::size_t c = 0; c < x.c; ++c) {
              double acc = 0.0;
              int n = 0;
              for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                  const long long a = static_cast<long long>(i * s) + di, b = static_cast<long long>(j * s) + dj;
                  if (a < 0 || b < 0 || a >= (long long)x.h || b >= (long long)x.w)
                    continue;
                  acc += x.at(t, (std::size_t)a, (std::size_t)b, c);
                  ++n;
                }
              pooled.at(t, i, j, c) = acc / n;
            }
      macs += pooled.v.size() * 9;
      base = pw(pooled, p + ".skip.conv");
      norm(base, p + ".skip.norm");
    } else if (has_rezero) {
      base = x;
    } else {
      return y;
    }
    const double rz = vec(p + ".rezero")[0];
    for (std::size_t i = 0; i < y.v.size(); ++i)
      y.v[i] = base.v[i] + rz * y.v[i];
    macs += y.v.size();
    return y;
  }

  std::vector<double> classify(const std::vector<double> &f) {
    auto hdn = dense(f, vec("head.hidden.w"), vec("head.hidden.b"), spec.head.hidden_width);
    for (auto &v : hdn)
      v = hswish(v);
    return dense(hdn, vec("head.classifier.w"), vec("head.classifier.b"), spec.head.classes);
  }

  NetResult run(const VideoTensor &video) {
    DTensor x(video);
    const auto ss = same(spec.stem.kernel.space);
    x = conv3d(x, kernel("stem.conv"), 2, 2, 0, 0, ss.first, ss.second, ss.first, ss.second, {}, &macs);
    norm(x, "stem.norm");
    act(x);
    for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi)
      for (std::size_t li = 0; li < spec.blocks[bi].layers.size(); ++li)
        x = layer(x, spec.blocks[bi].layers[li], "b" + std::to_string(bi) + ".l" + std::to_string(li), li == 0);
    DTensor hc = pw(x, "head.conv");
    norm(hc, "head.norm");
    act(hc);
    NetResult r;
    std::vector<double> clip(hc.c, 0.0);
    for (std::size_t t = 0; t < hc.t; ++t) {
      std::vector<double> f(hc.c, 0.0);
      for (std::size_t i = 0; i < hc.h; ++i)
        for (std::size_t j = 0; j < hc.w; ++j)
          for (std::size_t c = 0; c < hc.c; ++c)
            f[c] += hc.at(t, i, j, c) / static_cast<double>(hc.h * hc.w);
      for (std::size_t c = 0; c < hc.c; ++c)
        clip[c] += f[c] / static_cast<double>(hc.t);
      r.frame_logits.push_back(classify(f));
    }
    macs += hc.v.size() + hc.t * hc.c;
    r.clip_logits = classify(clip);
    macs += spec.head.conv_width * spec.head.hidden_width + spec.head.hidden_width * spec.head.classes;
    r.macs = macs;
    return r;
  }
};

inline NetResult forward(const mvnet::NetworkSpec &spec, const mvnet::Weights &w, const VideoTensor &video) {
  return RefNet{spec, w}.run(video);
}

} // namespace oracle
