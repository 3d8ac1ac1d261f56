#pragma once

// The architecture search space as data, compound scaling of the whole space
// by a single exponent phi, and a seeded uniform sampler over it.
//
// Search-space files use the architecture file syntax with menus:
//
//   search_space <name>
//   video frames=<T> size=<S> stride=<tau> channels=<C>
//   stem kernel=<kt>x<ks> width=<c1>
//   blocks widths=<c>,<c>,... multipliers=<m>,<m>,... unstrided=<block index>
//   depth min=<L> max=<L>
//   kernels menu=<kt>x<ks>,<kt>x<ks>,...
//   expand multipliers=<m>,<m>,...
//   se searchable=true|false
//   head conv=<c> hidden=<c> classes=<n>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mvnet/arch.hpp"
#include "mvnet/error.hpp"
#include "mvnet/rounding.hpp"

namespace mvnet {

struct SearchSpaceSpec {
  std::string name = "base";
  VideoSpec video{50, 224, 5, 3};
  StemSpec stem{{1, 3}, 16};
  std::vector<std::size_t> block_widths{24, 48, 96, 96, 192};
  std::vector<double> width_multipliers{0.75, 1.0, 1.25};
  /// Index of the block whose first layer keeps full resolution.
  std::size_t unstrided_block = 3;
  std::size_t depth_min = 1;
  std::size_t depth_max = 10;
  std::vector<KernelSpec> kernels{{1, 3}, {1, 5}, {1, 7}, {5, 1}, {7, 1}, {3, 3}, {5, 3}};
  std::vector<double> expand_multipliers{1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  bool se_searchable = true;
  HeadSpec head{512, 2048, 600};
  /// Scaled values that rounded below their minimum and were clamped.
  std::vector<std::string> clamped;

  bool operator==(const SearchSpaceSpec &) const = default;
};

/// Search space at phi = 0 (the A2 space): 50 x 224^2 at tau 5, stem 16,
/// blocks 24/48/96/96/192, final conv 512, hidden dense 2048.
inline SearchSpaceSpec base_search_space() { return SearchSpaceSpec{}; }

/// Feature-map widths from the stem through the last block.
inline std::vector<std::size_t> channel_progression(const SearchSpaceSpec &s) {
  std::vector<std::size_t> w{s.stem.width};
  w.insert(w.end(), s.block_widths.begin(), s.block_widths.end());
  return w;
}

struct ScalingCoefficients {
  double phi = 0.0;
  double alpha = 1.36; // depth
  double beta = 1.18;  // width
  double gamma = 1.16; // resolution
  double delta = 1.24; // frame rate

  double depth() const { return std::pow(alpha, phi); }
  double width() const { return std::pow(beta, phi); }
  double resolution() const { return std::pow(gamma, phi); }
  double frame_rate() const { return std::pow(delta, phi); }
};

/// alpha * beta^2 * gamma^2 * delta: the growth in expected model cost per unit of phi.
inline double coefficient_product(const ScalingCoefficients &c) {
  return c.alpha * c.beta * c.beta * c.gamma * c.gamma * c.delta;
}

/// Candidate coefficient values for the coefficient search: 1.05 to 1.40 in steps of 0.05.
inline std::vector<double> coefficient_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 7; ++i)
    g.push_back(1.05 + 0.05 * i);
  return g;
}

/// Grid combinations whose product lies within `tolerance` of `target`.
///
/// This is the candidate set the coefficient search would train and rank;
/// the ranking itself needs trained models and is not performed here.
inline std::vector<ScalingCoefficients> coefficient_candidates(double target, double tolerance) {
  std::vector<ScalingCoefficients> out;
  const auto g = coefficient_grid();
  for (double a : g)
    for (double b : g)
      for (double c : g)
        for (double d : g) {
          ScalingCoefficients k{1.0, a, b, c, d};
          if (std::abs(coefficient_product(k) - target) <= tolerance)
            out.push_back(k);
        }
  return out;
}

/// Scales depth, widths, resolution and frame rate of a search space by phi.
///
/// Widths and resolution round to the nearest multiple of 8, depth bounds and
/// frame stride to the nearest integer (ties up). Values that would round
/// below 8 (widths) or 1 (counts) are clamped and listed in `clamped`.
inline SearchSpaceSpec scale_search_space(const SearchSpaceSpec &space, double phi,
                                          ScalingCoefficients coeffs = {}) {
  coeffs.phi = phi;
  SearchSpaceSpec s = space;
  s.clamped.clear();
  auto width8 = [&](double v, const std::string &what) {
    auto r = round_to_multiple(v, 8);
    if (r < 8) {
      s.clamped.push_back(what + "=" + std::to_string(v));
      r = 8;
    }
    return static_cast<std::size_t>(r);
  };
  auto count1 = [&](double v, const std::string &what) {
    auto r = round_half_up(v);
    if (r < 1) {
      s.clamped.push_back(what + "=" + std::to_string(v));
      r = 1;
    }
    return static_cast<std::size_t>(r);
  };

  const double d = coeffs.depth(), w = coeffs.width(), r = coeffs.resolution(), f = coeffs.frame_rate();
  s.depth_min = count1(d * static_cast<double>(space.depth_min), "depth_min");
  s.depth_max = std::max(s.depth_min, count1(d * static_cast<double>(space.depth_max), "depth_max"));
  s.stem.width = width8(w * static_cast<double>(space.stem.width), "stem.width");
  for (std::size_t i = 0; i < s.block_widths.size(); ++i)
    s.block_widths[i] = width8(w * static_cast<double>(space.block_widths[i]), "block_widths[" + std::to_string(i) + "]");
  s.video.size = width8(r * static_cast<double>(space.video.size), "size");
  s.video.tau = count1(f * static_cast<double>(space.video.tau), "stride");
  // Same clip duration at the new frame rate.
  s.video.frames = count1(static_cast<double>(space.video.frames) * static_cast<double>(s.video.tau) /
                              static_cast<double>(space.video.tau),
                          "frames");
  if (phi != 0.0) {
    std::ostringstream n;
    n << space.name << "@phi=" << phi;
    s.name = n.str();
  }
  return s;
}

namespace detail {

inline std::size_t pick(std::mt19937_64 &rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline std::size_t width_at_least_8(double v) {
  return static_cast<std::size_t>(std::max<long long>(8, round_to_multiple(v, 8)));
}

} // namespace detail

/// Uniform, independent choice for every decision of the space.
/// With `streaming`, the result uses causal convolutions and causal SE.
inline NetworkSpec sample_architecture(const SearchSpaceSpec &space, std::uint64_t seed, bool streaming = false) {
  std::mt19937_64 rng(seed);
  NetworkSpec spec;
  spec.name = "sample-" + std::to_string(seed);
  spec.video = space.video;
  spec.stem = space.stem;
  spec.head = space.head;
  for (std::size_t bi = 0; bi < space.block_widths.size(); ++bi) {
    const double mult = space.width_multipliers[detail::pick(rng, space.width_multipliers.size())];
    const std::size_t base = detail::width_at_least_8(static_cast<double>(space.block_widths[bi]) * mult);
    const std::size_t depth = space.depth_min + detail::pick(rng, space.depth_max - space.depth_min + 1);
    BlockSpec block;
    for (std::size_t li = 0; li < depth; ++li) {
      LayerSpec l;
      l.kernel = space.kernels[detail::pick(rng, space.kernels.size())];
      l.base = base;
      const double em = space.expand_multipliers[detail::pick(rng, space.expand_multipliers.size())];
      l.expand = detail::width_at_least_8(static_cast<double>(base) * em);
      l.stride = (li == 0 && bi != space.unstrided_block) ? 2 : 1;
      l.se = space.se_searchable ? (detail::pick(rng, 2) == 0 ? SeMode::None : SeMode::Global) : SeMode::Global;
      block.layers.push_back(l);
    }
    spec.blocks.push_back(std::move(block));
  }
  if (streaming) {
    spec = make_streaming(std::move(spec));
  }
  validate(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Text format

inline std::string format_search_space(const SearchSpaceSpec &s) {
  std::ostringstream o;
  o << std::setprecision(10);
  auto join = [&](const auto &xs) {
    std::ostringstream j;
    j << std::setprecision(10);
    for (std::size_t i = 0; i < xs.size(); ++i)
      j << (i ? "," : "") << xs[i];
    return j.str();
  };
  o << "search_space " << s.name << "\n";
  o << "video frames=" << s.video.frames << " size=" << s.video.size << " stride=" << s.video.tau
    << " channels=" << s.video.channels << "\n";
  o << "stem kernel=" << s.stem.kernel.time << "x" << s.stem.kernel.space << " width=" << s.stem.width << "\n";
  o << "blocks widths=" << join(s.block_widths) << " multipliers=" << join(s.width_multipliers)
    << " unstrided=" << s.unstrided_block << "\n";
  o << "depth min=" << s.depth_min << " max=" << s.depth_max << "\n";
  o << "kernels menu=";
  for (std::size_t i = 0; i < s.kernels.size(); ++i)
    o << (i ? "," : "") << s.kernels[i].time << "x" << s.kernels[i].space;
  o << "\n";
  o << "expand multipliers=" << join(s.expand_multipliers) << "\n";
  o << "se searchable=" << (s.se_searchable ? "true" : "false") << "\n";
  o << "head conv=" << s.head.conv_width << " hidden=" << s.head.hidden_width << " classes=" << s.head.classes
    << "\n";
  return o.str();
}

namespace detail {

inline std::vector<std::string> split_commas(const std::string &s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ','))
    out.push_back(cur);
  return out;
}

inline double parse_double(std::size_t line, const std::string &field, const std::string &s) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos != s.size() || s.empty())
    throw ParseError(line, field, "expected a number, got '" + s + "'");
  return v;
}

inline std::size_t parse_count(std::size_t line, const std::string &field, const std::string &s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-')
    throw ParseError(line, field, "expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

} // namespace detail

inline SearchSpaceSpec parse_search_space(std::string_view text) {
  SearchSpaceSpec s;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos)
      raw.resize(hash);
    const auto tok = detail::split_ws(raw);
    if (tok.empty())
      continue;
    const auto &dir = tok[0];
    if (dir == "search_space") {
      if (tok.size() != 2)
        throw ParseError(line_no, dir, "expected 'search_space <name>'");
      s.name = tok[1];
      have_header = true;
      continue;
    }
    detail::Fields f(line_no, tok, 1);
    auto list = [&](const std::string &key) { return detail::split_commas(f.text(key)); };
    if (dir == "video") {
      s.video = {f.count("frames"), f.count("size"), f.count("stride"), f.count("channels")};
      f.finish();
    } else if (dir == "stem") {
      s.stem = {f.kernel("kernel"), f.count("width")};
      f.finish();
    } else if (dir == "blocks") {
      s.block_widths.clear();
      for (const auto &v : list("widths"))
        s.block_widths.push_back(detail::parse_count(line_no, "widths", v));
      s.width_multipliers.clear();
      for (const auto &v : list("multipliers"))
        s.width_multipliers.push_back(detail::parse_double(line_no, "multipliers", v));
      s.unstrided_block = f.count("unstrided");
      f.finish();
    } else if (dir == "depth") {
      s.depth_min = f.count("min");
      s.depth_max = f.count("max");
      f.finish();
    } else if (dir == "kernels") {
      s.kernels.clear();
      for (const auto &v : list("menu")) {
        detail::Fields one(line_no, {"k=" + v}, 0);
        s.kernels.push_back(one.kernel("k"));
      }
      f.finish();
    } else if (dir == "expand") {
      s.expand_multipliers.clear();
      for (const auto &v : list("multipliers"))
        s.expand_multipliers.push_back(detail::parse_double(line_no, "multipliers", v));
      f.finish();
    } else if (dir == "se") {
      s.se_searchable = f.flag("searchable");
      f.finish();
    } else if (dir == "head") {
      s.head = {f.count("conv"), f.count("hidden"), f.count("classes")};
      f.finish();
    } else {
      throw ParseError(line_no, dir, "unknown directive");
    }
  }
  if (!have_header)
    throw ParseError(line_no, "search_space", "missing required directive");
  if (s.block_widths.empty() || s.width_multipliers.empty() || s.kernels.empty() || s.expand_multipliers.empty())
    throw SpecError("search space menus must not be empty");
  if (s.depth_min < 1 || s.depth_max < s.depth_min)
    throw SpecError("search space depth range must satisfy 1 <= min <= max");
  return s;
}

} // namespace mvnet
