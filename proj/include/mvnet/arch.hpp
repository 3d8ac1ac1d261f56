#pragma once

// Declarative network descriptions: stem, blocks of inverted-bottleneck
// layers, head. Also the text format used for .arch files and the builtin
// A0 / A2 definitions.
//
// Architecture file grammar (one directive per line, '#' starts a comment):
//
//   network <name>
//   video frames=<T> size=<S> stride=<tau> channels=<C>
//   stem kernel=<kt>x<ks> width=<c1>
//   defaults [se=none|global|causal] [causal=true|false] [posenc=true|false]
//   block
//     layer kernel=<kt>x<ks> base=<c> expand=<c> [stride=1|2] [se=..] [causal=..] [posenc=..]
//   end
//   head conv=<c> hidden=<c> classes=<n>
//
// `defaults` sets the optional layer fields for every following layer.

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mvnet/error.hpp"

namespace mvnet {

struct VideoSpec {
  std::size_t frames = 1;
  std::size_t size = 32;
  std::size_t tau = 1;
  std::size_t channels = 3;
  bool operator==(const VideoSpec &) const = default;
};

/// k_time x k_space^2.
struct KernelSpec {
  std::size_t time = 1;
  std::size_t space = 3;
  bool operator==(const KernelSpec &) const = default;
};

enum class SeMode { None, Global, Causal };

struct LayerSpec {
  KernelSpec kernel;
  std::size_t base = 8;
  std::size_t expand = 8;
  std::size_t stride = 1;
  SeMode se = SeMode::Global;
  bool causal = false;
  bool pos_enc = true;

  bool temporal() const noexcept { return kernel.time > 1; }
  bool operator==(const LayerSpec &) const = default;
};

struct BlockSpec {
  std::vector<LayerSpec> layers;
  bool operator==(const BlockSpec &) const = default;
};

/// 1 x k^2 convolution with spatial stride 2.
struct StemSpec {
  KernelSpec kernel{1, 3};
  std::size_t width = 8;
  bool operator==(const StemSpec &) const = default;
};

struct HeadSpec {
  std::size_t conv_width = 512;
  std::size_t hidden_width = 2048;
  std::size_t classes = 600;
  bool operator==(const HeadSpec &) const = default;
};

struct NetworkSpec {
  std::string name;
  VideoSpec video;
  StemSpec stem;
  std::vector<BlockSpec> blocks;
  HeadSpec head;

  bool operator==(const NetworkSpec &) const = default;

  std::size_t layer_count() const {
    std::size_t n = 0;
    for (const auto &b : blocks)
      n += b.layers.size();
    return n;
  }
};

inline std::string layer_path(std::size_t block, std::size_t layer) {
  return "b" + std::to_string(block) + ".l" + std::to_string(layer);
}

inline const char *to_string(SeMode m) {
  switch (m) {
  case SeMode::None:
    return "none";
  case SeMode::Global:
    return "global";
  case SeMode::Causal:
    return "causal";
  }
  return "?";
}

/// Output extent of a SAME-padded convolution with stride `s`.
inline std::size_t strided_extent(std::size_t in, std::size_t s) { return (in + s - 1) / s; }

/// Spatial resolution after the stem and every strided block.
inline std::size_t final_resolution(const NetworkSpec &spec) {
  std::size_t r = strided_extent(spec.video.size, 2);
  for (const auto &b : spec.blocks)
    for (const auto &l : b.layers)
      r = strided_extent(r, l.stride);
  return r;
}

/// Throws SpecError naming the first violated rule.
inline void validate(const NetworkSpec &spec) {
  auto fail = [&](const std::string &where, const std::string &rule) {
    throw SpecError(spec.name + ": " + where + ": " + rule);
  };
  const auto &v = spec.video;
  if (v.frames == 0 || v.size == 0 || v.tau == 0 || v.channels == 0)
    fail("video", "all dimensions must be positive");
  if (v.size % 2 != 0)
    fail("video", "spatial size must be even");
  auto odd = [](std::size_t k) { return k >= 1 && k % 2 == 1; };
  if (!odd(spec.stem.kernel.space) || spec.stem.kernel.time != 1)
    fail("stem", "kernel must be 1 x k^2 with odd k");
  if (spec.stem.width == 0 || spec.stem.width % 8 != 0)
    fail("stem", "width must be a positive multiple of 8");
  if (spec.blocks.empty())
    fail("blocks", "network needs at least one block");
  for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi) {
    const auto &block = spec.blocks[bi];
    if (block.layers.empty())
      fail("b" + std::to_string(bi), "block needs at least one layer");
    for (std::size_t li = 0; li < block.layers.size(); ++li) {
      const auto &l = block.layers[li];
      const auto where = layer_path(bi, li);
      if (!odd(l.kernel.time) || !odd(l.kernel.space))
        fail(where, "kernel extents must be odd and positive");
      if (l.base == 0 || l.base % 8 != 0)
        fail(where, "c_base must be a positive multiple of 8");
      if (l.expand == 0 || l.expand % 8 != 0)
        fail(where, "c_expand must be a positive multiple of 8");
      if (l.stride != 1 && l.stride != 2)
        fail(where, "spatial stride must be 1 or 2");
      if (l.stride == 2 && li != 0)
        fail(where, "stride 2 is only allowed on the first layer of a block");
    }
  }
  const auto &h = spec.head;
  if (h.conv_width == 0 || h.hidden_width == 0 || h.classes == 0)
    fail("head", "widths and class count must be positive");
}

/// Name of the first layer that prevents frame-by-frame streaming, if any.
inline std::optional<std::pair<std::string, std::string>> streaming_blocker(const NetworkSpec &spec) {
  for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi)
    for (std::size_t li = 0; li < spec.blocks[bi].layers.size(); ++li) {
      const auto &l = spec.blocks[bi].layers[li];
      if (l.temporal() && !l.causal)
        return std::pair{layer_path(bi, li), std::string("has a non-causal temporal convolution (k_time = ") +
                                                 std::to_string(l.kernel.time) + ")"};
      if (l.se == SeMode::Global)
        return std::pair{layer_path(bi, li), std::string("uses global (non-causal) squeeze-excite")};
    }
  return std::nullopt;
}

inline bool is_streamable(const NetworkSpec &spec) { return !streaming_blocker(spec).has_value(); }

/// Same network with causal convolutions and causal squeeze-excite.
inline NetworkSpec make_streaming(NetworkSpec spec, bool pos_enc = true) {
  for (auto &b : spec.blocks)
    for (auto &l : b.layers) {
      l.causal = true;
      if (l.se != SeMode::None)
        l.se = SeMode::Causal;
      l.pos_enc = pos_enc;
    }
  spec.name += "-Stream";
  return spec;
}

namespace detail {

struct LayerRow {
  std::size_t kt, ks, base, expand;
};

inline NetworkSpec layout_network(std::string name, VideoSpec video, std::size_t stem_width,
                                 const std::vector<std::vector<LayerRow>> &blocks, HeadSpec head) {
  NetworkSpec spec{std::move(name), video, StemSpec{{1, 3}, stem_width}, {}, head};
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    BlockSpec block;
    for (std::size_t li = 0; li < blocks[bi].size(); ++li) {
      const auto &r = blocks[bi][li];
      LayerSpec l;
      l.kernel = {r.kt, r.ks};
      l.base = r.base;
      l.expand = r.expand;
      // Every block downsamples on entry except the fourth.
      l.stride = (li == 0 && bi != 3) ? 2 : 1;
      block.layers.push_back(l);
    }
    spec.blocks.push_back(std::move(block));
  }
  return spec;
}

} // namespace detail

/// Builtin architectures "A0" and "A2" (non-causal base variants, 600 classes).
inline NetworkSpec builtin(std::string_view name) {
  if (name == "A0")
    return detail::layout_network("A0", {50, 172, 5, 3}, 8,
                                 {
                                     {{1, 5, 8, 40}},
                                     {{5, 3, 32, 80}, {3, 3, 32, 80}, {3, 3, 32, 80}},
                                     {{5, 3, 56, 184}, {3, 3, 56, 112}, {3, 3, 56, 184}},
                                     {{5, 3, 56, 184}, {3, 3, 56, 184}, {3, 3, 56, 184}, {3, 3, 56, 184}},
                                     {{5, 3, 104, 344}, {1, 5, 104, 280}, {1, 5, 104, 280}, {1, 5, 104, 344}},
                                 },
                                 {480, 2048, 600});
  if (name == "A2")
    return detail::layout_network(
        "A2", {50, 224, 5, 3}, 16,
        {
            {{1, 5, 16, 40}, {3, 3, 16, 40}, {3, 3, 16, 64}},
            {{3, 3, 40, 96}, {3, 3, 40, 120}, {3, 3, 40, 96}, {3, 3, 40, 96}, {3, 3, 40, 120}},
            {{5, 3, 72, 240}, {3, 3, 72, 160}, {3, 3, 72, 240}, {3, 3, 72, 192}, {3, 3, 72, 240}},
            {{5, 3, 72, 240}, {3, 3, 72, 240}, {3, 3, 72, 240}, {3, 3, 72, 240}, {1, 5, 72, 144}, {3, 3, 72, 240}},
            {{5, 3, 144, 480},
             {1, 5, 144, 384},
             {1, 5, 144, 384},
             {1, 5, 144, 480},
             {1, 5, 144, 480},
             {3, 3, 144, 480},
             {1, 3, 144, 576}},
        },
        {640, 2048, 600});
  throw SpecError("unknown builtin architecture '" + std::string(name) + "' (known: A0, A2)");
}

// ---------------------------------------------------------------------------
// Text format

namespace detail {

inline std::vector<std::string> split_ws(const std::string &line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;)
    out.push_back(tok);
  return out;
}

/// key=value fields of one directive line.
class Fields {
public:
  Fields(std::size_t line, const std::vector<std::string> &tokens, std::size_t first) : line_(line) {
    for (std::size_t i = first; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos || eq == 0)
        throw ParseError(line, tokens[i], "expected key=value");
      auto key = tokens[i].substr(0, eq);
      if (values_.count(key))
        throw ParseError(line, key, "duplicate field");
      values_[key] = tokens[i].substr(eq + 1);
    }
  }

  bool has(const std::string &key) const { return values_.count(key) != 0; }

  const std::string &text(const std::string &key) { return take(key); }

  std::size_t count(const std::string &key) {
    const auto &s = take(key);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception &) {
      pos = 0;
    }
    if (pos != s.size() || s.empty() || s[0] == '-')
      throw ParseError(line_, key, "expected a non-negative integer, got '" + s + "'");
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string &key) {
    const auto &s = take(key);
    if (s == "true")
      return true;
    if (s == "false")
      return false;
    throw ParseError(line_, key, "expected true or false, got '" + s + "'");
  }

  SeMode se(const std::string &key) {
    const auto &s = take(key);
    if (s == "none")
      return SeMode::None;
    if (s == "global")
      return SeMode::Global;
    if (s == "causal")
      return SeMode::Causal;
    throw ParseError(line_, key, "expected none, global or causal, got '" + s + "'");
  }

  KernelSpec kernel(const std::string &key) {
    const auto s = take(key);
    const auto x = s.find('x');
    KernelSpec k;
    try {
      std::size_t p1 = 0, p2 = 0;
      if (x == std::string::npos)
        throw std::invalid_argument("no x");
      k.time = std::stoul(s.substr(0, x), &p1);
      k.space = std::stoul(s.substr(x + 1), &p2);
      if (p1 != x || p2 != s.size() - x - 1)
        throw std::invalid_argument("junk");
    } catch (const std::exception &) {
      throw ParseError(line_, key, "expected <time>x<space>, got '" + s + "'");
    }
    return k;
  }

  /// Rejects fields nobody consumed.
  void finish() const {
    for (const auto &[k, v] : values_)
      if (!used_.count(k))
        throw ParseError(line_, k, "unknown field");
  }

private:
  const std::string &take(const std::string &key) {
    const auto it = values_.find(key);
    if (it == values_.end())
      throw ParseError(line_, key, "missing required field");
    used_[key] = true;
    return it->second;
  }

  std::size_t line_;
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> used_;
};

} // namespace detail

/// Parses and validates an architecture description.
inline NetworkSpec parse_architecture(std::string_view text) {
  NetworkSpec spec;
  LayerSpec defaults;
  bool have_name = false, have_video = false, have_stem = false, have_head = false;
  std::optional<BlockSpec> open_block;
  std::size_t open_line = 0;

  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos)
      raw.resize(hash);
    const auto tok = detail::split_ws(raw);
    if (tok.empty())
      continue;
    const auto &directive = tok[0];

    auto once = [&](bool &seen) {
      if (seen)
        throw ParseError(line_no, directive, "directive given twice");
      seen = true;
    };
    auto outside_block = [&] {
      if (open_block)
        throw ParseError(line_no, directive, "not allowed inside a block");
    };

    if (directive == "network") {
      outside_block();
      once(have_name);
      if (tok.size() != 2)
        throw ParseError(line_no, directive, "expected 'network <name>'");
      spec.name = tok[1];
    } else if (directive == "video") {
      outside_block();
      once(have_video);
      detail::Fields f(line_no, tok, 1);
      spec.video = {f.count("frames"), f.count("size"), f.count("stride"), f.count("channels")};
      f.finish();
    } else if (directive == "stem") {
      outside_block();
      once(have_stem);
      detail::Fields f(line_no, tok, 1);
      spec.stem = {f.kernel("kernel"), f.count("width")};
      f.finish();
    } else if (directive == "defaults") {
      detail::Fields f(line_no, tok, 1);
      if (f.has("se"))
        defaults.se = f.se("se");
      if (f.has("causal"))
        defaults.causal = f.flag("causal");
      if (f.has("posenc"))
        defaults.pos_enc = f.flag("posenc");
      f.finish();
    } else if (directive == "block") {
      outside_block();
      if (tok.size() != 1)
        throw ParseError(line_no, directive, "'block' takes no fields");
      open_block.emplace();
      open_line = line_no;
    } else if (directive == "layer") {
      if (!open_block)
        throw ParseError(line_no, directive, "layer outside of a block");
      detail::Fields f(line_no, tok, 1);
      LayerSpec l = defaults;
      l.kernel = f.kernel("kernel");
      l.base = f.count("base");
      l.expand = f.count("expand");
      l.stride = f.has("stride") ? f.count("stride") : 1;
      if (f.has("se"))
        l.se = f.se("se");
      if (f.has("causal"))
        l.causal = f.flag("causal");
      if (f.has("posenc"))
        l.pos_enc = f.flag("posenc");
      f.finish();
      open_block->layers.push_back(l);
    } else if (directive == "end") {
      if (!open_block)
        throw ParseError(line_no, directive, "'end' without 'block'");
      spec.blocks.push_back(std::move(*open_block));
      open_block.reset();
    } else if (directive == "head") {
      outside_block();
      once(have_head);
      detail::Fields f(line_no, tok, 1);
      spec.head = {f.count("conv"), f.count("hidden"), f.count("classes")};
      f.finish();
    } else {
      throw ParseError(line_no, directive, "unknown directive");
    }
  }
  if (open_block)
    throw ParseError(open_line, "block", "block is never closed with 'end'");
  if (!have_name)
    throw ParseError(line_no, "network", "missing required directive");
  if (!have_video)
    throw ParseError(line_no, "video", "missing required directive");
  if (!have_stem)
    throw ParseError(line_no, "stem", "missing required directive");
  if (!have_head)
    throw ParseError(line_no, "head", "missing required directive");
  validate(spec);
  return spec;
}

inline std::string format_architecture(const NetworkSpec &spec) {
  std::ostringstream o;
  auto kernel = [](const KernelSpec &k) { return std::to_string(k.time) + "x" + std::to_string(k.space); };
  o << "network " << spec.name << "\n";
  o << "video frames=" << spec.video.frames << " size=" << spec.video.size << " stride=" << spec.video.tau
    << " channels=" << spec.video.channels << "\n";
  o << "stem kernel=" << kernel(spec.stem.kernel) << " width=" << spec.stem.width << "\n";
  for (const auto &b : spec.blocks) {
    o << "block\n";
    for (const auto &l : b.layers)
      o << "  layer kernel=" << kernel(l.kernel) << " base=" << l.base << " expand=" << l.expand
        << " stride=" << l.stride << " se=" << to_string(l.se) << " causal=" << (l.causal ? "true" : "false")
        << " posenc=" << (l.pos_enc ? "true" : "false") << "\n";
    o << "end\n";
  }
  o << "head conv=" << spec.head.conv_width << " hidden=" << spec.head.hidden_width
    << " classes=" << spec.head.classes << "\n";
  return o.str();
}

inline NetworkSpec load_architecture(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw SpecError("cannot open architecture file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_architecture(ss.str());
}

} // namespace mvnet
