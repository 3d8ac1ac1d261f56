#pragma once

// Named parameter storage, the parameter layout a NetworkSpec demands,
// deterministic initialisation, and the MVNW weights file:
//
//   "MVNW" | u8 version=1 | u32 LE count |
//   count x ( u16 LE name length | name | u8 rank | rank x u32 LE dims | f32 LE payload )

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvnet/arch.hpp"
#include "mvnet/causal.hpp"
#include "mvnet/error.hpp"
#include "mvnet/tensor.hpp"
#include "mvnet/tensor_io.hpp"

namespace mvnet {

enum class ParamKind { ConvKernel, DenseMatrix, Bias, NormScale, NormBias, ReZero };

struct ParamSlot {
  std::string name;
  std::vector<std::uint32_t> dims;
  ParamKind kind;
  std::size_t fan_in = 1;
};

/// Every parameter `spec` needs, in a fixed order.
inline std::vector<ParamSlot> parameter_layout(const NetworkSpec &spec) {
  std::vector<ParamSlot> out;
  auto u = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  auto conv = [&](const std::string &name, std::size_t kt, std::size_t ks, std::size_t cin_g, std::size_t cout) {
    out.push_back({name, {u(kt), u(ks), u(ks), u(cin_g), u(cout)}, ParamKind::ConvKernel, kt * ks * ks * cin_g});
  };
  auto norm = [&](const std::string &prefix, std::size_t c) {
    out.push_back({prefix + ".scale", {u(c)}, ParamKind::NormScale});
    out.push_back({prefix + ".bias", {u(c)}, ParamKind::NormBias});
  };
  auto dense = [&](const std::string &prefix, std::size_t in, std::size_t outc, const char *w, const char *b) {
    out.push_back({prefix + w, {u(in), u(outc)}, ParamKind::DenseMatrix, in});
    out.push_back({prefix + b, {u(outc)}, ParamKind::Bias});
  };

  conv("stem.conv", 1, spec.stem.kernel.space, spec.video.channels, spec.stem.width);
  norm("stem.norm", spec.stem.width);
  std::size_t cin = spec.stem.width;
  for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi) {
    for (std::size_t li = 0; li < spec.blocks[bi].layers.size(); ++li) {
      const auto &l = spec.blocks[bi].layers[li];
      const auto p = layer_path(bi, li);
      conv(p + ".expand.conv", 1, 1, cin, l.expand);
      norm(p + ".expand.norm", l.expand);
      conv(p + ".dw.conv", l.kernel.time, l.kernel.space, 1, l.expand);
      norm(p + ".dw.norm", l.expand);
      if (l.se != SeMode::None) {
        const auto hidden = se_width(l.expand);
        dense(p + ".se", l.expand, hidden, ".reduce.w", ".reduce.b");
        dense(p + ".se", hidden, l.expand, ".expand.w", ".expand.b");
      }
      conv(p + ".project.conv", 1, 1, l.expand, l.base);
      norm(p + ".project.norm", l.base);
      if (li == 0) {
        conv(p + ".skip.conv", 1, 1, cin, l.base);
        norm(p + ".skip.norm", l.base);
      }
      if (li == 0 || (cin == l.base && l.stride == 1))
        out.push_back({p + ".rezero", {1}, ParamKind::ReZero});
      cin = l.base;
    }
  }
  conv("head.conv", 1, 1, cin, spec.head.conv_width);
  norm("head.norm", spec.head.conv_width);
  dense("head", spec.head.conv_width, spec.head.hidden_width, ".hidden.w", ".hidden.b");
  dense("head", spec.head.hidden_width, spec.head.classes, ".classifier.w", ".classifier.b");
  return out;
}

/// Ordered name -> tensor map. Insertion order is preserved so files round-trip byte for byte.
class Weights {
public:
  void add(std::string name, RawTensor tensor) {
    if (index_.count(name))
      throw SpecError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(tensor));
  }

  bool contains(const std::string &name) const { return index_.count(name) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, RawTensor>> &entries() const noexcept { return entries_; }

  const RawTensor &get(const std::string &name) const {
    const auto it = index_.find(name);
    if (it == index_.end())
      throw SpecError("missing parameter '" + name + "'");
    return entries_[it->second].second;
  }

  RawTensor &get(const std::string &name) {
    return const_cast<RawTensor &>(static_cast<const Weights &>(*this).get(name));
  }

  std::span<const float> vec(const std::string &name) const { return get(name).data; }

  float scalar(const std::string &name) const {
    const auto &t = get(name);
    if (t.data.size() != 1)
      throw ShapeError("parameter '" + name + "' is not a scalar");
    return t.data[0];
  }

  WeightTensor conv(const std::string &name, std::size_t groups = 1) const {
    const auto &t = get(name);
    if (t.dims.size() != 5)
      throw ShapeError("parameter '" + name + "' is not a rank-5 kernel");
    return WeightTensor({t.dims[0], t.dims[1], t.dims[2], t.dims[3], t.dims[4]}, groups, t.data);
  }

  SqueezeExciteWeights squeeze_excite(const std::string &prefix) const {
    const auto &r = get(prefix + ".reduce.w");
    if (r.dims.size() != 2)
      throw ShapeError("parameter '" + prefix + ".reduce.w' is not a matrix");
    SqueezeExciteWeights w{r.dims[0],
                           r.dims[1],
                           r.data,
                           get(prefix + ".reduce.b").data,
                           get(prefix + ".expand.w").data,
                           get(prefix + ".expand.b").data};
    w.validate();
    return w;
  }

  bool operator==(const Weights &o) const { return entries_ == o.entries_; }

private:
  std::vector<std::pair<std::string, RawTensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Checks that `weights` holds exactly the parameters `spec` demands, with matching shapes.
inline void check_weights(const NetworkSpec &spec, const Weights &weights) {
  const auto layout = parameter_layout(spec);
  for (const auto &slot : layout) {
    if (!weights.contains(slot.name))
      throw SpecError("weights do not match " + spec.name + ": missing '" + slot.name + "'");
    if (weights.get(slot.name).dims != slot.dims)
      throw SpecError("weights do not match " + spec.name + ": '" + slot.name + "' has wrong shape");
  }
  if (weights.size() != layout.size())
    throw SpecError("weights do not match " + spec.name + ": " + std::to_string(weights.size() - layout.size()) +
                    " unexpected parameters");
}

namespace detail {

inline RawTensor filled(const std::vector<std::uint32_t> &dims, float v) {
  std::size_t n = 1;
  for (auto d : dims)
    n *= d;
  return {dims, std::vector<float>(n, v)};
}

} // namespace detail

/// Fresh weights: kernels uniform in +-sqrt(6 / fan_in), biases 0, norms identity, ReZero 0.
inline Weights init_random_weights(const NetworkSpec &spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Weights w;
  for (const auto &slot : parameter_layout(spec)) {
    switch (slot.kind) {
    case ParamKind::ConvKernel:
    case ParamKind::DenseMatrix: {
      const float limit = static_cast<float>(std::sqrt(6.0 / static_cast<double>(slot.fan_in)));
      std::uniform_real_distribution<float> dist(-limit, limit);
      RawTensor t = detail::filled(slot.dims, 0.0f);
      for (auto &v : t.data)
        v = dist(rng);
      w.add(slot.name, std::move(t));
      break;
    }
    case ParamKind::NormScale:
      w.add(slot.name, detail::filled(slot.dims, 1.0f));
      break;
    case ParamKind::Bias:
    case ParamKind::NormBias:
    case ParamKind::ReZero:
      w.add(slot.name, detail::filled(slot.dims, 0.0f));
      break;
    }
  }
  return w;
}

/// Fills norms, biases and ReZero scalars with random non-trivial values as
/// well, so that every branch of the network contributes to the output.
inline Weights init_exercised_weights(const NetworkSpec &spec, std::uint64_t seed) {
  Weights w = init_random_weights(spec, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<float> scale(0.5f, 1.0f);
  std::uniform_real_distribution<float> bias(-0.2f, 0.2f);
  std::uniform_real_distribution<float> rezero(0.25f, 1.0f);
  for (const auto &slot : parameter_layout(spec)) {
    auto &t = w.get(slot.name);
    switch (slot.kind) {
    case ParamKind::NormScale:
      for (auto &v : t.data)
        v = scale(rng);
      break;
    case ParamKind::Bias:
    case ParamKind::NormBias:
      for (auto &v : t.data)
        v = bias(rng);
      break;
    case ParamKind::ReZero:
      for (auto &v : t.data)
        v = rezero(rng);
      break;
    default:
      break;
    }
  }
  return w;
}

inline constexpr std::uint8_t kWeightsFormatVersion = 1;

inline Bytes encode_weights(const Weights &w) {
  Bytes out{'M', 'V', 'N', 'W'};
  io::put_u8(out, kWeightsFormatVersion);
  io::put_u32(out, static_cast<std::uint32_t>(w.size()));
  for (const auto &[name, t] : w.entries()) {
    if (name.size() > 0xffff)
      throw ContractError("parameter name too long: " + name.substr(0, 32) + "...");
    io::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    io::put_tensor_body(out, t);
  }
  return out;
}

inline Weights decode_weights(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.magic("MVNW");
  const std::size_t vat = r.offset();
  if (const auto v = r.u8("version"); v != kWeightsFormatVersion)
    throw FormatError(FormatError::Kind::BadVersion, vat, "version " + std::to_string(v));
  const auto count = r.u32("tensor count");
  Weights w;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const auto len = r.u16("name length");
    auto name = r.str(len, "name");
    const auto rank = r.u8("rank");
    auto t = r.tensor_body(rank);
    if (w.contains(name))
      throw FormatError(FormatError::Kind::Duplicate, at, "tensor '" + name + "' appears twice");
    w.add(std::move(name), std::move(t));
  }
  if (r.remaining() != 0)
    throw FormatError(FormatError::Kind::Trailing, r.offset(), std::to_string(r.remaining()) + " unread bytes");
  return w;
}

inline void save_weights(const std::string &path, const Weights &w) { io::write_file(path, encode_weights(w)); }

inline Weights load_weights(const std::string &path) { return decode_weights(io::read_file(path)); }

} // namespace mvnet
