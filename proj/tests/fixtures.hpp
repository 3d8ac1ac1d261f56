#pragma once

#include <cstdint>
#include <random>

#include "mvnet/mvnet.hpp"

namespace fixtures {

inline mvnet::VideoTensor random_video(const mvnet::Dims4 &d, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  mvnet::VideoTensor v(d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto &x : v.data())
    x = u(rng);
  return v;
}

inline mvnet::WeightTensor random_kernel(std::array<std::size_t, 5> dims, std::size_t groups, std::uint64_t seed) {
  mvnet::WeightTensor k(dims, groups);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto &x : k.data())
    x = u(rng);
  return k;
}

/// Small search space for random causal networks: up to 3 blocks, widths <= 32, S <= 32.
inline mvnet::SearchSpaceSpec small_space(std::uint64_t seed, std::size_t frames = 16) {
  std::mt19937_64 rng(seed ^ 0x5eed);
  mvnet::SearchSpaceSpec s;
  const std::size_t sizes[] = {16, 24, 32};
  s.video = {frames, sizes[rng() % 3], 5, 3};
  s.stem = {{1, 3}, 8};
  const std::size_t nblocks = 1 + rng() % 3;
  s.block_widths.assign({8, 16, 24}); // x1.25 still rounds to <= 32
  s.block_widths.resize(nblocks);
  s.unstrided_block = nblocks > 1 ? nblocks - 1 : 99;
  s.depth_min = 1;
  s.depth_max = 3;
  s.expand_multipliers = {1.5, 2.0, 3.0};
  s.head = {32, 24, 10};
  return s;
}

/// A random streamable network with every temporal layer causal.
inline mvnet::NetworkSpec random_causal_net(std::uint64_t seed, std::size_t frames = 16) {
  auto spec = mvnet::sample_architecture(small_space(seed, frames), seed, true);
  // Alternate PosEnc so both CausalSE variants are exercised.
  if (seed % 2)
    for (auto &b : spec.blocks)
      for (auto &l : b.layers)
        l.pos_enc = false;
  return spec;
}

} // namespace fixtures
