#include <gtest/gtest.h>

#include <numeric>

#include "fixtures.hpp"
#include "mvnet/cost.hpp"
#include "oracles.hpp"

using namespace mvnet;

namespace {

VideoSpec with_frames(VideoSpec v, std::size_t t) {
  v.frames = t;
  return v;
}

// Work that runs once per clip regardless of T: the dense head and global SE excitation.
std::uint64_t per_clip_macs(const NetworkSpec &s) {
  std::uint64_t n = s.head.conv_width * s.head.hidden_width + s.head.hidden_width * s.head.classes;
  for (const auto &b : s.blocks)
    for (const auto &l : b.layers)
      if (l.se == SeMode::Global)
        n += 2 * l.expand * se_width(l.expand);
  return n;
}

} // namespace

TEST(ConvCost, TrivialPointwise) {
  const auto r = conv_cost("x", Dims4{1, 1, 1, 1}, 1, 1, 1, 1, 1);
  EXPECT_EQ(r.macs, 1u);
  EXPECT_EQ(r.params, 1u);
  EXPECT_EQ(r.output, (Dims4{1, 1, 1, 1}));
}

TEST(ConvCost, DepthwiseClosedForm) {
  const auto r = conv_cost("dw", Dims4{4, 4, 4, 8}, 3, 3, 8, 8, 1);
  EXPECT_EQ(r.macs, 4u * 4 * 4 * 8 * 27);
  EXPECT_EQ(r.output, (Dims4{4, 4, 4, 8}));
}

TEST(ConvCost, MatchesInstrumentedNaiveConv) {
  std::mt19937_64 rng(5);
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  for (int i = 0; i < 50; ++i) {
    const std::size_t groups = pick(1, 3), cin = groups * pick(1, 3), cout = groups * pick(1, 3);
    const std::size_t kt = pick(1, 3), ks = pick(1, 5), s = pick(1, 2);
    const Dims4 in{pick(1, 8), pick(1, 8), pick(1, 8), cin};
    const auto row = conv_cost("c", in, kt, ks, cout, groups, s);
    // Temporal extent is preserved by causal padding; spatial uses the balanced rule.
    const auto sp = balanced_padding(static_cast<int>(ks));
    std::uint64_t counted = 0;
    const auto y = oracle::conv3d(oracle::DTensor(fixtures::random_video(in, i)),
                                  fixtures::random_kernel({kt, ks, ks, cin / groups, cout}, groups, i), s, s,
                                  static_cast<long long>(kt - 1), 0, sp.left, sp.right, sp.left, sp.right, {},
                                  &counted);
    EXPECT_EQ(row.macs, counted) << i;
    EXPECT_EQ(row.output, (Dims4{y.t, y.h, y.w, y.c})) << i;
  }
}

TEST(ConvCost, DenseAndNorm) {
  EXPECT_EQ(dense_cost("d", 7, 5).macs, 35u);
  EXPECT_EQ(dense_cost("d", 7, 5, 3).macs, 105u);
  EXPECT_EQ(norm_cost("n", Dims4{2, 3, 3, 4}).macs, 72u);
}

TEST(NetworkCost, ConvWorkIsLinearInFrames) {
  for (const auto &spec : {builtin("A0"), builtin("A2"), make_streaming(builtin("A0"))}) {
    const auto &name = spec.name;
    const auto once = per_clip_macs(spec);
    const auto m10 = network_macs(spec, with_frames(spec.video, 10));
    const auto m20 = network_macs(spec, with_frames(spec.video, 20));
    EXPECT_EQ(m20 - once, 2 * (m10 - once)) << name;
  }
}

TEST(NetworkCost, MonotoneInEveryDimension) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = fixtures::random_causal_net(seed);
    const auto base = network_macs(spec, spec.video);
    EXPECT_GE(network_macs(spec, with_frames(spec.video, spec.video.frames + 1)), base);
    auto v = spec.video;
    v.size += 8;
    EXPECT_GE(network_macs(spec, v), base);

    auto wider = spec;
    wider.blocks.back().layers.back().base += 8;
    EXPECT_GE(network_macs(wider, spec.video), base);
    auto expanded = spec;
    expanded.blocks[0].layers[0].expand += 8;
    EXPECT_GE(network_macs(expanded, spec.video), base);
    auto deeper = spec;
    deeper.blocks.back().layers.push_back(deeper.blocks.back().layers.back());
    deeper.blocks.back().layers.back().stride = 1;
    EXPECT_GE(network_macs(deeper, spec.video), base);
  }
}

TEST(NetworkCost, BuiltinsInBand) {
  const double a0 = network_flops(builtin("A0"));
  const double a2 = network_flops(builtin("A2"));
  EXPECT_GE(a0, 2.03);
  EXPECT_LE(a0, 3.39);
  EXPECT_GE(a2, 7.7);
  EXPECT_LE(a2, 12.9);
  const double stream = network_flops(make_streaming(builtin("A0")));
  EXPECT_GT(stream, a0);
  EXPECT_LE(stream / a0, 1.02);
}

TEST(PeakMemory, StreamingConstantInTotalFrames) {
  const auto spec = make_streaming(builtin("A0"));
  const auto m50 = peak_memory(spec, with_frames(spec.video, 50), EvalMode::streaming(1));
  EXPECT_EQ(peak_memory(spec, with_frames(spec.video, 500), EvalMode::streaming(1)), m50);
  EXPECT_EQ(peak_memory(spec, with_frames(spec.video, 16), EvalMode::streaming(1)), m50);
  const auto s10 = peak_memory(spec, with_frames(spec.video, 10), EvalMode::single());
  const auto s20 = peak_memory(spec, with_frames(spec.video, 20), EvalMode::single());
  EXPECT_EQ(s20, 2 * s10);
}

TEST(PeakMemory, StreamingBoundedByMultiClipPlusState) {
  const auto spec = make_streaming(builtin("A0"));
  for (std::size_t t_clip : {1u, 4u, 8u}) {
    const auto st = peak_memory(spec, spec.video, EvalMode::streaming(t_clip));
    const auto mc = peak_memory(spec, spec.video, EvalMode::multi(t_clip));
    EXPECT_LE(st, mc + stream_state_bytes(spec, spec.video.size));
  }
}

TEST(PeakMemory, StreamingRequiresCausalSpec) {
  EXPECT_THROW(peak_memory(builtin("A0"), builtin("A0").video, EvalMode::streaming(1)), StreamingUnsupported);
  EXPECT_THROW(peak_memory(builtin("A0"), builtin("A0").video, EvalMode::streaming(0)), ContractError);
  EXPECT_THROW(peak_memory(builtin("A0"), builtin("A0").video, EvalMode::multi(4, 0, 4)), ContractError);
}

TEST(PeakMemory, A0SingleClipExceedsStreaming) {
  const auto a0 = builtin("A0");
  const auto single = peak_memory(a0, a0.video, EvalMode::single());
  const auto stream = peak_memory(make_streaming(a0), a0.video, EvalMode::streaming(1));
  EXPECT_GT(single, stream);
}

TEST(StateBytes, MatchesBufferArithmetic) {
  const auto spec = load_architecture(std::string(MVNET_SOURCE_DIR) + "/archs/a0-tiny.arch");
  // S=32. Buffers hold expanded activations at each layer's input resolution:
  // 16x16 after the stem, then 8x8, 4x4, 2x2 after each strided block entry.
  std::uint64_t expect = 64 * 4;         // head CGAP
  expect += 24 * 4;                      // b0.l0 1x5: CGAP only
  expect += 4 * 8 * 8 * 40 * 4 + 40 * 4; // b1.l0 5x3 at 8x8
  expect += 2 * 4 * 4 * 40 * 4 + 40 * 4; // b1.l1 3x3 at 4x4
  expect += 2 * 4 * 4 * 64 * 4;          // b2.l0 3x3 at 4x4, no SE
  expect += 56 * 4;                      // b2.l1 1x5: CGAP only
  EXPECT_EQ(stream_state_bytes(spec, 32), expect);
}

TEST(MultiClip, OverlapCostsMoreThanStreaming) {
  const auto spec = make_streaming(builtin("A0"));
  const auto v = with_frames(spec.video, 48);
  const double stream = mode_flops(spec, v, EvalMode::streaming(8));
  const double no_overlap = mode_flops(spec, v, EvalMode::multi(8, 6, 0));
  const double overlap = mode_flops(spec, v, EvalMode::multi(8, 0, 4));
  EXPECT_GT(overlap, stream);
  EXPECT_GT(overlap, no_overlap);
  EXPECT_EQ(detail::resolve(EvalMode::multi(8, 0, 4), 48).clips, 11u);
  EXPECT_EQ(detail::resolve(EvalMode::multi(8, 0, 0), 48).clips, 6u);
}

TEST(Report, TotalsEqualRowSumsAndDeterministic) {
  const auto spec = make_streaming(builtin("A2"));
  const std::vector<EvalMode> modes{EvalMode::single(), EvalMode::multi(16, 0, 8), EvalMode::streaming(1)};
  const auto r = cost_report(spec, spec.video, modes);
  std::uint64_t macs = 0, params = 0;
  for (const auto &row : r.rows) {
    macs += row.macs;
    params += row.params;
  }
  EXPECT_EQ(r.total_macs, macs);
  EXPECT_EQ(r.total_params, params);
  EXPECT_DOUBLE_EQ(r.gflops_per_video, static_cast<double>(macs) / 1e9);
  ASSERT_EQ(r.modes.size(), 3u);
  EXPECT_EQ(r.modes[0].mode, "single_clip");
  EXPECT_EQ(r.modes[1].mode, "multi_clip(n=6,T_clip=16,overlap=8)");
  EXPECT_EQ(r.modes[2].mode, "streaming(T_clip=1)");
  EXPECT_EQ(cost_report(spec, spec.video, modes), r);
}

TEST(Report, ParamsMatchWeightLayout) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto spec = fixtures::random_causal_net(seed);
    const auto r = cost_report(spec, spec.video, {});
    std::uint64_t weights = 0;
    for (const auto &slot : parameter_layout(spec)) {
      if (slot.name.ends_with(".rezero"))
        continue;
      weights += std::accumulate(slot.dims.begin(), slot.dims.end(), std::uint64_t{1}, std::multiplies<>());
    }
    EXPECT_EQ(r.total_params, weights) << seed;
  }
}
