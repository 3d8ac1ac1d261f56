#include <gtest/gtest.h>

#include <numeric>

#include "fixtures.hpp"
#include "mvnet/cost.hpp"
#include "mvnet/network.hpp"
#include "oracles.hpp"

using namespace mvnet;

namespace {

double max_diff(const std::vector<float> &a, const std::vector<double> &b) {
  EXPECT_EQ(a.size(), b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

VideoTensor video_for(const NetworkSpec &spec, std::uint64_t seed, std::size_t frames = 0) {
  return fixtures::random_video({frames ? frames : spec.video.frames, spec.video.size, spec.video.size, 3}, seed);
}

} // namespace

TEST(Forward, MatchesDoublePrecisionReference) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto spec = fixtures::random_causal_net(seed, 6);
    const auto w = init_exercised_weights(spec, seed + 1);
    const auto video = video_for(spec, seed + 2);
    const auto got = forward_offline(spec, w, video);
    const auto ref = oracle::forward(spec, w, video);
    ASSERT_EQ(got.frame_logits.size(), 6u);
    for (std::size_t t = 0; t < 6; ++t)
      EXPECT_LE(max_diff(got.frame_logits[t], ref.frame_logits[t]), 1e-4) << "seed " << seed << " t " << t;
    EXPECT_LE(max_diff(got.clip_logits, ref.clip_logits), 1e-4) << "seed " << seed;
  }
}

TEST(Forward, NonCausalNetworkMatchesReference) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto space = fixtures::small_space(seed, 5);
    const auto spec = sample_architecture(space, seed, false);
    const auto w = init_exercised_weights(spec, seed);
    const auto video = video_for(spec, seed + 9);
    const auto got = forward_offline(spec, w, video);
    const auto ref = oracle::forward(spec, w, video);
    EXPECT_LE(max_diff(got.clip_logits, ref.clip_logits), 1e-4);
  }
}

TEST(Forward, InstrumentedMacCountEqualsCostModel) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const bool causal = seed % 3 != 0;
    const auto spec = sample_architecture(fixtures::small_space(seed, 4), seed, causal);
    const auto w = init_random_weights(spec, seed);
    const auto ref = oracle::forward(spec, w, video_for(spec, seed));
    EXPECT_EQ(ref.macs, network_macs(spec, spec.video)) << format_architecture(spec);
  }
}

TEST(Forward, ZeroInputIsDeterministicAndFinite) {
  const auto spec = fixtures::random_causal_net(11, 4);
  const auto w = init_exercised_weights(spec, 3);
  const VideoTensor zeros(Dims4{4, spec.video.size, spec.video.size, 3}, 0.0f);
  const auto a = forward_offline(spec, w, zeros), b = forward_offline(spec, w, zeros);
  EXPECT_EQ(a.clip_logits, b.clip_logits);
  EXPECT_EQ(a.frame_logits, b.frame_logits);
  EXPECT_TRUE(all_finite(a.clip_logits));
}

TEST(Forward, OneLogitVectorPerFrame) {
  const auto spec = fixtures::random_causal_net(12, 7);
  const auto w = init_random_weights(spec, 1);
  for (std::size_t t : {1u, 3u, 7u}) {
    const auto r = forward_offline(spec, w, video_for(spec, t, t));
    EXPECT_EQ(r.frame_logits.size(), t);
    for (const auto &l : r.frame_logits)
      EXPECT_EQ(l.size(), spec.head.classes);
  }
  EXPECT_THROW(forward_offline(spec, w, VideoTensor(Dims4{0, spec.video.size, spec.video.size, 3})), ContractError);
  EXPECT_THROW(forward_offline(spec, w, VideoTensor(Dims4{2, spec.video.size + 2, spec.video.size, 3})), ShapeError);
}

TEST(Forward, ZeroRezeroReducesLayerToShortcut) {
  const auto spec = fixtures::random_causal_net(13, 3);
  const auto w = init_random_weights(spec, 4);
  const auto net = CompiledNetwork::build(spec, w);
  auto x = apply_stem(net, video_for(spec, 5, 3));
  for (const auto &layer : net.layers) {
    ASSERT_TRUE(layer.rezero.has_value() || !layer.block_entry);
    const auto y = apply_layer(layer, x);
    if (layer.block_entry) {
      EXPECT_EQ(y, apply_skip(layer, x)) << layer.path;
    } else if (layer.residual()) {
      EXPECT_EQ(y, x) << layer.path;
    }
    x = y;
  }
}

TEST(Forward, ClipLogitsComeFromMeanHeadFeature) {
  const auto spec = fixtures::random_causal_net(14, 5);
  const auto w = init_exercised_weights(spec, 6);
  const auto net = CompiledNetwork::build(spec, w);
  const auto video = video_for(spec, 7);
  auto x = apply_stem(net, video);
  for (const auto &l : net.layers)
    x = apply_layer(l, x);
  const auto feats = head_features(net, x);
  const auto pooled = global_avg_pool(feats);
  const auto expect = classify(net, pooled);
  const auto got = forward_offline(net, video).clip_logits;
  for (std::size_t k = 0; k < got.size(); ++k)
    EXPECT_NEAR(got[k], expect[k], 1e-5);
}

TEST(Forward, ClassifierPermutationPermutesLogits) {
  const auto spec = fixtures::random_causal_net(15, 3);
  auto w = init_exercised_weights(spec, 8);
  const auto video = video_for(spec, 9);
  const auto before = forward_offline(spec, w, video).clip_logits;
  auto &cw = w.get("head.classifier.w").data;
  auto &cb = w.get("head.classifier.b").data;
  const std::size_t k = spec.head.classes, hid = spec.head.hidden_width;
  // Swap output columns 0 and k-1.
  for (std::size_t i = 0; i < hid; ++i)
    std::swap(cw[i * k], cw[i * k + k - 1]);
  std::swap(cb[0], cb[k - 1]);
  const auto after = forward_offline(spec, w, video).clip_logits;
  EXPECT_EQ(after[0], before[k - 1]);
  EXPECT_EQ(after[k - 1], before[0]);
  for (std::size_t i = 1; i + 1 < k; ++i)
    EXPECT_EQ(after[i], before[i]);
}

TEST(Forward, FinalResolutionFollowsDownsampling) {
  const auto a2 = builtin("A2");
  EXPECT_EQ(final_resolution(a2), 224u / 32u);
  const auto rows = network_rows(a2, 1, 224);
  const auto head = std::find_if(rows.begin(), rows.end(), [](const CostRow &r) { return r.name == "head.conv"; });
  ASSERT_NE(head, rows.end());
  EXPECT_EQ(head->output.h, 7u);
  EXPECT_EQ(head->output.w, 7u);
}

TEST(Forward, CausalOutputsIgnoreFutureFrames) {
  const auto spec = fixtures::random_causal_net(16, 6);
  const auto w = init_exercised_weights(spec, 10);
  auto video = video_for(spec, 11);
  const auto base = forward_offline(spec, w, video);
  for (std::size_t i = 0; i < video.frame(4).size(); ++i)
    video.frame(4)[i] += 1.0f;
  const auto pert = forward_offline(spec, w, video);
  for (std::size_t t = 0; t < 4; ++t)
    EXPECT_EQ(pert.frame_logits[t], base.frame_logits[t]);
  EXPECT_NE(pert.frame_logits[4], base.frame_logits[4]);
}
