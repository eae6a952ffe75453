// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "blindsight/aggregator.hpp"
#include "blindsight/characterizer.hpp"
#include "blindsight/error.hpp"
#include "generators.hpp"

namespace blindsight {
namespace {

TokenLayout sample_layout(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_layout(LayoutRecipe{}, rng);
}

TEST(GenHead, ZeroGainDenseIsUniform) {
  const auto layout = sample_layout(1);
  SynthHeadParams p;
  p.pattern = MaskType::kDense;
  p.logit_gain = 0.0;
  const auto t = gen_head(layout, p);
  const auto probs = attention_probabilities(t.q.view(), t.k.view(),
                                             build_mask(layout, MaskType::kDense, p.sinks, BaseVisibility::kCausal));
  const std::size_t s = layout.seq_len();
  for (std::size_t r = 0; r < s; ++r) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t c = 0; c <= r; ++c) {
      lo = std::min(lo, probs[r * s + c]);
      hi = std::max(hi, probs[r * s + c]);
    }
    EXPECT_LE(hi / lo, 2.0);
  }
}

TEST(GenHead, PlantedDocumentIsRecovered) {
  const auto layout = sample_layout(2);
  SynthHeadParams p;
  p.pattern = MaskType::kDocument;
  p.noise_sigma = 0.1 * p.logit_gain;
  p.seed = 17;
  const auto t = gen_head(layout, p);
  EXPECT_EQ(characterize_head(t.q.view(), t.k.view(), t.v.view(), layout, {}).chosen, MaskType::kDocument);
}

TEST(GenHead, SeedDeterminism) {
  const auto layout = sample_layout(3);
  SynthHeadParams p;
  p.pattern = MaskType::kDocumentSink;
  p.noise_sigma = 0.8;
  p.seed = 99;
  const auto a = gen_head(layout, p);
  const auto b = gen_head(layout, p);
  EXPECT_EQ(a.q.data, b.q.data);
  EXPECT_EQ(a.k.data, b.k.data);
  EXPECT_EQ(a.v.data, b.v.data);
  p.seed = 100;
  EXPECT_NE(gen_head(layout, p).v.data, a.v.data);
}

TEST(GenHead, RejectsSmallHeads) {
  SynthHeadParams p;
  p.head_dim = 7;
  EXPECT_THROW(gen_head(sample_layout(4), p), Error);
}

TEST(RandomLayout, FollowsRecipe) {
  LayoutRecipe r;
  r.min_images = 2;
  r.max_images = 2;
  r.min_image_len = 16;
  r.max_image_len = 16;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto layout = random_layout(r, rng);
    ASSERT_EQ(layout.image_count(), 2u);
    for (const auto& img : layout.images()) EXPECT_EQ(img.length(), 16u);
  }
  r.min_image_len = 0;
  EXPECT_THROW(r.validate(), Error);
}

TEST(GenCapture, WritesValidCaptureAndSidecar) {
  testing::TempDir dir("synth");
  const auto plan = make_plan({"s", 4, 4, 16}, 3, {}, SinkSpec::prefix(0.1), 0.8, 8.0, 11);
  gen_capture(plan, dir.path());
  const auto caps = load_capture(dir.path());
  ASSERT_EQ(caps.size(), 3u);
  std::ifstream in(dir / "ground_truth.json");
  const auto truth = ground_truth_from_json(nlohmann::json::parse(in));
  EXPECT_EQ(truth.size(), 16u);
  EXPECT_EQ(truth, plan.patterns);
  const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  EXPECT_FALSE(manifest.contains("map"));
  EXPECT_THROW(gen_capture(plan, dir.path()), Error);
  EXPECT_NO_THROW(gen_capture(plan, dir.path(), true));
}

TEST(GenCapture, AllDensePlanAggregatesToDense) {
  auto plan = make_plan({"s", 2, 3, 16}, 4, {}, SinkSpec::prefix(0.1), 0.8, 8.0, 12);
  std::fill(plan.patterns.begin(), plan.patterns.end(), MaskType::kDense);
  std::vector<PromptVerdicts> verdicts;
  for (std::size_t i = 0; i < plan.prompts.size(); ++i) {
    verdicts.push_back(characterize_prompt(gen_prompt_capture(plan, i), plan.model, {}, 1));
  }
  const auto map = build_headmap(accumulate(verdicts), {}, plan.model, CharacterizerConfig{});
  for (auto t : map.map) EXPECT_EQ(t, MaskType::kDense);
}

TEST(HeadSeed, DistinctCells) {
  std::set<std::uint64_t> seen;
  for (std::size_t p = 0; p < 8; ++p) {
    for (std::size_t l = 0; l < 8; ++l) {
      for (std::size_t h = 0; h < 8; ++h) EXPECT_TRUE(seen.insert(head_seed(1, p, l, h)).second);
    }
  }
}

// Properties.

double recovery(MaskType pattern, double noise, int heads, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int hits = 0;
  for (int i = 0; i < heads; ++i) {
    const auto layout = random_layout(LayoutRecipe{}, rng);
    SynthHeadParams p;
    p.pattern = pattern;
    p.noise_sigma = noise;
    p.seed = rng();
    const auto t = gen_head(layout, p);
    hits += characterize_head(t.q.view(), t.k.view(), t.v.view(), layout, {}).chosen == pattern ? 1 : 0;
  }
  return static_cast<double>(hits) / heads;
}

TEST(SynthProperty, RecoveryAtLowNoise) {
  for (auto pattern : kAllMaskTypes) {
    const double rate = recovery(pattern, 0.8, 100, 1000 + index_of(pattern));
    EXPECT_GE(rate, 0.95) << to_string(pattern);
  }
}

TEST(SynthProperty, NoiseDegradesRecovery) {
  double prev = 2.0;
  for (double noise : {0.8, 8.0, 32.0}) {
    double mean = 0.0;
    for (auto pattern : kSparseMaskTypes) mean += recovery(pattern, noise, 20, 2000 + index_of(pattern)) / 3.0;
    EXPECT_LE(mean, prev) << "noise " << noise;
    prev = mean;
  }
  EXPECT_LT(prev, 0.5);
}

}  // namespace
}  // namespace blindsight
