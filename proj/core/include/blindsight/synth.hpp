// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindsight/attention.hpp"
#include "blindsight/capture_io.hpp"
#include "blindsight/flops.hpp"
#include "blindsight/layout.hpp"
#include "blindsight/mask.hpp"

namespace blindsight {

struct SynthHeadParams {
  MaskType pattern = MaskType::kDense;
  SinkSpec sinks = SinkSpec::prefix(0.1);
  double noise_sigma = 0.0;  // std of the additive logit noise
  std::uint64_t seed = 0;
  std::size_t head_dim = 16;
  double logit_gain = 8.0;
};

struct QkvTriple {
  HeadTensor q, k, v;
};

/// Q/K/V whose dense attention follows `pattern`.
///
/// Logits (after the 1/sqrt(d_h) scaling of attention) are shaped in a small
/// subspace: two dimensions give image queries a penalty of
/// logit_gain * (image distance) on keys of earlier images, one dimension
/// either pushes non-sink image keys down by logit_gain (Sink) or lifts sink
/// keys by 3/16 of logit_gain (DocumentSink). Dense heads use isotropic
/// Q/K with logit std logit_gain / 4. The remaining d_h - 3 dimensions carry
/// Gaussian noise whose logit contribution has std noise_sigma. V is standard
/// normal. Deterministic in `seed`.
QkvTriple gen_head(const TokenLayout& layout, const SynthHeadParams& params);

struct LayoutRecipe {
  std::size_t min_images = 3;
  std::size_t max_images = 6;
  std::size_t min_image_len = 32;
  std::size_t max_image_len = 64;
  std::size_t min_text_len = 1;
  std::size_t max_text_len = 8;

  void validate() const;
};

/// Text, then alternating image/text segments. Image lengths and text gaps
/// are uniform in their ranges; equal min/max image length gives the
/// fixed-length images of Gemma-style tokenizers.
TokenLayout random_layout(const LayoutRecipe& recipe, std::mt19937_64& rng);

struct SynthPlan {
  ModelMeta model{"synthetic", 4, 4, 16};
  std::vector<MaskType> patterns;   // layer-major, one per head
  std::vector<NamedLayout> prompts;
  SinkSpec sinks = SinkSpec::prefix(0.1);
  double noise_sigma = 0.8;
  double logit_gain = 8.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Uniformly random pattern per head.
std::vector<MaskType> random_patterns(std::size_t layers, std::size_t heads, std::uint64_t seed);

/// Plan with random patterns and `prompt_count` layouts drawn from `recipe`.
SynthPlan make_plan(const ModelMeta& model, std::size_t prompt_count, const LayoutRecipe& recipe,
                    const SinkSpec& sinks, double noise_sigma, double logit_gain, std::uint64_t seed);

/// Seed of one (prompt, layer, head) cell, derived from the plan seed.
std::uint64_t head_seed(std::uint64_t plan_seed, std::size_t prompt, std::size_t layer, std::size_t head);

PromptCapture gen_prompt_capture(const SynthPlan& plan, std::size_t prompt_index);

/// Writes manifest + tensors and the `ground_truth.json` sidecar. A non-null
/// `config` is stored in the sidecar under "config".
void gen_capture(const SynthPlan& plan, const std::filesystem::path& dir, bool force = false,
                 const nlohmann::ordered_json& config = nullptr);

nlohmann::ordered_json ground_truth_to_json(const SynthPlan& plan,
                                            const nlohmann::ordered_json& config = nullptr);
/// Layer-major planted map from a ground_truth.json document.
std::vector<MaskType> ground_truth_from_json(const nlohmann::json& j);

}  // namespace blindsight
