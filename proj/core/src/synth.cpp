// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/synth.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "blindsight/error.hpp"

namespace blindsight {

namespace {

constexpr std::size_t kStructuredDims = 3;
constexpr double kSinkBoostFraction = 3.0 / 16.0;
constexpr double kDenseLogitStdFraction = 0.25;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct TokenRoles {
  std::vector<long> image;  // image ordinal, -1 for text
  std::vector<bool> sink;
};

TokenRoles token_roles(const TokenLayout& layout, const SinkSpec& sinks) {
  TokenRoles roles{std::vector<long>(layout.seq_len(), -1), std::vector<bool>(layout.seq_len(), false)};
  long ordinal = 0;
  for (const auto& seg : layout.segments()) {
    if (!seg.is_image()) continue;
    for (std::size_t t = seg.start; t < seg.end; ++t) roles.image[t] = ordinal;
    for (std::size_t t : sink_region(seg, sinks).tokens) roles.sink[t] = true;
    ++ordinal;
  }
  return roles;
}

}  // namespace

QkvTriple gen_head(const TokenLayout& layout, const SynthHeadParams& p) {
  if (p.head_dim < 8) throw Error(ErrorCode::kInvalidArgument, "synthetic heads need head_dim >= 8");
  if (!(p.logit_gain >= 0.0) || !(p.noise_sigma >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "logit_gain and noise_sigma must be non-negative");
  }
  const std::size_t s = layout.seq_len();
  const std::size_t d = p.head_dim;
  const auto roles = token_roles(layout, p.sinks);
  QkvTriple out{HeadTensor(s, d), HeadTensor(s, d), HeadTensor(s, d)};
  auto& q = out.q;
  auto& k = out.k;

  const double root_gain = std::sqrt(p.logit_gain);
  switch (p.pattern) {
    case MaskType::kDense:
      break;
    case MaskType::kDocument:
    case MaskType::kDocumentSink: {
      // q = sqrt(g) [1, -u_q], k = sqrt(g) [u_k, 1] gives g (u_k - u_q):
      // zero inside an image, -g per image of distance for earlier images.
      const bool spare_sinks = p.pattern == MaskType::kDocumentSink;
      for (std::size_t t = 0; t < s; ++t) {
        if (roles.image[t] < 0) continue;
        const auto u = static_cast<double>(roles.image[t]);
        q.at(t, 0) = static_cast<float>(root_gain);
        q.at(t, 1) = static_cast<float>(-u * root_gain);
        if (spare_sinks && roles.sink[t]) continue;
        k.at(t, 0) = static_cast<float>(u * root_gain);
        k.at(t, 1) = static_cast<float>(root_gain);
      }
      if (spare_sinks) {
        const double root_boost = std::sqrt(kSinkBoostFraction * p.logit_gain);
        for (std::size_t t = 0; t < s; ++t) {
          q.at(t, 2) = static_cast<float>(root_boost);
          if (roles.sink[t]) k.at(t, 2) = static_cast<float>(root_boost);
        }
      }
      break;
    }
    case MaskType::kSink:
      for (std::size_t t = 0; t < s; ++t) {
        q.at(t, 2) = static_cast<float>(root_gain);
        if (roles.image[t] >= 0 && !roles.sink[t]) k.at(t, 2) = static_cast<float>(-root_gain);
      }
      break;
  }

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (p.pattern == MaskType::kDense) {
    // Sum of d products of N(0, c^2) pairs has std sqrt(d) c^2.
    const double c = std::sqrt(kDenseLogitStdFraction * p.logit_gain / std::sqrt(static_cast<double>(d)));
    for (auto& x : q.data) x = static_cast<float>(normal(rng) * c);
    for (auto& x : k.data) x = static_cast<float>(normal(rng) * c);
  }
  if (p.noise_sigma > 0.0) {
    const std::size_t m = d - kStructuredDims;
    const double e = std::sqrt(p.noise_sigma / std::sqrt(static_cast<double>(m)));
    for (HeadTensor* t : {&q, &k}) {
      for (std::size_t r = 0; r < s; ++r) {
        for (std::size_t c = kStructuredDims; c < d; ++c) t->at(r, c) += static_cast<float>(normal(rng) * e);
      }
    }
  }
  for (auto& x : out.v.data) x = static_cast<float>(normal(rng));

  // Cancel the 1/sqrt(d_h) applied by attention.
  const double root_d = std::sqrt(static_cast<double>(d));
  for (auto& x : q.data) x = static_cast<float>(x * root_d);
  return out;
}

void LayoutRecipe::validate() const {
  if (min_images > max_images || min_image_len == 0 || min_image_len > max_image_len ||
      min_text_len > max_text_len || (min_images == 0 && max_text_len == 0)) {
    throw Error(ErrorCode::kInvalidArgument, "inconsistent layout recipe");
  }
}

TokenLayout random_layout(const LayoutRecipe& recipe, std::mt19937_64& rng) {
  recipe.validate();
  auto uniform = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::vector<Segment> segs;
  std::size_t pos = 0;
  auto add = [&](SegmentKind kind, std::size_t len) {
    if (len == 0) return;
    segs.push_back({kind, pos, pos + len});
    pos += len;
  };
  const std::size_t n = uniform(recipe.min_images, recipe.max_images);
  add(SegmentKind::kText, uniform(recipe.min_text_len, recipe.max_text_len));
  for (std::size_t i = 0; i < n; ++i) {
    add(SegmentKind::kImage, uniform(recipe.min_image_len, recipe.max_image_len));
    add(SegmentKind::kText, uniform(recipe.min_text_len, recipe.max_text_len));
  }
  if (pos == 0) add(SegmentKind::kText, 1);
  return TokenLayout::from_segments(pos, std::move(segs));
}

void SynthPlan::validate() const {
  if (model.layers == 0 || model.heads == 0) throw Error(ErrorCode::kInvalidArgument, "plan needs layers and heads");
  if (model.head_dim < 8) throw Error(ErrorCode::kInvalidArgument, "synthetic heads need head_dim >= 8");
  if (patterns.size() != model.layers * model.heads) {
    throw Error(ErrorCode::kInvalidArgument, "plan patterns must cover every head");
  }
  if (!(noise_sigma >= 0.0) || !(logit_gain > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_sigma must be >= 0 and logit_gain > 0");
  }
  for (const auto& p : prompts) {
    if (!is_valid_prompt_id(p.id)) throw Error(ErrorCode::kInvalidArgument, "invalid prompt id '" + p.id + "'");
  }
}

std::vector<MaskType> random_patterns(std::size_t layers, std::size_t heads, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x5a5a5a5aULL));
  std::uniform_int_distribution<std::size_t> pick(0, kAllMaskTypes.size() - 1);
  std::vector<MaskType> out(layers * heads);
  for (auto& t : out) t = kAllMaskTypes[pick(rng)];
  return out;
}

SynthPlan make_plan(const ModelMeta& model, std::size_t prompt_count, const LayoutRecipe& recipe,
                    const SinkSpec& sinks, double noise_sigma, double logit_gain, std::uint64_t seed) {
  SynthPlan plan;
  plan.model = model;
  plan.patterns = random_patterns(model.layers, model.heads, seed);
  plan.sinks = sinks;
  plan.noise_sigma = noise_sigma;
  plan.logit_gain = logit_gain;
  plan.seed = seed;
  std::mt19937_64 rng(splitmix64(seed));
  for (std::size_t i = 0; i < prompt_count; ++i) {
    plan.prompts.push_back({"p" + std::to_string(i), random_layout(recipe, rng)});
  }
  plan.validate();
  return plan;
}

std::uint64_t head_seed(std::uint64_t plan_seed, std::size_t prompt, std::size_t layer, std::size_t head) {
  std::uint64_t h = splitmix64(plan_seed);
  h = splitmix64(h ^ prompt);
  h = splitmix64(h ^ layer);
  return splitmix64(h ^ head);
}

PromptCapture gen_prompt_capture(const SynthPlan& plan, std::size_t prompt_index) {
  const auto& prompt = plan.prompts.at(prompt_index);
  auto capture = make_capture(prompt.id, prompt.layout, plan.model);
  for (std::size_t l = 0; l < plan.model.layers; ++l) {
    for (std::size_t h = 0; h < plan.model.heads; ++h) {
      SynthHeadParams params;
      params.pattern = plan.patterns[l * plan.model.heads + h];
      params.sinks = plan.sinks;
      params.noise_sigma = plan.noise_sigma;
      params.seed = head_seed(plan.seed, prompt_index, l, h);
      params.head_dim = plan.model.head_dim;
      params.logit_gain = plan.logit_gain;
      const auto qkv = gen_head(prompt.layout, params);
      std::copy(qkv.q.data.begin(), qkv.q.data.end(), capture.head_data(TensorRole::kQuery, l, h).begin());
      std::copy(qkv.k.data.begin(), qkv.k.data.end(), capture.head_data(TensorRole::kKey, l, h).begin());
      std::copy(qkv.v.data.begin(), qkv.v.data.end(), capture.head_data(TensorRole::kValue, l, h).begin());
    }
  }
  return capture;
}

nlohmann::ordered_json ground_truth_to_json(const SynthPlan& plan, const nlohmann::ordered_json& config) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < plan.model.layers; ++l) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t h = 0; h < plan.model.heads; ++h) row.push_back(to_string(plan.patterns[l * plan.model.heads + h]));
    rows.push_back(std::move(row));
  }
  nlohmann::ordered_json out = {{"layers", plan.model.layers},
                                {"heads", plan.model.heads},
                                {"seed", plan.seed},
                                {"noise_sigma", plan.noise_sigma},
                                {"logit_gain", plan.logit_gain},
                                {"sink_spec", sink_spec_to_json(plan.sinks)}};
  if (!config.is_null()) out["config"] = config;
  out["map"] = std::move(rows);
  return out;
}

std::vector<MaskType> ground_truth_from_json(const nlohmann::json& j) {
  try {
    const auto layers = j.at("layers").get<std::size_t>();
    const auto heads = j.at("heads").get<std::size_t>();
    std::vector<MaskType> out;
    const auto& rows = j.at("map");
    if (rows.size() != layers) throw Error(ErrorCode::kShapeMismatch, "ground truth layer count mismatch");
    for (const auto& row : rows) {
      if (row.size() != heads) throw Error(ErrorCode::kShapeMismatch, "ground truth head count mismatch");
      for (const auto& cell : row) out.push_back(mask_type_from_string(cell.get<std::string>()));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed ground truth: ") + e.what());
  }
}

void gen_capture(const SynthPlan& plan, const std::filesystem::path& dir, bool force,
                 const nlohmann::ordered_json& config) {
  plan.validate();
  CaptureWriter writer(dir, plan.model, force);
  for (std::size_t i = 0; i < plan.prompts.size(); ++i) writer.add(gen_prompt_capture(plan, i));
  writer.finish();
  const auto path = dir / "ground_truth.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << ground_truth_to_json(plan, config).dump(2) << "\n";
}

}  // namespace blindsight
