// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindsight/attention.hpp"
#include "blindsight/capture_io.hpp"
#include "blindsight/layout.hpp"
#include "blindsight/mask.hpp"

namespace blindsight {

enum class OrderPolicy {
  /// Sink, Document, DocumentSink.
  kPaperFixed,
  /// Sink and Document by decreasing exact FLOPs savings for the prompt
  /// (ties keep the fixed order), DocumentSink last.
  kFlopsAscending,
};

std::string_view to_string(OrderPolicy policy);
OrderPolicy order_policy_from_string(std::string_view name);

struct CharacterizerConfig {
  double alpha = 0.1;
  OrderPolicy order = OrderPolicy::kPaperFixed;
  SinkSpec sinks = SinkSpec::prefix(0.1);
  BaseVisibility base = BaseVisibility::kCausal;
  /// Keep evaluating candidates after the first one qualifies.
  bool full_diagnostics = false;

  void validate() const;
};

nlohmann::ordered_json config_to_json(const CharacterizerConfig& cfg);
CharacterizerConfig characterizer_config_from_json(const nlohmann::json& j);

using OptionalMaskValues = std::array<std::optional<double>, 4>;

struct HeadVerdict {
  std::size_t layer = 0;
  std::size_t head = 0;
  MaskType chosen = MaskType::kDense;
  OptionalMaskValues nmse{};             // sparse candidates that were evaluated
  OptionalMaskValues flops_reduction{};  // exact masked fraction per sparse candidate

  friend bool operator==(const HeadVerdict&, const HeadVerdict&) = default;
};

/// Candidate iteration order for one prompt.
std::vector<MaskType> candidate_order(const TokenLayout& layout, const CharacterizerConfig& cfg);

/// Picks the first candidate whose NMSE against dense attention is below
/// alpha, or Dense if none qualifies. Layouts without images short-circuit
/// to Dense with empty maps.
HeadVerdict characterize_head(const HeadView& q, const HeadView& k, const HeadView& v,
                              const TokenLayout& layout, const CharacterizerConfig& cfg,
                              std::size_t layer = 0, std::size_t head = 0);

struct PromptVerdicts {
  std::string prompt_id;
  ModelMeta model;
  CharacterizerConfig config;
  bool has_images = false;
  std::vector<HeadVerdict> verdicts;  // (layer, head) lexicographic

  const HeadVerdict& at(std::size_t layer, std::size_t head) const {
    return verdicts.at(layer * model.heads + head);
  }
};

/// Runs characterize_head over every (layer, head) of a capture, fanning out
/// over `jobs` threads. Errors are rethrown with (layer, head) context.
PromptVerdicts characterize_prompt(const PromptCapture& capture, const ModelMeta& model,
                                   const CharacterizerConfig& cfg, std::size_t jobs = 1);

nlohmann::ordered_json verdicts_to_json(const PromptVerdicts& pv);
PromptVerdicts verdicts_from_json(const nlohmann::json& j);

}  // namespace blindsight
