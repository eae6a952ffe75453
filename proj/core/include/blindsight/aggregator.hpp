// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindsight/characterizer.hpp"
#include "blindsight/flops.hpp"

namespace blindsight {

/// Per-head share of prompts that chose each mask type.
struct MaskFractions {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t prompt_count = 0;      // prompts contributing to the fractions
  std::size_t excluded_prompts = 0;  // prompts without images
  std::vector<MaskValues> per_head;  // layer-major

  const MaskValues& at(std::size_t layer, std::size_t head) const { return per_head.at(layer * heads + head); }
};

/// Counts chosen masks per head over prompts that contain images.
/// Throws Error(kShapeMismatch) when prompts disagree on (layers, heads) and
/// Error(kInvalidArgument) when no prompt with images is given.
MaskFractions accumulate(std::span<const PromptVerdicts> prompts);

struct AggregatorConfig {
  double gamma_c = 0.25;  // dense veto
  double gamma_s = 0.60;
  double gamma_d = 0.60;

  void validate() const;
};

/// Dense if its share exceeds gamma_c, else Sink above gamma_s, else
/// Document above gamma_d, else DocumentSink. Comparisons are strict.
MaskType aggregate_head(const MaskValues& fractions, const AggregatorConfig& cfg);

struct HeadMap {
  ModelMeta model;
  CharacterizerConfig characterizer;
  AggregatorConfig aggregator;
  std::size_t prompt_count = 0;
  std::vector<MaskType> map;  // layer-major

  MaskType at(std::size_t layer, std::size_t head) const { return map.at(layer * model.heads + head); }
  /// Share of heads per mask type, every head weighted equally.
  MaskValues shares() const;
  MaskValues layer_shares(std::size_t layer) const;
};

HeadMap build_headmap(const MaskFractions& fractions, const AggregatorConfig& cfg, const ModelMeta& model,
                      const CharacterizerConfig& characterizer);

nlohmann::ordered_json headmap_to_json(const HeadMap& map);
HeadMap headmap_from_json(const nlohmann::json& j);

/// `layer,dense,sink,document,document_sink` rows plus an `all` row.
std::string headmap_summary_csv(const HeadMap& map);
/// `layer,head,dense,sink,document,document_sink` per-head fractions.
std::string fractions_csv(const MaskFractions& fractions);

}  // namespace blindsight
