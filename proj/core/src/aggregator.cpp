// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/aggregator.hpp"

#include <string>

#include "blindsight/error.hpp"

namespace blindsight {

MaskFractions accumulate(std::span<const PromptVerdicts> prompts) {
  if (prompts.empty()) throw Error(ErrorCode::kInvalidArgument, "aggregation needs at least one prompt");
  MaskFractions out;
  out.layers = prompts.front().model.layers;
  out.heads = prompts.front().model.heads;
  out.per_head.assign(out.layers * out.heads, MaskValues{});
  std::vector<std::array<std::size_t, 4>> counts(out.per_head.size());
  for (const auto& p : prompts) {
    if (p.model.layers != out.layers || p.model.heads != out.heads ||
        p.verdicts.size() != out.layers * out.heads) {
      throw Error(ErrorCode::kShapeMismatch, "prompt " + p.prompt_id + " has shape " +
                                                 std::to_string(p.model.layers) + "x" +
                                                 std::to_string(p.model.heads) + ", expected " +
                                                 std::to_string(out.layers) + "x" + std::to_string(out.heads));
    }
    if (!p.has_images) {
      ++out.excluded_prompts;
      continue;
    }
    ++out.prompt_count;
    for (std::size_t i = 0; i < p.verdicts.size(); ++i) ++counts[i][index_of(p.verdicts[i].chosen)];
  }
  if (out.prompt_count == 0) {
    throw Error(ErrorCode::kInvalidArgument, "no prompt with images to aggregate");
  }
  const double n = static_cast<double>(out.prompt_count);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::size_t m = 0; m < 4; ++m) out.per_head[i][m] = static_cast<double>(counts[i][m]) / n;
  }
  return out;
}

void AggregatorConfig::validate() const {
  for (double g : {gamma_c, gamma_s, gamma_d}) {
    if (!(g > 0.0 && g < 1.0)) throw Error(ErrorCode::kInvalidArgument, "gamma thresholds must lie in (0, 1)");
  }
}

MaskType aggregate_head(const MaskValues& fractions, const AggregatorConfig& cfg) {
  if (fractions[index_of(MaskType::kDense)] > cfg.gamma_c) return MaskType::kDense;
  if (fractions[index_of(MaskType::kSink)] > cfg.gamma_s) return MaskType::kSink;
  if (fractions[index_of(MaskType::kDocument)] > cfg.gamma_d) return MaskType::kDocument;
  return MaskType::kDocumentSink;
}

MaskValues HeadMap::shares() const {
  MaskValues out{};
  if (map.empty()) return out;
  for (auto t : map) out[index_of(t)] += 1.0;
  for (auto& v : out) v /= static_cast<double>(map.size());
  return out;
}

MaskValues HeadMap::layer_shares(std::size_t layer) const {
  MaskValues out{};
  for (std::size_t h = 0; h < model.heads; ++h) out[index_of(at(layer, h))] += 1.0;
  for (auto& v : out) v /= static_cast<double>(model.heads);
  return out;
}

HeadMap build_headmap(const MaskFractions& fractions, const AggregatorConfig& cfg, const ModelMeta& model,
                      const CharacterizerConfig& characterizer) {
  cfg.validate();
  if (fractions.layers != model.layers || fractions.heads != model.heads) {
    throw Error(ErrorCode::kShapeMismatch, "fractions do not match the model shape");
  }
  HeadMap out;
  out.model = model;
  out.characterizer = characterizer;
  out.aggregator = cfg;
  out.prompt_count = fractions.prompt_count;
  out.map.reserve(fractions.per_head.size());
  for (const auto& f : fractions.per_head) out.map.push_back(aggregate_head(f, cfg));
  return out;
}

nlohmann::ordered_json headmap_to_json(const HeadMap& hm) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < hm.model.layers; ++l) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t h = 0; h < hm.model.heads; ++h) row.push_back(to_string(hm.at(l, h)));
    rows.push_back(std::move(row));
  }
  return {{"model", hm.model.name},
          {"layers", hm.model.layers},
          {"heads", hm.model.heads},
          {"head_dim", hm.model.head_dim},
          {"alpha", hm.characterizer.alpha},
          {"order_policy", to_string(hm.characterizer.order)},
          {"base", to_string(hm.characterizer.base)},
          {"gamma_c", hm.aggregator.gamma_c},
          {"gamma_s", hm.aggregator.gamma_s},
          {"gamma_d", hm.aggregator.gamma_d},
          {"sink_spec", sink_spec_to_json(hm.characterizer.sinks)},
          {"prompt_count", hm.prompt_count},
          {"map", std::move(rows)}};
}

HeadMap headmap_from_json(const nlohmann::json& j) {
  try {
    HeadMap hm;
    hm.model = {j.at("model").get<std::string>(), j.at("layers").get<std::size_t>(),
                j.at("heads").get<std::size_t>(), j.at("head_dim").get<std::size_t>()};
    hm.characterizer.alpha = j.at("alpha").get<double>();
    hm.characterizer.order = order_policy_from_string(j.value("order_policy", "paper_fixed"));
    hm.characterizer.base = base_visibility_from_string(j.value("base", "causal"));
    hm.characterizer.sinks = sink_spec_from_json(j.at("sink_spec"));
    hm.aggregator = {j.at("gamma_c").get<double>(), j.at("gamma_s").get<double>(), j.at("gamma_d").get<double>()};
    hm.prompt_count = j.value("prompt_count", std::size_t{0});
    const auto& rows = j.at("map");
    if (rows.size() != hm.model.layers) {
      throw Error(ErrorCode::kShapeMismatch, "head map has " + std::to_string(rows.size()) + " layers, expected " +
                                                 std::to_string(hm.model.layers));
    }
    for (const auto& row : rows) {
      if (row.size() != hm.model.heads) {
        throw Error(ErrorCode::kShapeMismatch, "head map row does not have " + std::to_string(hm.model.heads) + " heads");
      }
      for (const auto& cell : row) hm.map.push_back(mask_type_from_string(cell.get<std::string>()));
    }
    if (hm.map.empty()) throw Error(ErrorCode::kShapeMismatch, "head map is empty");
    return hm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed head map JSON: ") + e.what());
  }
}

namespace {

std::string shares_row(const std::string& label, const MaskValues& v) {
  std::string row = label;
  for (auto t : kAllMaskTypes) row += "," + format_double(v[index_of(t)]);
  return row + "\n";
}

}  // namespace

std::string headmap_summary_csv(const HeadMap& hm) {
  std::string out = "layer,dense,sink,document,document_sink\n";
  for (std::size_t l = 0; l < hm.model.layers; ++l) out += shares_row(std::to_string(l), hm.layer_shares(l));
  out += shares_row("all", hm.shares());
  return out;
}

std::string fractions_csv(const MaskFractions& f) {
  std::string out = "layer,head,dense,sink,document,document_sink\n";
  for (std::size_t l = 0; l < f.layers; ++l) {
    for (std::size_t h = 0; h < f.heads; ++h) out += shares_row(std::to_string(l) + "," + std::to_string(h), f.at(l, h));
  }
  return out;
}

}  // namespace blindsight
