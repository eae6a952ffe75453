// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/characterizer.hpp"

#include <algorithm>
#include <string>

#include "blindsight/error.hpp"
#include "blindsight/flops.hpp"
#include "blindsight/parallel.hpp"

namespace blindsight {

std::string_view to_string(OrderPolicy policy) {
  return policy == OrderPolicy::kPaperFixed ? "paper_fixed" : "flops_ascending";
}

OrderPolicy order_policy_from_string(std::string_view name) {
  if (name == "paper_fixed" || name == "paper" || name == "fixed") return OrderPolicy::kPaperFixed;
  if (name == "flops_ascending" || name == "flops") return OrderPolicy::kFlopsAscending;
  throw Error(ErrorCode::kInvalidArgument, "unknown order policy '" + std::string(name) + "'");
}

void CharacterizerConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  }
}

nlohmann::ordered_json config_to_json(const CharacterizerConfig& cfg) {
  return {{"alpha", cfg.alpha},
          {"order_policy", to_string(cfg.order)},
          {"sink_spec", sink_spec_to_json(cfg.sinks)},
          {"base", to_string(cfg.base)},
          {"full_diagnostics", cfg.full_diagnostics}};
}

CharacterizerConfig characterizer_config_from_json(const nlohmann::json& j) {
  try {
    CharacterizerConfig cfg;
    cfg.alpha = j.at("alpha").get<double>();
    cfg.order = order_policy_from_string(j.at("order_policy").get<std::string>());
    cfg.sinks = sink_spec_from_json(j.at("sink_spec"));
    cfg.base = base_visibility_from_string(j.at("base").get<std::string>());
    cfg.full_diagnostics = j.value("full_diagnostics", false);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed characterizer config: ") + e.what());
  }
}

std::vector<MaskType> candidate_order(const TokenLayout& layout, const CharacterizerConfig& cfg) {
  std::vector<MaskType> order(kSparseMaskTypes.begin(), kSparseMaskTypes.end());
  if (cfg.order == OrderPolicy::kPaperFixed) return order;
  const double sink = exact_masked_fraction(layout, MaskType::kSink, cfg.sinks, cfg.base);
  const double doc = exact_masked_fraction(layout, MaskType::kDocument, cfg.sinks, cfg.base);
  if (doc > sink) std::swap(order[0], order[1]);
  return order;
}

HeadVerdict characterize_head(const HeadView& q, const HeadView& k, const HeadView& v,
                              const TokenLayout& layout, const CharacterizerConfig& cfg,
                              std::size_t layer, std::size_t head) {
  HeadVerdict verdict;
  verdict.layer = layer;
  verdict.head = head;
  if (!layout.has_images()) return verdict;

  const auto dense = build_mask(layout, MaskType::kDense, cfg.sinks, cfg.base);
  const auto reference = masked_attention(q, k, v, dense);
  const auto dense_cells = allowed_cell_count(dense);

  bool decided = false;
  for (MaskType candidate : candidate_order(layout, cfg)) {
    const auto mask = build_mask(layout, candidate, cfg.sinks, cfg.base);
    verdict.flops_reduction[index_of(candidate)] =
        dense_cells == 0 ? 0.0
                         : static_cast<double>(dense_cells - allowed_cell_count(mask)) /
                               static_cast<double>(dense_cells);
    if (decided && !cfg.full_diagnostics) continue;
    const double err = nmse(masked_attention(q, k, v, mask), reference);
    verdict.nmse[index_of(candidate)] = err;
    if (!decided && err < cfg.alpha) {
      verdict.chosen = candidate;
      decided = true;
    }
  }
  return verdict;
}

PromptVerdicts characterize_prompt(const PromptCapture& capture, const ModelMeta& model,
                                   const CharacterizerConfig& cfg, std::size_t jobs) {
  cfg.validate();
  validate_capture(capture, model);
  PromptVerdicts out;
  out.prompt_id = capture.prompt_id;
  out.model = model;
  out.config = cfg;
  out.has_images = capture.layout.has_images();
  out.verdicts.resize(model.layers * model.heads);
  parallel_for(out.verdicts.size(), jobs, [&](std::size_t idx) {
    const std::size_t layer = idx / model.heads;
    const std::size_t head = idx % model.heads;
    try {
      out.verdicts[idx] = characterize_head(capture.head(TensorRole::kQuery, layer, head),
                                            capture.head(TensorRole::kKey, layer, head),
                                            capture.head(TensorRole::kValue, layer, head),
                                            capture.layout, cfg, layer, head);
    } catch (const Error& e) {
      throw Error(e.code(), "prompt " + capture.prompt_id + " layer " + std::to_string(layer) +
                                " head " + std::to_string(head) + ": " + e.what());
    }
  });
  return out;
}

namespace {

nlohmann::ordered_json optional_values_to_json(const OptionalMaskValues& values) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (auto t : kSparseMaskTypes) {
    if (values[index_of(t)]) j[std::string(to_string(t))] = *values[index_of(t)];
  }
  return j;
}

OptionalMaskValues optional_values_from_json(const nlohmann::json& j) {
  OptionalMaskValues out{};
  for (const auto& [key, value] : j.items()) out[index_of(mask_type_from_string(key))] = value.get<double>();
  return out;
}

}  // namespace

nlohmann::ordered_json verdicts_to_json(const PromptVerdicts& pv) {
  nlohmann::ordered_json verdicts = nlohmann::ordered_json::array();
  for (const auto& v : pv.verdicts) {
    verdicts.push_back({{"layer", v.layer},
                        {"head", v.head},
                        {"chosen", to_string(v.chosen)},
                        {"nmse", optional_values_to_json(v.nmse)},
                        {"flops_reduction", optional_values_to_json(v.flops_reduction)}});
  }
  return {{"prompt_id", pv.prompt_id},
          {"alpha", pv.config.alpha},
          {"order_policy", to_string(pv.config.order)},
          {"model",
           {{"name", pv.model.name}, {"layers", pv.model.layers}, {"heads", pv.model.heads}, {"head_dim", pv.model.head_dim}}},
          {"config", config_to_json(pv.config)},
          {"has_images", pv.has_images},
          {"verdicts", std::move(verdicts)}};
}

PromptVerdicts verdicts_from_json(const nlohmann::json& j) {
  try {
    PromptVerdicts pv;
    pv.prompt_id = j.at("prompt_id").get<std::string>();
    const auto& m = j.at("model");
    pv.model = {m.at("name").get<std::string>(), m.at("layers").get<std::size_t>(),
                m.at("heads").get<std::size_t>(), m.at("head_dim").get<std::size_t>()};
    pv.config = characterizer_config_from_json(j.at("config"));
    pv.has_images = j.at("has_images").get<bool>();
    for (const auto& v : j.at("verdicts")) {
      HeadVerdict hv;
      hv.layer = v.at("layer").get<std::size_t>();
      hv.head = v.at("head").get<std::size_t>();
      hv.chosen = mask_type_from_string(v.at("chosen").get<std::string>());
      hv.nmse = optional_values_from_json(v.at("nmse"));
      hv.flops_reduction = optional_values_from_json(v.value("flops_reduction", nlohmann::json::object()));
      pv.verdicts.push_back(hv);
    }
    if (pv.verdicts.size() != pv.model.layers * pv.model.heads) {
      throw Error(ErrorCode::kShapeMismatch, "verdict count does not match layers x heads");
    }
    for (std::size_t i = 0; i < pv.verdicts.size(); ++i) {
      if (pv.verdicts[i].layer != i / pv.model.heads || pv.verdicts[i].head != i % pv.model.heads) {
        throw Error(ErrorCode::kShapeMismatch, "verdicts are not in (layer, head) order");
      }
    }
    return pv;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed verdict JSON: ") + e.what());
  }
}

}  // namespace blindsight
