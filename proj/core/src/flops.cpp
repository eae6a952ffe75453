// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/flops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "blindsight/error.hpp"

namespace blindsight {

MaskValues AppendixAreas::reductions() const {
  MaskValues out{};
  for (auto t : kAllMaskTypes) out[index_of(t)] = reduction(t);
  return out;
}

AppendixAreas appendix_masked_areas(const TokenLayout& layout, BaseVisibility base) {
  const auto images = layout.images();
  const std::size_t n = images.size();
  std::vector<double> len(n);
  for (std::size_t i = 0; i < n; ++i) len[i] = static_cast<double>(images[i].length());

  double sink = 0.0, document_sink = 0.0, document = 0.0;
  // The outer loop stops one short of the last image; its intra-image sink
  // term is added afterwards.
  for (std::size_t start = 0; start + 1 < n; ++start) {
    for (std::size_t end = start; end < n; ++end) {
      if (end == start) {
        sink += 0.5 * 0.9 * len[start] * len[start];
      } else {
        document_sink += 0.9 * len[start] * len[end];
        sink += 0.9 * len[start] * len[end];
      }
    }
    for (std::size_t end = start + 1; end < n; ++end) document += len[start] * len[end];
  }
  if (n > 0) sink += 0.5 * 0.9 * len[n - 1] * len[n - 1];

  AppendixAreas areas;
  areas.masked[index_of(MaskType::kSink)] = sink;
  areas.masked[index_of(MaskType::kDocument)] = document;
  areas.masked[index_of(MaskType::kDocumentSink)] = document_sink;
  const double s = static_cast<double>(layout.seq_len());
  areas.original_area = 0.5 * s * s;
  if (base == BaseVisibility::kCausalWithBidirectionalImages) {
    for (double l : len) areas.original_area += 0.5 * l * (l - 1.0);
  }
  return areas;
}

double ExactAreas::fraction(MaskType t) const {
  if (dense() == 0) return 0.0;
  return static_cast<double>(masked(t)) / static_cast<double>(dense());
}

MaskValues ExactAreas::fractions() const {
  MaskValues out{};
  for (auto t : kAllMaskTypes) out[index_of(t)] = fraction(t);
  return out;
}

ExactAreas exact_areas(const TokenLayout& layout, const SinkSpec& sinks, BaseVisibility base) {
  ExactAreas areas;
  for (auto t : kAllMaskTypes) {
    areas.allowed[index_of(t)] = allowed_cell_count(build_mask(layout, t, sinks, base));
  }
  return areas;
}

double exact_masked_fraction(const TokenLayout& layout, MaskType mask, const SinkSpec& sinks,
                             BaseVisibility base) {
  if (mask == MaskType::kDense) return 0.0;
  const auto dense = allowed_cell_count(build_mask(layout, MaskType::kDense, sinks, base));
  const auto kept = allowed_cell_count(build_mask(layout, mask, sinks, base));
  if (dense == 0) return 0.0;
  return static_cast<double>(dense - kept) / static_cast<double>(dense);
}

MaskValues per_mask_reduction(const TokenLayout& layout, const ReductionOptions& opts) {
  if (opts.estimator == Estimator::kExact) return exact_areas(layout, opts.sinks, opts.base).fractions();
  return appendix_masked_areas(layout, opts.base).reductions();
}

void validate_shares(const MaskValues& shares) {
  double total = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw Error(ErrorCode::kInvalidArgument, "mask shares must be finite and non-negative");
    }
    total += s;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument,
                "mask shares sum to " + format_double(total) + ", expected 1");
  }
}

double model_reduction(const MaskValues& shares, const MaskValues& reductions) {
  validate_shares(shares);
  double total = 0.0;
  for (auto t : kSparseMaskTypes) total += shares[index_of(t)] * reductions[index_of(t)];
  return total;
}

double model_reduction(const MaskValues& shares, const TokenLayout& layout, const ReductionOptions& opts) {
  return model_reduction(shares, per_mask_reduction(layout, opts));
}

std::vector<CdfPoint> reduction_cdf(std::span<const double> reductions) {
  std::vector<double> sorted(reductions.begin(), reductions.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CdfPoint> cdf;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!cdf.empty() && cdf.back().reduction == sorted[i]) {
      ++cdf.back().count;
    } else {
      cdf.push_back({sorted[i], 1, 0.0});
    }
    cdf.back().cumulative = static_cast<double>(i + 1) / n;
  }
  return cdf;
}

FlopsReport flops_report(std::span<const NamedLayout> layouts, const MaskValues& shares,
                         const ReductionOptions& opts, bool with_exact) {
  if (layouts.empty()) throw Error(ErrorCode::kInvalidArgument, "flops report needs at least one layout");
  validate_shares(shares);
  FlopsReport report;
  report.shares = shares;
  report.estimator = opts.estimator;
  report.has_exact = with_exact || opts.estimator == Estimator::kExact;

  ReductionOptions appendix = opts;
  appendix.estimator = Estimator::kAppendix;
  ReductionOptions exact = opts;
  exact.estimator = Estimator::kExact;

  std::vector<double> primary;
  for (const auto& named : layouts) {
    PromptReduction row;
    row.prompt_id = named.id;
    row.reduction = model_reduction(shares, named.layout, appendix);
    if (report.has_exact) row.exact_reduction = model_reduction(shares, named.layout, exact);
    primary.push_back(opts.estimator == Estimator::kExact ? row.exact_reduction : row.reduction);
    report.prompts.push_back(std::move(row));
  }
  const double n = static_cast<double>(report.prompts.size());
  for (const auto& p : report.prompts) {
    report.mean_reduction += p.reduction / n;
    report.mean_exact_reduction += p.exact_reduction / n;
  }
  report.cdf = reduction_cdf(primary);
  return report;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

nlohmann::ordered_json flops_report_to_json(const FlopsReport& report) {
  nlohmann::ordered_json shares;
  for (auto t : kAllMaskTypes) shares[std::string(to_string(t))] = report.shares[index_of(t)];
  nlohmann::ordered_json prompts = nlohmann::ordered_json::array();
  for (const auto& p : report.prompts) {
    nlohmann::ordered_json row{{"prompt_id", p.prompt_id}, {"reduction", p.reduction}};
    if (report.has_exact) row["exact_reduction"] = p.exact_reduction;
    prompts.push_back(std::move(row));
  }
  nlohmann::ordered_json cdf = nlohmann::ordered_json::array();
  for (const auto& c : report.cdf) {
    cdf.push_back({{"reduction", c.reduction}, {"count", c.count}, {"cumulative", c.cumulative}});
  }
  nlohmann::ordered_json out{
      {"estimator", report.estimator == Estimator::kExact ? "exact" : "appendix"},
      {"shares", std::move(shares)},
      {"prompt_count", report.prompts.size()},
      {"mean_reduction", report.mean_reduction}};
  if (report.has_exact) out["mean_exact_reduction"] = report.mean_exact_reduction;
  out["prompts"] = std::move(prompts);
  out["cdf"] = std::move(cdf);
  return out;
}

std::string flops_report_csv(const FlopsReport& report) {
  std::string out = report.has_exact ? "prompt_id,reduction,exact_reduction\n" : "prompt_id,reduction\n";
  for (const auto& p : report.prompts) {
    out += p.prompt_id + "," + format_double(p.reduction);
    if (report.has_exact) out += "," + format_double(p.exact_reduction);
    out += "\n";
  }
  out += "mean," + format_double(report.mean_reduction);
  if (report.has_exact) out += "," + format_double(report.mean_exact_reduction);
  out += "\n";
  return out;
}

std::string cdf_csv(std::span<const CdfPoint> cdf) {
  std::string out = "reduction,count,cumulative_fraction\n";
  for (const auto& c : cdf) {
    out += format_double(c.reduction) + "," + std::to_string(c.count) + "," + format_double(c.cumulative) + "\n";
  }
  return out;
}

}  // namespace blindsight
