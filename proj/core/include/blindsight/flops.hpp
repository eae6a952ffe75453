// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindsight/layout.hpp"
#include "blindsight/mask.hpp"

namespace blindsight {

/// Per-mask quantity indexed by index_of(MaskType).
using MaskValues = std::array<double, 4>;

/// Continuous masked-area estimate for the three sparse templates.
///
/// Follows the closed-form causal estimator: sinks are taken as 10% of every
/// image, only image-by-image blocks are counted, and the dense area is
/// 0.5 * S^2. The last image's intra-image sink term is added after the pair
/// loop, exactly as the estimator is usually written down.
struct AppendixAreas {
  MaskValues masked{};  // Dense stays 0
  double original_area = 0.0;

  double reduction(MaskType t) const { return original_area > 0 ? masked[index_of(t)] / original_area : 0.0; }
  MaskValues reductions() const;
};

/// With the bidirectional base the original area also includes the
/// upper-triangular intra-image cells; masked areas are unchanged.
AppendixAreas appendix_masked_areas(const TokenLayout& layout,
                                    BaseVisibility base = BaseVisibility::kCausal);

/// Exact cell counts of the materialized templates.
struct ExactAreas {
  std::array<std::uint64_t, 4> allowed{};

  std::uint64_t dense() const { return allowed[index_of(MaskType::kDense)]; }
  std::uint64_t masked(MaskType t) const { return dense() - allowed[index_of(t)]; }
  double fraction(MaskType t) const;
  MaskValues fractions() const;
};

ExactAreas exact_areas(const TokenLayout& layout, const SinkSpec& sinks, BaseVisibility base);

/// 1 - allowed(mask) / allowed(dense), exact.
double exact_masked_fraction(const TokenLayout& layout, MaskType mask, const SinkSpec& sinks,
                             BaseVisibility base);

enum class Estimator { kAppendix, kExact };

struct ReductionOptions {
  Estimator estimator = Estimator::kAppendix;
  SinkSpec sinks = SinkSpec::prefix(0.1);  // used by the exact estimator
  BaseVisibility base = BaseVisibility::kCausal;
};

/// Per-mask reductions of one layout under the chosen estimator.
MaskValues per_mask_reduction(const TokenLayout& layout, const ReductionOptions& opts);

/// Throws Error(kInvalidArgument) unless shares are non-negative and sum to 1.
void validate_shares(const MaskValues& shares);

/// sum over masks of share[mask] * reduction[mask]; Dense contributes 0.
double model_reduction(const MaskValues& shares, const TokenLayout& layout,
                       const ReductionOptions& opts = {});
double model_reduction(const MaskValues& shares, const MaskValues& reductions);

struct CdfPoint {
  double reduction = 0.0;
  std::size_t count = 0;    // prompts with exactly this reduction
  double cumulative = 0.0;  // fraction of prompts with reduction <= this value
};

/// Empirical CDF with one point per distinct value.
std::vector<CdfPoint> reduction_cdf(std::span<const double> reductions);

struct PromptReduction {
  std::string prompt_id;
  double reduction = 0.0;
  double exact_reduction = 0.0;  // only meaningful when the report has exact values
};

struct FlopsReport {
  MaskValues shares{};
  Estimator estimator = Estimator::kAppendix;
  bool has_exact = false;
  std::vector<PromptReduction> prompts;
  double mean_reduction = 0.0;
  double mean_exact_reduction = 0.0;
  std::vector<CdfPoint> cdf;
};

struct NamedLayout {
  std::string id;
  TokenLayout layout;
};

/// Appendix estimate per prompt, plus exact counts when `with_exact` is set.
/// `opts.estimator` selects which column drives mean and CDF.
FlopsReport flops_report(std::span<const NamedLayout> layouts, const MaskValues& shares,
                         const ReductionOptions& opts, bool with_exact);

nlohmann::ordered_json flops_report_to_json(const FlopsReport& report);
/// `prompt_id,reduction[,exact_reduction]` rows followed by a `mean,...` line.
std::string flops_report_csv(const FlopsReport& report);
/// `reduction,count,cumulative_fraction` rows.
std::string cdf_csv(std::span<const CdfPoint> cdf);

std::string format_double(double v);

}  // namespace blindsight
