// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/sink_finder.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "blindsight/attention.hpp"
#include "blindsight/error.hpp"
#include "blindsight/parallel.hpp"

namespace blindsight {

ColumnMass column_mass(std::span<const double> attn, const TokenLayout& layout, const Segment& image) {
  const std::size_t s = layout.seq_len();
  if (image.end > s || image.length() > s) {
    throw Error(ErrorCode::kInvalidArgument, "image segment extends beyond the sequence");
  }
  if (attn.size() != s * s) {
    throw Error(ErrorCode::kShapeMismatch, "attention matrix is not seq_len x seq_len");
  }
  ColumnMass out;
  const std::size_t outside = s - image.length();
  if (outside == 0) {
    out.degenerate = true;
    return out;
  }
  out.mass.assign(image.length(), 0.0);
  for (std::size_t q = 0; q < s; ++q) {
    if (image.contains(q)) continue;
    const double* row = attn.data() + q * s + image.start;
    for (std::size_t o = 0; o < image.length(); ++o) out.mass[o] += row[o];
  }
  double total = 0.0;
  for (auto& m : out.mass) {
    m /= static_cast<double>(outside);
    total += m;
  }
  out.degenerate = !(total > 0.0);
  return out;
}

std::vector<std::size_t> top_offsets(std::span<const double> mass, std::size_t count) {
  std::vector<std::size_t> idx(mass.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) { return mass[a] != mass[b] ? mass[a] > mass[b] : a < b; });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::size_t SinkFinderConfig::top_count() const {
  return std::max<std::size_t>(1, ceil_tolerant(top_fraction * static_cast<double>(uniform_image_len)));
}

void SinkFinderConfig::validate() const {
  if (!(top_fraction > 0.0 && top_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "top_fraction must lie in (0, 1)");
  }
  if (uniform_image_len == 0) throw Error(ErrorCode::kInvalidArgument, "uniform_image_len must be positive");
}

void SinkHistogram::merge(const SinkHistogram& other) {
  if (votes.size() < other.votes.size()) votes.resize(other.votes.size(), 0);
  for (std::size_t i = 0; i < other.votes.size(); ++i) votes[i] += other.votes[i];
  samples += other.samples;
  heads_considered += other.heads_considered;
  images_considered += other.images_considered;
}

SinkVoteCounter::SinkVoteCounter(SinkFinderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  hist_.votes.assign(cfg_.uniform_image_len, 0);
}

void SinkVoteCounter::add(const PromptCapture& capture, std::size_t jobs) {
  const auto images = capture.layout.images();
  for (const auto& img : images) {
    if (img.length() != cfg_.uniform_image_len) {
      throw Error(ErrorCode::kMixedImageLengths,
                  "prompt " + capture.prompt_id + " has a " + std::to_string(img.length()) +
                      "-token image but uniform_image_len is " + std::to_string(cfg_.uniform_image_len) +
                      "; use prefix sinks for variable-length images");
    }
  }
  const auto dense = build_mask(capture.layout, MaskType::kDense, SinkSpec::prefix(0.1), cfg_.base);
  const std::size_t heads = capture.layers * capture.heads;
  const std::size_t k = cfg_.top_count();
  std::vector<SinkHistogram> partial(heads);
  parallel_for(heads, jobs, [&](std::size_t idx) {
    auto& local = partial[idx];
    local.votes.assign(cfg_.uniform_image_len, 0);
    local.heads_considered = 1;
    const auto probs = attention_probabilities(capture.head(TensorRole::kQuery, idx / capture.heads, idx % capture.heads),
                                               capture.head(TensorRole::kKey, idx / capture.heads, idx % capture.heads),
                                               dense);
    for (const auto& img : images) {
      const auto cm = column_mass(probs, capture.layout, img);
      // An image nothing outside attends to (e.g. the final segment) casts no vote.
      if (cm.degenerate) continue;
      ++local.images_considered;
      for (std::size_t off : top_offsets(cm.mass, k)) ++local.votes[off];
    }
  });
  for (const auto& p : partial) hist_.merge(p);
  ++hist_.samples;
}

std::vector<std::size_t> SinkVoteCounter::winners() const {
  std::vector<double> as_mass(hist_.votes.begin(), hist_.votes.end());
  return top_offsets(as_mass, cfg_.top_count());
}

namespace {

template <typename Source>
SinkFinderResult run(const Source& next_capture, std::size_t count, const SinkFinderConfig& cfg, std::size_t jobs) {
  SinkVoteCounter counter(cfg);
  for (std::size_t i = 0; i < count; ++i) counter.add(next_capture(i), jobs);
  return {counter.config(), counter.histogram(), counter.winners()};
}

}  // namespace

SinkFinderResult find_sink_offsets(std::span<const PromptCapture> captures, const SinkFinderConfig& cfg,
                                   std::size_t jobs) {
  return run([&](std::size_t i) -> const PromptCapture& { return captures[i]; }, captures.size(), cfg, jobs);
}

SinkFinderResult find_sink_offsets(const CaptureReader& reader, const SinkFinderConfig& cfg, std::size_t jobs) {
  return run([&](std::size_t i) { return reader.read(i); }, reader.size(), cfg, jobs);
}

nlohmann::ordered_json sink_result_to_json(const SinkFinderResult& r) {
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (std::size_t o = 0; o < r.histogram.votes.size(); ++o) {
    if (r.histogram.votes[o] > 0) hist[std::to_string(o)] = r.histogram.votes[o];
  }
  return {{"uniform_image_len", r.config.uniform_image_len},
          {"top_fraction", r.config.top_fraction},
          {"base", to_string(r.config.base)},
          {"offsets", r.offsets},
          {"sink_spec", {{"kind", "fixed_offsets"}, {"offsets", r.offsets}}},
          {"samples", r.histogram.samples},
          {"heads_considered", r.histogram.heads_considered},
          {"images_considered", r.histogram.images_considered},
          {"histogram", std::move(hist)}};
}

}  // namespace blindsight
