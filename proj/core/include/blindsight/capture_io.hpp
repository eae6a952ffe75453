// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// On-disk capture format
// ----------------------
//
//   <dir>/manifest.json
//   <dir>/prompts/<id>/q.bin
//   <dir>/prompts/<id>/k.bin
//   <dir>/prompts/<id>/v.bin
//
// Each .bin file is a headerless array of little-endian IEEE-754 float32 in
// row-major [layer][head][token][dim] order, so its size is exactly
// layers * heads * seq_len * head_dim * 4 bytes. The manifest:
//
//   {"version": 1,
//    "model": {"name": "...", "layers": L, "heads": H, "head_dim": d},
//    "prompts": [{"id": "p0",
//                 "layout": {"seq_len": S, "segments": [...]},
//                 "dtype": "f32", "byte_order": "little",
//                 "shape": [L, H, S, d],
//                 "tensors": {"q": "prompts/p0/q.bin", "k": "...", "v": "..."}}]}
//
// Exporting from PyTorch is a few lines:
//
//   t.detach().float().contiguous().cpu().numpy().astype('<f4').tofile(path)

#include <cstddef>
#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blindsight/attention.hpp"
#include "blindsight/layout.hpp"

namespace blindsight {

inline constexpr int kCaptureVersion = 1;

struct ModelMeta {
  std::string name = "unnamed";
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;

  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

enum class TensorRole { kQuery, kKey, kValue };

/// Q/K/V projections of every (layer, head) for one prompt.
struct PromptCapture {
  std::string prompt_id;
  TokenLayout layout;
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  std::vector<float> q, k, v;  // [layer][head][token][dim]

  std::size_t seq_len() const { return layout.seq_len(); }
  std::size_t head_elements() const { return seq_len() * head_dim; }
  std::vector<float>& tensor(TensorRole role);
  const std::vector<float>& tensor(TensorRole role) const;
  HeadView head(TensorRole role, std::size_t layer, std::size_t head) const;
  /// Mutable row-major slice of one head, for writers.
  std::span<float> head_data(TensorRole role, std::size_t layer, std::size_t head);

  friend bool operator==(const PromptCapture&, const PromptCapture&) = default;
};

/// Allocates zeroed tensors for the given shape.
PromptCapture make_capture(std::string prompt_id, TokenLayout layout, const ModelMeta& meta);

/// Shape and finiteness checks against the model metadata.
void validate_capture(const PromptCapture& capture, const ModelMeta& meta);

struct ManifestEntry {
  std::string id;
  TokenLayout layout;
  std::array<std::filesystem::path, 3> tensor_paths;  // absolute, q/k/v
};

/// Streams prompts from a capture directory. The manifest is parsed and
/// checked on construction; tensor files are read lazily by `read`.
class CaptureReader {
 public:
  explicit CaptureReader(const std::filesystem::path& dir);

  const ModelMeta& model() const { return model_; }
  std::size_t size() const { return entries_.size(); }
  const ManifestEntry& entry(std::size_t i) const { return entries_.at(i); }

  PromptCapture read(std::size_t i) const;

 private:
  std::filesystem::path dir_;
  ModelMeta model_;
  std::vector<ManifestEntry> entries_;
};

/// Loads every prompt eagerly.
std::vector<PromptCapture> load_capture(const std::filesystem::path& dir);

/// Incremental writer, so large synthetic sets never sit in memory at once.
class CaptureWriter {
 public:
  /// Refuses an existing manifest unless `force` is set.
  CaptureWriter(const std::filesystem::path& dir, ModelMeta meta, bool force);

  void add(const PromptCapture& capture);
  /// Writes manifest.json. Called once all prompts are added.
  void finish();

 private:
  std::filesystem::path dir_;
  ModelMeta model_;
  nlohmann::ordered_json prompts_;
  bool finished_ = false;
};

void save_capture(std::span<const PromptCapture> captures, const ModelMeta& meta,
                  const std::filesystem::path& dir, bool force = false);

/// Prompt ids double as directory names.
bool is_valid_prompt_id(std::string_view id);

}  // namespace blindsight
