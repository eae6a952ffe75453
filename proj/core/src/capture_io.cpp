// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/capture_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "blindsight/error.hpp"

namespace blindsight {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 3> kRoleNames = {"q", "k", "v"};

std::size_t role_index(TensorRole role) { return static_cast<std::size_t>(role); }

float from_little_endian(float x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    auto bits = std::bit_cast<std::uint32_t>(x);
    bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
    return std::bit_cast<float>(bits);
  }
}

std::vector<float> read_tensor_file(const fs::path& path, std::size_t expected_elems) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kIo, "missing tensor file " + path.string());
  }
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot stat " + path.string() + ": " + ec.message());
  const auto expected_bytes = static_cast<std::uintmax_t>(expected_elems) * sizeof(float);
  if (bytes < expected_bytes) {
    throw Error(ErrorCode::kCaptureTruncated, path.string() + " is truncated: " + std::to_string(bytes) +
                                                   " bytes, shape needs " + std::to_string(expected_bytes));
  }
  if (bytes > expected_bytes) {
    throw Error(ErrorCode::kCaptureShape, path.string() + " holds " + std::to_string(bytes) +
                                              " bytes but the declared shape needs " +
                                              std::to_string(expected_bytes));
  }
  std::vector<float> data(expected_elems);
  std::ifstream in(path, std::ios::binary);
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected_bytes))) {
    throw Error(ErrorCode::kIo, "failed reading " + path.string());
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = from_little_endian(data[i]);
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::kCaptureNonFinite,
                  path.string() + " has a non-finite value at element " + std::to_string(i));
    }
  }
  return data;
}

void write_tensor_file(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  } else {
    for (float x : data) {
      const float le = from_little_endian(x);
      out.write(reinterpret_cast<const char*>(&le), sizeof(float));
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& context) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCaptureFormat, context + ": bad or missing field '" + key + "'");
  }
}

}  // namespace

bool is_valid_prompt_id(std::string_view id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

std::vector<float>& PromptCapture::tensor(TensorRole role) {
  return role == TensorRole::kQuery ? q : role == TensorRole::kKey ? k : v;
}

const std::vector<float>& PromptCapture::tensor(TensorRole role) const {
  return role == TensorRole::kQuery ? q : role == TensorRole::kKey ? k : v;
}

HeadView PromptCapture::head(TensorRole role, std::size_t layer, std::size_t h) const {
  const std::size_t n = head_elements();
  const auto& t = tensor(role);
  return {std::span<const float>(t).subspan((layer * heads + h) * n, n), seq_len(), head_dim};
}

std::span<float> PromptCapture::head_data(TensorRole role, std::size_t layer, std::size_t h) {
  const std::size_t n = head_elements();
  return std::span<float>(tensor(role)).subspan((layer * heads + h) * n, n);
}

PromptCapture make_capture(std::string prompt_id, TokenLayout layout, const ModelMeta& meta) {
  PromptCapture c;
  c.prompt_id = std::move(prompt_id);
  c.layout = std::move(layout);
  c.layers = meta.layers;
  c.heads = meta.heads;
  c.head_dim = meta.head_dim;
  const std::size_t n = meta.layers * meta.heads * c.layout.seq_len() * meta.head_dim;
  c.q.assign(n, 0.0f);
  c.k.assign(n, 0.0f);
  c.v.assign(n, 0.0f);
  return c;
}

void validate_capture(const PromptCapture& c, const ModelMeta& meta) {
  if (!is_valid_prompt_id(c.prompt_id)) {
    throw Error(ErrorCode::kCaptureFormat, "invalid prompt id '" + c.prompt_id + "'");
  }
  if (c.layers != meta.layers || c.heads != meta.heads || c.head_dim != meta.head_dim) {
    throw Error(ErrorCode::kCaptureShape, "prompt " + c.prompt_id + " does not match the model shape");
  }
  const std::size_t n = meta.layers * meta.heads * c.seq_len() * meta.head_dim;
  for (auto role : {TensorRole::kQuery, TensorRole::kKey, TensorRole::kValue}) {
    const auto& t = c.tensor(role);
    if (t.size() != n) {
      throw Error(ErrorCode::kCaptureShape, "prompt " + c.prompt_id + " tensor " +
                                                kRoleNames[role_index(role)] + " has " +
                                                std::to_string(t.size()) + " elements, expected " +
                                                std::to_string(n));
    }
    if (!std::all_of(t.begin(), t.end(), [](float x) { return std::isfinite(x); })) {
      throw Error(ErrorCode::kCaptureNonFinite,
                  "prompt " + c.prompt_id + " tensor " + kRoleNames[role_index(role)] + " is not finite");
    }
  }
}

CaptureReader::CaptureReader(const fs::path& dir) : dir_(dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCaptureFormat, manifest_path.string() + ": " + e.what());
  }
  const std::string ctx = manifest_path.string();
  const int version = field<int>(manifest, "version", ctx);
  if (version != kCaptureVersion) {
    throw Error(ErrorCode::kCaptureVersion, ctx + ": unsupported capture version " + std::to_string(version) +
                                                " (expected " + std::to_string(kCaptureVersion) + ")");
  }
  const auto model = field<nlohmann::json>(manifest, "model", ctx);
  model_.name = field<std::string>(model, "name", ctx);
  model_.layers = field<std::size_t>(model, "layers", ctx);
  model_.heads = field<std::size_t>(model, "heads", ctx);
  model_.head_dim = field<std::size_t>(model, "head_dim", ctx);
  if (model_.layers == 0 || model_.heads == 0 || model_.head_dim == 0) {
    throw Error(ErrorCode::kCaptureShape, ctx + ": model dimensions must be positive");
  }

  std::set<std::string> seen;
  for (const auto& p : field<nlohmann::json>(manifest, "prompts", ctx)) {
    ManifestEntry e;
    e.id = field<std::string>(p, "id", ctx);
    const std::string pctx = ctx + " prompt '" + e.id + "'";
    if (!is_valid_prompt_id(e.id) || !seen.insert(e.id).second) {
      throw Error(ErrorCode::kCaptureFormat, pctx + ": invalid or duplicate id");
    }
    try {
      e.layout = layout_from_json(field<nlohmann::json>(p, "layout", pctx));
    } catch (const Error& err) {
      throw Error(ErrorCode::kCaptureFormat, pctx + ": " + err.what());
    }
    if (field<std::string>(p, "dtype", pctx) != "f32") {
      throw Error(ErrorCode::kCaptureFormat, pctx + ": only dtype f32 is supported");
    }
    if (field<std::string>(p, "byte_order", pctx) != "little") {
      throw Error(ErrorCode::kCaptureFormat, pctx + ": only little byte order is supported");
    }
    const auto shape = field<std::vector<std::size_t>>(p, "shape", pctx);
    const std::vector<std::size_t> expected = {model_.layers, model_.heads, e.layout.seq_len(), model_.head_dim};
    if (shape != expected) {
      throw Error(ErrorCode::kCaptureShape, pctx + ": declared shape does not match [layers, heads, seq_len, head_dim]");
    }
    const auto tensors = field<nlohmann::json>(p, "tensors", pctx);
    for (std::size_t r = 0; r < 3; ++r) {
      const auto rel = field<std::string>(tensors, kRoleNames[r], pctx);
      e.tensor_paths[r] = dir / rel;
    }
    entries_.push_back(std::move(e));
  }
}

PromptCapture CaptureReader::read(std::size_t i) const {
  const auto& e = entries_.at(i);
  PromptCapture c;
  c.prompt_id = e.id;
  c.layout = e.layout;
  c.layers = model_.layers;
  c.heads = model_.heads;
  c.head_dim = model_.head_dim;
  const std::size_t n = model_.layers * model_.heads * e.layout.seq_len() * model_.head_dim;
  c.q = read_tensor_file(e.tensor_paths[0], n);
  c.k = read_tensor_file(e.tensor_paths[1], n);
  c.v = read_tensor_file(e.tensor_paths[2], n);
  return c;
}

std::vector<PromptCapture> load_capture(const fs::path& dir) {
  CaptureReader reader(dir);
  std::vector<PromptCapture> out;
  out.reserve(reader.size());
  for (std::size_t i = 0; i < reader.size(); ++i) out.push_back(reader.read(i));
  return out;
}

CaptureWriter::CaptureWriter(const fs::path& dir, ModelMeta meta, bool force)
    : dir_(dir), model_(std::move(meta)), prompts_(nlohmann::ordered_json::array()) {
  std::error_code ec;
  if (fs::exists(dir_ / "manifest.json", ec) && !force) {
    throw Error(ErrorCode::kAlreadyExists, dir_.string() + " already holds a capture (use --force to overwrite)");
  }
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir_.string() + ": " + ec.message());
}

void CaptureWriter::add(const PromptCapture& c) {
  validate_capture(c, model_);
  const auto rel_dir = fs::path("prompts") / c.prompt_id;
  std::error_code ec;
  fs::create_directories(dir_ / rel_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + (dir_ / rel_dir).string() + ": " + ec.message());
  nlohmann::ordered_json tensors;
  for (std::size_t r = 0; r < 3; ++r) {
    const auto rel = rel_dir / (std::string(kRoleNames[r]) + ".bin");
    write_tensor_file(dir_ / rel, c.tensor(static_cast<TensorRole>(r)));
    tensors[kRoleNames[r]] = rel.generic_string();
  }
  prompts_.push_back({{"id", c.prompt_id},
                      {"layout", layout_to_json(c.layout)},
                      {"dtype", "f32"},
                      {"byte_order", "little"},
                      {"shape", {model_.layers, model_.heads, c.seq_len(), model_.head_dim}},
                      {"tensors", std::move(tensors)}});
}

void CaptureWriter::finish() {
  if (finished_) return;
  nlohmann::ordered_json manifest{
      {"version", kCaptureVersion},
      {"model", {{"name", model_.name}, {"layers", model_.layers}, {"heads", model_.heads}, {"head_dim", model_.head_dim}}},
      {"prompts", prompts_}};
  const auto path = dir_ / "manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << manifest.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
  finished_ = true;
}

void save_capture(std::span<const PromptCapture> captures, const ModelMeta& meta, const fs::path& dir, bool force) {
  CaptureWriter writer(dir, meta, force);
  for (const auto& c : captures) writer.add(c);
  writer.finish();
}

}  // namespace blindsight
