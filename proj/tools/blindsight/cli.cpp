// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string_view>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "blindsight/aggregator.hpp"
#include "blindsight/capture_io.hpp"
#include "blindsight/characterizer.hpp"
#include "blindsight/error.hpp"
#include "blindsight/flops.hpp"
#include "blindsight/mask.hpp"
#include "blindsight/sink_finder.hpp"
#include "blindsight/synth.hpp"
#include "json_config.hpp"

namespace blindsight::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Output staging. Every subcommand computes its artifacts in memory first and
// only then touches the file system, so a failing run leaves nothing behind.

struct Artifact {
  fs::path path;
  std::string content;
};

void commit(const std::vector<Artifact>& artifacts, bool force) {
  for (const auto& a : artifacts) {
    if (fs::exists(a.path) && !force) {
      throw Error(ErrorCode::kAlreadyExists, a.path.string() + " exists; pass --force to overwrite");
    }
  }
  for (const auto& a : artifacts) {
    if (a.path.has_parent_path()) fs::create_directories(a.path.parent_path());
    fs::path tmp = a.path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
      out.write(a.content.data(), static_cast<std::streamsize>(a.content.size()));
      if (!out) throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
    }
    fs::rename(tmp, a.path);
  }
}

std::string json_text(const ojson& j) { return j.dump(2) + "\n"; }

std::string csv_with_header(const ojson& config, const std::string& csv) {
  return "# " + config.dump() + "\n" + csv;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text, const char* what) {
  auto parse_one = [&](std::string_view s) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
      throw Error(ErrorCode::kInvalidArgument, std::string("bad ") + what + " '" + text + "'");
    }
    return v;
  };
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const auto v = parse_one(text);
    return {v, v};
  }
  return {parse_one(std::string_view(text).substr(0, colon)), parse_one(std::string_view(text).substr(colon + 1))};
}

/// "text:2,image:5,text:1" -> layout of length 8.
TokenLayout parse_segment_list(const std::string& text) {
  std::vector<Segment> segs;
  std::size_t cursor = 0;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "bad segment '" + item + "'");
    const std::string kind = item.substr(0, colon);
    const auto [len, len2] = parse_range(item.substr(colon + 1), "segment length");
    (void)len2;
    Segment s;
    if (kind == "text") {
      s.kind = SegmentKind::kText;
    } else if (kind == "image") {
      s.kind = SegmentKind::kImage;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown segment kind '" + kind + "'");
    }
    s.start = cursor;
    s.end = cursor + len;
    cursor = s.end;
    segs.push_back(s);
  }
  return TokenLayout::from_segments(cursor, std::move(segs));
}

std::vector<std::int64_t> parse_ids(const std::string& text) {
  std::vector<std::int64_t> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size()) {
      throw Error(ErrorCode::kInvalidArgument, "bad token id '" + item + "'");
    }
    ids.push_back(v);
  }
  return ids;
}

/// Accepts {"layouts": [...]} or a bare array; entries are either
/// {"id", "layout"} objects or raw layouts (ids default to l<index>).
std::vector<NamedLayout> read_layouts(const fs::path& path) {
  const auto j = read_json(path);
  const auto& arr = j.is_object() && j.contains("layouts") ? j.at("layouts") : j;
  if (!arr.is_array()) throw Error(ErrorCode::kInvalidArgument, path.string() + ": expected an array of layouts");
  std::vector<NamedLayout> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& e = arr[i];
    if (e.is_object() && e.contains("layout")) {
      out.push_back({e.value("id", "l" + std::to_string(i)), layout_from_json(e.at("layout"))});
    } else {
      out.push_back({"l" + std::to_string(i), layout_from_json(e)});
    }
  }
  return out;
}

MaskValues parse_shares(const std::string& text) {
  MaskValues shares{};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "bad share '" + item + "'");
    const auto type = mask_type_from_string(item.substr(0, eq));
    const std::string value = item.substr(eq + 1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size()) {
      throw Error(ErrorCode::kInvalidArgument, "bad share value '" + value + "'");
    }
    shares[index_of(type)] = v;
  }
  validate_shares(shares);
  return shares;
}

ojson shares_json(const MaskValues& shares) {
  ojson j;
  for (auto t : kAllMaskTypes) j[std::string(to_string(t))] = shares[index_of(t)];
  return j;
}

std::vector<fs::path> expand_verdict_paths(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 14 && name.ends_with(".verdicts.json")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw Error(ErrorCode::kIo, "no such verdict file or directory: " + in);
    }
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "no verdict files found");
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct Common {
  std::size_t jobs = 1;
};

struct CharacterizeArgs {
  std::string capture;
  std::string out;
  double alpha = 0.1;
  std::string order = "paper_fixed";
  std::string sinks = "prefix:0.1";
  std::string base = "causal";
  bool full_diagnostics = false;
  bool force = false;
};

int cmd_characterize(const CharacterizeArgs& a, const Common& common, std::ostream& out) {
  CharacterizerConfig cfg;
  cfg.alpha = a.alpha;
  cfg.order = order_policy_from_string(a.order);
  cfg.sinks = parse_sink_spec(a.sinks);
  cfg.base = base_visibility_from_string(a.base);
  cfg.full_diagnostics = a.full_diagnostics;
  cfg.validate();

  const CaptureReader reader(a.capture);
  std::vector<Artifact> artifacts;
  for (std::size_t i = 0; i < reader.size(); ++i) {
    const auto capture = reader.read(i);
    const auto verdicts = characterize_prompt(capture, reader.model(), cfg, common.jobs);
    artifacts.push_back({fs::path(a.out) / (capture.prompt_id + ".verdicts.json"), json_text(verdicts_to_json(verdicts))});
  }
  commit(artifacts, a.force);
  out << "characterized " << reader.size() << " prompt(s) into " << a.out << "\n";
  return kExitOk;
}

struct AggregateArgs {
  std::vector<std::string> verdicts;
  std::string out;
  double gamma_c = 0.25;
  double gamma_s = 0.60;
  double gamma_d = 0.60;
  bool force = false;
};

int cmd_aggregate(const AggregateArgs& a, std::ostream& out) {
  const AggregatorConfig cfg{a.gamma_c, a.gamma_s, a.gamma_d};
  cfg.validate();
  std::vector<PromptVerdicts> prompts;
  for (const auto& p : expand_verdict_paths(a.verdicts)) {
    try {
      prompts.push_back(verdicts_from_json(read_json(p)));
    } catch (const Error& e) {
      throw Error(e.code(), p.string() + ": " + e.what());
    }
  }
  const auto& first = prompts.front();
  const auto first_cfg = config_to_json(first.config);
  for (const auto& pv : prompts) {
    auto c = config_to_json(pv.config);
    c.erase("full_diagnostics");
    auto f = first_cfg;
    f.erase("full_diagnostics");
    if (c != f) {
      throw Error(ErrorCode::kInvalidArgument,
                  "verdicts for " + pv.prompt_id + " were produced with a different characterizer config");
    }
    if (pv.model.layers != first.model.layers || pv.model.heads != first.model.heads) {
      throw Error(ErrorCode::kShapeMismatch, "verdicts for " + pv.prompt_id + " have a different layers x heads shape");
    }
  }
  const auto fractions = accumulate(prompts);
  const auto map = build_headmap(fractions, cfg, first.model, first.config);

  ojson config{{"command", "aggregate"},
               {"gamma_c", cfg.gamma_c},
               {"gamma_s", cfg.gamma_s},
               {"gamma_d", cfg.gamma_d},
               {"characterizer", first_cfg},
               {"prompt_count", fractions.prompt_count},
               {"excluded_prompts", fractions.excluded_prompts}};
  auto headmap = headmap_to_json(map);
  headmap["config"] = config;
  const fs::path dir(a.out);
  commit({{dir / "headmap.json", json_text(headmap)},
          {dir / "summary.csv", csv_with_header(config, headmap_summary_csv(map))},
          {dir / "fractions.csv", csv_with_header(config, fractions_csv(fractions))}},
         a.force);
  out << "aggregated " << fractions.prompt_count << " prompt(s)";
  if (fractions.excluded_prompts > 0) out << " (" << fractions.excluded_prompts << " without images excluded)";
  out << " into " << (dir / "headmap.json").string() << "\n";
  return kExitOk;
}

struct FlopsArgs {
  std::string headmap;
  std::string shares;
  std::string layouts;
  std::string capture;
  std::string sinks;
  std::string base;
  bool exact = false;
  std::string out;
  bool force = false;
};

int cmd_flops(const FlopsArgs& a, std::ostream& out) {
  MaskValues shares{};
  ReductionOptions opts;
  std::optional<HeadMap> map;
  if (!a.headmap.empty()) {
    map = headmap_from_json(read_json(a.headmap));
    shares = map->shares();
    opts.sinks = map->characterizer.sinks;
    opts.base = map->characterizer.base;
  } else {
    shares = parse_shares(a.shares);
  }
  if (!a.sinks.empty()) opts.sinks = parse_sink_spec(a.sinks);
  if (!a.base.empty()) opts.base = base_visibility_from_string(a.base);
  opts.estimator = a.exact ? Estimator::kExact : Estimator::kAppendix;

  std::vector<NamedLayout> layouts;
  if (!a.layouts.empty()) {
    layouts = read_layouts(a.layouts);
  } else {
    const CaptureReader reader(a.capture);
    if (map && (reader.model().layers != map->model.layers || reader.model().heads != map->model.heads)) {
      throw Error(ErrorCode::kShapeMismatch, "capture model shape does not match the head map");
    }
    for (std::size_t i = 0; i < reader.size(); ++i) layouts.push_back({reader.entry(i).id, reader.entry(i).layout});
  }
  if (layouts.empty()) throw Error(ErrorCode::kInvalidArgument, "no layouts to report on");

  const auto report = flops_report(layouts, shares, opts, a.exact);
  ojson config{{"command", "flops"},
               {"shares_source", map ? "headmap" : "flag"},
               {"shares", shares_json(shares)},
               {"estimator", a.exact ? "exact" : "appendix"},
               {"sink_spec", sink_spec_to_json(opts.sinks)},
               {"base", to_string(opts.base)},
               {"layout_source", a.layouts.empty() ? "capture" : "layouts"}};
  auto report_json = flops_report_to_json(report);
  ojson doc{{"config", config}};
  for (auto& [k, v] : report_json.items()) doc[k] = v;
  const fs::path dir(a.out);
  commit({{dir / "flops.json", json_text(doc)},
          {dir / "flops.csv", csv_with_header(config, flops_report_csv(report))},
          {dir / "cdf.csv", csv_with_header(config, cdf_csv(report.cdf))}},
         a.force);
  out << "mean reduction " << format_double(report.mean_reduction) << " (appendix)";
  if (report.has_exact) out << ", " << format_double(report.mean_exact_reduction) << " (exact)";
  out << " over " << report.prompts.size() << " layout(s)\n";
  return kExitOk;
}

struct MaskArgs {
  std::string layout;
  std::string segments;
  std::string token_ids;
  std::int64_t image_start_id = -1;
  std::int64_t image_end_id = -2;
  std::string type = "document_sink";
  std::string sinks = "prefix:0.1";
  std::string base = "causal";
  std::string emit = "json";
  std::size_t cap = kDefaultMaterializeCap;
  std::string out;
  bool force = false;
};

int cmd_mask(const MaskArgs& a, std::ostream& out) {
  TokenLayout layout;
  if (!a.layout.empty()) {
    layout = layout_from_json(read_json(a.layout));
  } else if (!a.segments.empty()) {
    layout = parse_segment_list(a.segments);
  } else {
    layout = parse_layout(parse_ids(a.token_ids), a.image_start_id, a.image_end_id);
  }
  const auto type = mask_type_from_string(a.type);
  const auto sinks = parse_sink_spec(a.sinks);
  const auto base = base_visibility_from_string(a.base);
  const auto mask = build_mask(layout, type, sinks, base);

  std::string payload;
  if (a.emit == "pbm") {
    payload = to_pbm(materialize(mask, a.cap));
  } else {
    ojson doc{{"config",
               {{"command", "mask"},
                {"mask_type", to_string(type)},
                {"sink_spec", sink_spec_to_json(sinks)},
                {"base", to_string(base)},
                {"layout", layout_to_json(layout)}}}};
    const auto body = mask_to_json(mask);
    for (auto& [k, v] : body.items()) doc[k] = v;
    payload = json_text(doc);
  }
  if (a.out.empty() || a.out == "-") {
    out << payload;
  } else {
    commit({{a.out, payload}}, a.force);
  }
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  std::string model_name = "synthetic";
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t prompts = 20;
  std::uint64_t seed = 0;
  double logit_gain = 8.0;
  double noise_sigma = -1.0;  // < 0: 0.1 * logit_gain
  std::string sinks = "prefix:0.1";
  std::string images = "3:6";
  std::string image_len = "32:64";
  std::string text_len = "1:8";
  std::string pattern = "random";
  bool force = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  LayoutRecipe recipe;
  std::tie(recipe.min_images, recipe.max_images) = parse_range(a.images, "image count range");
  std::tie(recipe.min_image_len, recipe.max_image_len) = parse_range(a.image_len, "image length range");
  std::tie(recipe.min_text_len, recipe.max_text_len) = parse_range(a.text_len, "text length range");
  recipe.validate();
  const ModelMeta model{a.model_name, a.layers, a.heads, a.head_dim};
  const double noise = a.noise_sigma < 0 ? 0.1 * a.logit_gain : a.noise_sigma;
  const auto sinks = parse_sink_spec(a.sinks);
  auto plan = make_plan(model, a.prompts, recipe, sinks, noise, a.logit_gain, a.seed);
  if (a.pattern != "random") std::fill(plan.patterns.begin(), plan.patterns.end(), mask_type_from_string(a.pattern));

  const ojson config{{"command", "synth"},
                     {"model", a.model_name},
                     {"layers", a.layers},
                     {"heads", a.heads},
                     {"head_dim", a.head_dim},
                     {"prompts", a.prompts},
                     {"seed", a.seed},
                     {"logit_gain", a.logit_gain},
                     {"noise_sigma", noise},
                     {"sink_spec", sink_spec_to_json(sinks)},
                     {"images", {recipe.min_images, recipe.max_images}},
                     {"image_len", {recipe.min_image_len, recipe.max_image_len}},
                     {"text_len", {recipe.min_text_len, recipe.max_text_len}},
                     {"pattern", a.pattern}};
  gen_capture(plan, a.out, a.force, config);
  out << "wrote " << a.prompts << " synthetic prompt(s) to " << a.out << "\n";
  return kExitOk;
}

struct SinkfindArgs {
  std::string capture;
  double top_frac = 0.1;
  std::size_t image_len = 0;  // 0: take it from the first image
  std::string base = "causal_bidirectional_images";
  std::string out;
  bool force = false;
};

int cmd_sinkfind(const SinkfindArgs& a, const Common& common, std::ostream& out) {
  const CaptureReader reader(a.capture);
  SinkFinderConfig cfg;
  cfg.top_fraction = a.top_frac;
  cfg.base = base_visibility_from_string(a.base);
  cfg.uniform_image_len = a.image_len;
  if (cfg.uniform_image_len == 0) {
    for (std::size_t i = 0; i < reader.size() && cfg.uniform_image_len == 0; ++i) {
      const auto images = reader.entry(i).layout.images();
      if (!images.empty()) cfg.uniform_image_len = images.front().length();
    }
    if (cfg.uniform_image_len == 0) throw Error(ErrorCode::kInvalidArgument, "capture contains no images");
  }
  const auto result = find_sink_offsets(reader, cfg, common.jobs);
  auto doc = sink_result_to_json(result);
  doc["config"] = {{"command", "sinkfind"},
                   {"top_fraction", cfg.top_fraction},
                   {"uniform_image_len", cfg.uniform_image_len},
                   {"base", to_string(cfg.base)}};
  const auto text = json_text(doc);
  if (a.out.empty() || a.out == "-") {
    out << text;
  } else {
    commit({{a.out, text}}, a.force);
  }
  return kExitOk;
}

template <typename T>
CLI::Option* add_choice(CLI::App* app, const std::string& name, T& target, std::vector<std::string> choices,
                        const std::string& desc) {
  return app->add_option(name, target, desc)->check(CLI::IsMember(std::move(choices)))->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Template-derived sparse attention masks for interleaved image/text prompts", "blindsight"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; command line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Common common;
  common.jobs = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BLINDSIGHT_JOBS"); env != nullptr && *env != '\0') {
    const std::string_view text(env);
    std::size_t jobs = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), jobs);
    if (ec != std::errc{} || p != text.data() + text.size() || jobs == 0) {
      err << "blindsight: BLINDSIGHT_JOBS must be a positive integer, got '" << text << "'\n";
      return kExitInput;
    }
    common.jobs = jobs;
  }
  app.add_option("-j,--jobs", common.jobs, "Worker threads (default: $BLINDSIGHT_JOBS or all cores)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  const std::vector<std::string> mask_names = {"dense", "sink", "document", "document_sink", "document-sink"};
  const std::vector<std::string> base_names = {"causal", "causal_bidirectional_images", "bidirectional", "gemma"};

  CharacterizeArgs ch;
  auto* c_ch = app.add_subcommand("characterize", "Pick a mask per head for every prompt of a capture");
  c_ch->add_option("--capture", ch.capture, "Capture directory")->required();
  c_ch->add_option("-o,--out", ch.out, "Output directory for <prompt>.verdicts.json")->required();
  c_ch->add_option("--alpha", ch.alpha, "NMSE threshold")->capture_default_str();
  add_choice(c_ch, "--order", ch.order, {"paper_fixed", "paper", "fixed", "flops_ascending", "flops"},
             "Candidate order");
  c_ch->add_option("--sinks", ch.sinks, "prefix:<fraction> or offsets:<o1,o2,...>")->capture_default_str();
  add_choice(c_ch, "--base", ch.base, base_names, "Base visibility");
  c_ch->add_flag("--full-diagnostics", ch.full_diagnostics, "Evaluate every candidate");
  c_ch->add_flag("--force", ch.force, "Overwrite existing outputs");

  AggregateArgs ag;
  auto* c_ag = app.add_subcommand("aggregate", "Collapse per-prompt verdicts into a head map");
  c_ag->add_option("--verdicts", ag.verdicts, "Verdict files or directories")->required();
  c_ag->add_option("-o,--out", ag.out, "Output directory")->required();
  c_ag->add_option("--gamma-c", ag.gamma_c, "Dense veto threshold")->capture_default_str();
  c_ag->add_option("--gamma-s", ag.gamma_s, "Sink threshold")->capture_default_str();
  c_ag->add_option("--gamma-d", ag.gamma_d, "Document threshold")->capture_default_str();
  c_ag->add_flag("--force", ag.force, "Overwrite existing outputs");

  FlopsArgs fl;
  auto* c_fl = app.add_subcommand("flops", "Theoretical attention FLOPs reduction and CDF");
  auto* fl_map = c_fl->add_option("--headmap", fl.headmap, "Head map JSON");
  auto* fl_shares = c_fl->add_option("--shares", fl.shares, "dense=..,sink=..,document=..,document_sink=..");
  fl_map->excludes(fl_shares);
  auto* fl_layouts = c_fl->add_option("--layouts", fl.layouts, "Layouts JSON");
  auto* fl_capture = c_fl->add_option("--capture", fl.capture, "Capture directory (layouts only)");
  fl_layouts->excludes(fl_capture);
  c_fl->add_option("--sinks", fl.sinks, "Sink spec for the exact count (default: head map)");
  add_choice(c_fl, "--base", fl.base, base_names, "Base visibility (default: head map)");
  c_fl->add_flag("--exact", fl.exact, "Drive the report with exact cell counts");
  c_fl->add_option("-o,--out", fl.out, "Output directory")->required();
  c_fl->add_flag("--force", fl.force, "Overwrite existing outputs");

  MaskArgs mk;
  auto* c_mk = app.add_subcommand("mask", "Build one mask and print it as JSON or PBM");
  auto* mk_layout = c_mk->add_option("--layout", mk.layout, "Layout JSON file");
  auto* mk_segments = c_mk->add_option("--segments", mk.segments, "e.g. text:4,image:16,text:2");
  auto* mk_ids = c_mk->add_option("--token-ids", mk.token_ids, "Comma separated token ids");
  mk_layout->excludes(mk_segments)->excludes(mk_ids);
  mk_segments->excludes(mk_ids);
  c_mk->add_option("--image-start-id", mk.image_start_id, "Image start marker id")->needs(mk_ids);
  c_mk->add_option("--image-end-id", mk.image_end_id, "Image end marker id")->needs(mk_ids);
  add_choice(c_mk, "--type", mk.type, mask_names, "Mask type");
  c_mk->add_option("--sinks", mk.sinks, "prefix:<fraction> or offsets:<o1,o2,...>")->capture_default_str();
  add_choice(c_mk, "--base", mk.base, base_names, "Base visibility");
  add_choice(c_mk, "--emit", mk.emit, {"json", "pbm"}, "Output format");
  c_mk->add_option("--cap", mk.cap, "Materialization size cap")->capture_default_str();
  c_mk->add_option("-o,--out", mk.out, "Output file (default stdout)");
  c_mk->add_flag("--force", mk.force, "Overwrite an existing output");

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Write a synthetic capture with planted head patterns");
  c_sy->add_option("-o,--out", sy.out, "Capture directory")->required();
  c_sy->add_option("--model-name", sy.model_name)->capture_default_str();
  c_sy->add_option("--layers", sy.layers)->check(CLI::PositiveNumber)->capture_default_str();
  c_sy->add_option("--heads", sy.heads)->check(CLI::PositiveNumber)->capture_default_str();
  c_sy->add_option("--head-dim", sy.head_dim)->capture_default_str();
  c_sy->add_option("--prompts", sy.prompts)->capture_default_str();
  c_sy->add_option("--seed", sy.seed)->capture_default_str();
  c_sy->add_option("--logit-gain", sy.logit_gain)->capture_default_str();
  c_sy->add_option("--noise-sigma", sy.noise_sigma, "Logit noise std (default 0.1 * logit gain)");
  c_sy->add_option("--sinks", sy.sinks)->capture_default_str();
  c_sy->add_option("--images", sy.images, "Images per prompt, min:max")->capture_default_str();
  c_sy->add_option("--image-len", sy.image_len, "Tokens per image, min:max")->capture_default_str();
  c_sy->add_option("--text-len", sy.text_len, "Tokens per text gap, min:max")->capture_default_str();
  add_choice(c_sy, "--pattern", sy.pattern, {"random", "dense", "sink", "document", "document_sink", "document-sink"},
             "Planted pattern for every head");
  c_sy->add_flag("--force", sy.force, "Overwrite an existing capture");

  SinkfindArgs sf;
  auto* c_sf = app.add_subcommand("sinkfind", "Discover fixed sink offsets for fixed-length images");
  c_sf->add_option("--capture", sf.capture, "Capture directory")->required();
  c_sf->add_option("--top-frac", sf.top_frac, "Fraction of image offsets kept")->capture_default_str();
  c_sf->add_option("--image-len", sf.image_len, "Uniform image length (default: first image)");
  add_choice(c_sf, "--base", sf.base, base_names, "Base visibility");
  c_sf->add_option("-o,--out", sf.out, "Output file (default stdout)");
  c_sf->add_flag("--force", sf.force, "Overwrite an existing output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (c_fl->parsed()) {
      if (fl.headmap.empty() == fl.shares.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "flops needs exactly one of --headmap or --shares");
      }
      if (fl.layouts.empty() == fl.capture.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "flops needs exactly one of --layouts or --capture");
      }
      return cmd_flops(fl, out);
    }
    if (c_mk->parsed() && mk.layout.empty() && mk.segments.empty() && mk.token_ids.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "mask needs one of --layout, --segments or --token-ids");
    }
    if (c_ch->parsed()) return cmd_characterize(ch, common, out);
    if (c_ag->parsed()) return cmd_aggregate(ag, out);
    if (c_mk->parsed()) return cmd_mask(mk, out);
    if (c_sy->parsed()) return cmd_synth(sy, out);
    if (c_sf->parsed()) return cmd_sinkfind(sf, common, out);
  } catch (const Error& e) {
    err << "blindsight: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "blindsight: io: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "blindsight: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("blindsight");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace blindsight::cli
