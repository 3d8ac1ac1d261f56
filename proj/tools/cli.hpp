#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvnet/mvnet.hpp"

namespace mvnet::cli {

/// A file path, or a builtin name ("A0", "a2", "a0-stream").
inline NetworkSpec resolve_arch(const std::string &arg) {
  if (std::filesystem::exists(arg))
    return load_architecture(arg);
  std::string up = arg;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  const std::string suffix = "-STREAM";
  if (up.size() > suffix.size() && up.compare(up.size() - suffix.size(), suffix.size(), suffix) == 0)
    return make_streaming(builtin(up.substr(0, up.size() - suffix.size())));
  return builtin(up);
}

inline VideoTensor random_video(const Dims4 &d, std::uint64_t seed) {
  VideoTensor v(d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto &x : v.data())
    x = u(rng);
  return v;
}

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream o;
  o << std::setprecision(precision) << v;
  return o.str();
}

inline void print_result(std::ostream &out, const EvalResult &r) {
  out << "mode: " << r.mode << " clips=" << r.clips << " frames_per_clip=" << r.frames_per_clip
      << " fps=" << fmt(r.fps) << "\n";
  out << "top-" << r.top.size() << ":\n";
  for (const auto &[cls, p] : r.top)
    out << "  class " << cls << "  p=" << std::fixed << std::setprecision(6) << p << std::defaultfloat << "\n";
}

inline nlohmann::json report_json(const CostReport &r) {
  nlohmann::json j;
  j["network"] = r.network;
  j["video"] = {{"frames", r.video.frames}, {"size", r.video.size}, {"stride", r.video.tau},
                {"channels", r.video.channels}};
  j["total_macs"] = r.total_macs;
  j["total_params"] = r.total_params;
  j["gflops_per_video"] = r.gflops_per_video;
  auto rows = nlohmann::json::array();
  for (const auto &row : r.rows)
    rows.push_back({{"name", row.name},
                    {"output", {row.output.t, row.output.h, row.output.w, row.output.c}},
                    {"macs", row.macs},
                    {"params", row.params},
                    {"activation_bytes", row.activation_bytes}});
  j["rows"] = rows;
  auto modes = nlohmann::json::array();
  for (const auto &m : r.modes)
    modes.push_back({{"mode", m.mode}, {"gflops", m.gflops}, {"peak_memory_bytes", m.peak_memory_bytes}});
  j["modes"] = modes;
  return j;
}

inline void print_report(std::ostream &out, const CostReport &r, bool rows) {
  out << "network: " << r.network << "  video: " << r.video.frames << "x" << r.video.size << "^2 stride "
      << r.video.tau << "\n";
  if (rows) {
    out << std::left << std::setw(24) << "layer" << std::setw(20) << "output" << std::right << std::setw(14) << "MACs"
        << std::setw(10) << "params" << std::setw(14) << "act bytes" << "\n";
    for (const auto &row : r.rows)
      out << std::left << std::setw(24) << row.name << std::setw(20) << to_string(row.output) << std::right
          << std::setw(14) << row.macs << std::setw(10) << row.params << std::setw(14) << row.activation_bytes << "\n";
  }
  out << "total MACs: " << r.total_macs << "\n";
  out << "params: " << r.total_params << "\n";
  out << "GFLOPs per video: " << fmt(r.gflops_per_video, 4) << "\n";
  for (const auto &m : r.modes)
    out << "mode " << m.mode << ": " << fmt(m.gflops, 4) << " GFLOPs, peak memory " << m.peak_memory_bytes
        << " bytes\n";
}

struct Options {
  std::string arch, out_path;
  std::vector<std::string> positional;
  std::string mode = "single";
  std::size_t t_clip = 0, clips = 0, overlap = 0, t = 0, size = 0, count = 1, stride = 1, clip_stride = 0, top = 5;
  std::uint64_t seed = 0;
  bool have_seed = false, rows = false, json = false, single = false, multi = false, streaming = false;
  float tolerance = 1e-5f;
  double phi = 0.0;
  std::vector<std::string> ensemble;
  std::string report_path, space_path;
};

inline void describe(std::ostream &out, const NetworkSpec &spec) {
  out << "network " << spec.name << "\n";
  out << "input " << spec.video.frames << "x" << spec.video.size << "^2 stride " << spec.video.tau << " channels "
      << spec.video.channels << "\n";
  out << "stem conv " << spec.stem.kernel.time << "x" << spec.stem.kernel.space << "^2 width " << spec.stem.width
      << " stride 2\n";
  out << "stages " << spec.blocks.size() + 1 << " (stem + " << spec.blocks.size() << " blocks)\n";
  out << "blocks " << spec.blocks.size() << " depths (";
  for (std::size_t i = 0; i < spec.blocks.size(); ++i)
    out << (i ? "," : "") << spec.blocks[i].layers.size();
  out << ")\n";
  std::size_t res = strided_extent(spec.video.size, 2);
  for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi) {
    out << "block " << bi + 1 << "\n";
    for (std::size_t li = 0; li < spec.blocks[bi].layers.size(); ++li) {
      const auto &l = spec.blocks[bi].layers[li];
      res = strided_extent(res, l.stride);
      out << "  " << layer_path(bi, li) << " " << l.kernel.time << "x" << l.kernel.space << "^2 " << l.base << "/"
          << l.expand << " stride " << l.stride << " se " << to_string(l.se) << (l.causal ? " causal" : "")
          << (l.se == SeMode::Causal && l.pos_enc ? " posenc" : "") << " -> " << res << "^2\n";
    }
  }
  out << "head conv " << spec.head.conv_width << " hidden " << spec.head.hidden_width << " classes "
      << spec.head.classes << "\n";
  std::uint64_t params = 0;
  for (const auto &slot : parameter_layout(spec)) {
    std::uint64_t n = 1;
    for (auto d : slot.dims)
      n *= d;
    params += n;
  }
  out << "params " << params << "\n";
  out << "GFLOPs " << fmt(network_flops(spec), 4) << "\n";
  if (auto b = streaming_blocker(spec))
    out << "streamable no (" << b->first << ": " << b->second << ")\n";
  else
    out << "streamable yes\n";
}

inline Weights weights_for(const NetworkSpec &spec, const std::string &path, const Options &o) {
  if (o.have_seed)
    return init_random_weights(spec, o.seed);
  auto w = load_weights(path);
  check_weights(spec, w);
  return w;
}

/// Runs one CLI invocation. Exit codes: 0 success, 1 domain error, 2 usage error.
inline int cli_main(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Streaming 3D-CNN video inference engine", "mvnet"};
  app.require_subcommand(1);
  Options o;

  auto *describe_cmd = app.add_subcommand("describe", "Print an architecture's layers, parameters and FLOPs");
  describe_cmd->add_option("arch", o.arch, "Architecture file or builtin name")->required();

  auto *cost_cmd = app.add_subcommand("cost", "Analytical FLOPs and peak memory");
  cost_cmd->add_option("arch", o.arch)->required();
  cost_cmd->add_option("--mode", o.mode, "single|multi|stream")->check(CLI::IsMember({"single", "multi", "stream"}));
  cost_cmd->add_option("--t-clip", o.t_clip, "Frames per clip (multi, stream)");
  cost_cmd->add_option("--clips", o.clips, "Number of clips (multi); 0 covers the video");
  cost_cmd->add_option("--overlap", o.overlap, "Frames shared by consecutive clips (multi)");
  cost_cmd->add_option("--t", o.t, "Total frames (default: the architecture's)");
  cost_cmd->add_option("--size", o.size, "Frame size (default: the architecture's)");
  cost_cmd->add_flag("--rows", o.rows, "Print per-layer rows");
  cost_cmd->add_flag("--json", o.json, "Print the report as JSON");
  cost_cmd->add_option("--report", o.report_path, "Also write the JSON report to this file");

  auto *infer_cmd = app.add_subcommand("infer", "Classify a video tensor");
  infer_cmd->add_option("args", o.positional, "<arch> [weights] <tensor>")->required()->expected(2, 3);
  infer_cmd->add_option("--random-seed", o.seed, "Use seeded random weights instead of a file");
  auto *single_flag = infer_cmd->add_flag("--single-clip", o.single, "One pass over the strided video (default)");
  auto *multi_flag = infer_cmd->add_flag("--multi-clip", o.multi, "Average logits over several windows");
  auto *ens_opt = infer_cmd->add_option("--ensemble", o.ensemble, "<arch2> <weights2>: temporal ensemble")
                      ->expected(2);
  single_flag->excludes(multi_flag)->excludes(ens_opt);
  multi_flag->excludes(ens_opt);
  infer_cmd->add_option("--stride", o.stride, "Temporal stride (single clip)")->check(CLI::PositiveNumber);
  infer_cmd->add_option("--clips", o.clips, "Number of windows (multi clip)");
  infer_cmd->add_option("--t-clip", o.t_clip, "Window length (multi clip)");
  infer_cmd->add_option("--clip-stride", o.clip_stride, "Frames between window starts (multi clip)");
  infer_cmd->add_option("--top", o.top, "Number of classes to list");

  auto *stream_cmd = app.add_subcommand("stream", "Stream a video tensor through a causal network");
  stream_cmd->add_option("args", o.positional, "<arch> [weights] <tensor>")->required()->expected(2, 3);
  stream_cmd->add_option("--random-seed", o.seed, "Use seeded random weights instead of a file");
  stream_cmd->add_option("--t-clip", o.t_clip, "Frames per push")->required()->check(CLI::PositiveNumber);
  stream_cmd->add_option("--top", o.top, "Number of classes to list");

  auto *verify_cmd = app.add_subcommand("verify-equivalence", "Compare streaming and offline outputs");
  verify_cmd->add_option("arch", o.arch)->required();
  verify_cmd->add_option("--seed", o.seed, "Seed for weights and video");
  verify_cmd->add_option("--t", o.t, "Frames (default 16)");
  verify_cmd->add_option("--size", o.size, "Frame size (default: the architecture's)");
  verify_cmd->add_option("--tolerance", o.tolerance, "Max allowed |logit delta|");

  auto *sample_cmd = app.add_subcommand("sample-space", "Scale the search space and sample architectures");
  sample_cmd->add_option("--phi", o.phi, "Compound scaling exponent");
  sample_cmd->add_option("--seed", o.seed, "First sampler seed");
  sample_cmd->add_option("--count", o.count, "Number of samples");
  sample_cmd->add_option("--space", o.space_path, "Search-space file (default: the builtin base space)");
  sample_cmd->add_flag("--streaming", o.streaming, "Sample causal streaming variants");

  auto *init_cmd = app.add_subcommand("init-weights", "Write seeded random weights for an architecture");
  init_cmd->add_option("arch", o.arch)->required();
  init_cmd->add_option("--seed", o.seed);
  init_cmd->add_option("-o,--output", o.out_path)->required();

  auto *video_cmd = app.add_subcommand("random-video", "Write a seeded random video tensor");
  video_cmd->add_option("--t", o.t, "Frames")->required();
  video_cmd->add_option("--size", o.size, "Frame size")->required();
  video_cmd->add_option("--seed", o.seed);
  video_cmd->add_option("-o,--output", o.out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    const auto *sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }
  o.have_seed = infer_cmd->count("--random-seed") + stream_cmd->count("--random-seed") > 0;

  try {
    if (*describe_cmd) {
      describe(out, resolve_arch(o.arch));
    } else if (*cost_cmd) {
      auto spec = resolve_arch(o.arch);
      if (o.mode == "stream" && !is_streamable(spec)) {
        spec = make_streaming(spec);
        err << "note: " << o.arch << " is not causal; costing its streaming variant " << spec.name << "\n";
      }
      VideoSpec video = spec.video;
      if (o.t)
        video.frames = o.t;
      if (o.size)
        video.size = o.size;
      std::vector<EvalMode> modes;
      if (o.mode == "single")
        modes.push_back(EvalMode::single());
      else if (o.mode == "multi")
        modes.push_back(EvalMode::multi(o.t_clip ? o.t_clip : video.frames, o.clips, o.overlap));
      else
        modes.push_back(EvalMode::streaming(o.t_clip ? o.t_clip : 1));
      const auto report = cost_report(spec, video, modes);
      if (o.json)
        out << report_json(report).dump(2) << "\n";
      else
        print_report(out, report, o.rows);
      if (!o.report_path.empty()) {
        std::ofstream f(o.report_path);
        f << report_json(report).dump(2) << "\n";
        if (!f)
          throw Error("cannot write " + o.report_path);
      }
    } else if (*infer_cmd || *stream_cmd) {
      const bool has_weights = o.positional.size() == 3;
      if (has_weights == o.have_seed)
        throw CLI::ValidationError("give either a weights file or --random-seed, not both or neither");
      const auto spec = resolve_arch(o.positional[0]);
      const auto weights = weights_for(spec, has_weights ? o.positional[1] : "", o);
      const auto video = load_video_tensor(o.positional.back());
      if (*infer_cmd) {
        const auto net = CompiledNetwork::build(spec, weights);
        EvalResult r;
        if (!o.ensemble.empty()) {
          const auto spec2 = resolve_arch(o.ensemble[0]);
          auto w2 = load_weights(o.ensemble[1]);
          check_weights(spec2, w2);
          r = eval_temporal_ensemble(net, CompiledNetwork::build(spec2, w2), video, 1);
        } else if (o.multi) {
          const std::size_t t_clip = o.t_clip ? o.t_clip : video.frames();
          const std::size_t n = o.clips ? o.clips : 1;
          r = eval_multi_clip(net, video, n, t_clip, o.clip_stride ? o.clip_stride : t_clip);
        } else {
          r = eval_single_clip(net, video, o.stride);
        }
        r.top = top_k(r.probabilities, o.top);
        print_result(out, r);
      } else {
        StreamingSession session(spec, weights);
        const auto plan = ClipPlan::fixed(o.t_clip, video.frames());
        std::size_t start = 0;
        for (auto n : plan.chunks) {
          const auto logits = session.push(slice_frames(video, start, n));
          for (std::size_t i = 0; i < logits.size(); ++i) {
            const auto top = top_k(softmax(logits[i]), 1);
            out << "frame " << start + i << " top1 " << top[0].first << " p=" << fmt(top[0].second) << "\n";
          }
          start += n;
        }
        auto r = make_result(session.predict(), "streaming", plan.chunks.size(), o.t_clip,
                             static_cast<double>(spec.video.tau), o.top);
        out << "state bytes: " << session.state_bytes() << "\n";
        print_result(out, r);
      }
    } else if (*verify_cmd) {
      const auto spec = resolve_arch(o.arch);
      const std::size_t t = o.t ? o.t : 16;
      const std::size_t size = o.size ? o.size : spec.video.size;
      const auto weights = init_exercised_weights(spec, o.seed);
      const auto video = random_video({t, size, size, spec.video.channels}, o.seed);
      std::vector<ClipPlan> plans{ClipPlan::fixed(1, t), ClipPlan::fixed(2, t), ClipPlan::fixed(t, t)};
      ClipPlan growing;
      for (std::size_t done = 0, n = 3; done < t; done += n, n += 2)
        growing.chunks.push_back(std::min(n, t - done));
      plans.push_back(growing);
      NetworkSpec sized = spec;
      sized.video.size = size;
      const auto report = verify_equivalence(sized, weights, video, plans, o.tolerance);
      out << "network " << spec.name << " T=" << t << " S=" << size << " seed=" << o.seed
          << " tolerance=" << fmt(o.tolerance) << "\n";
      for (const auto &p : report.plans)
        out << (p.pass ? "PASS " : "FAIL ") << p.label << " max_frame_delta=" << fmt(p.max_frame_delta)
            << " clip_delta=" << fmt(p.clip_delta) << "\n";
      out << (report.pass() ? "equivalent" : "NOT equivalent") << "\n";
      return report.pass() ? 0 : 1;
    } else if (*sample_cmd) {
      const auto base = o.space_path.empty() ? base_search_space() : parse_search_space([&] {
        const auto bytes = io::read_file(o.space_path);
        return std::string(bytes.begin(), bytes.end());
      }());
      const auto space = scale_search_space(base, o.phi);
      out << format_search_space(space);
      for (const auto &c : space.clamped)
        out << "# clamped " << c << "\n";
      for (std::size_t i = 0; i < o.count; ++i) {
        const auto spec = sample_architecture(space, o.seed + i, o.streaming);
        out << "\n" << format_architecture(spec);
        out << "# GFLOPs " << fmt(network_flops(spec), 4) << "\n";
      }
    } else if (*init_cmd) {
      const auto spec = resolve_arch(o.arch);
      save_weights(o.out_path, init_random_weights(spec, o.seed));
      out << "wrote " << o.out_path << "\n";
    } else if (*video_cmd) {
      save_video_tensor(o.out_path, random_video({o.t, o.size, o.size, 3}, o.seed));
      out << "wrote " << o.out_path << "\n";
    }
  } catch (const CLI::ValidationError &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace mvnet::cli
