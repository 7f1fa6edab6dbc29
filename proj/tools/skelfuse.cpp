// skelfuse: simulate camera networks, track skeletons, evaluate against truth.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "skelfuse/eval.hpp"
#include "skelfuse/pipeline.hpp"
#include "skelfuse/sim.hpp"

namespace fs = std::filesystem;
using namespace skelfuse;

namespace {

void init_logging() {
  spdlog::set_default_logger(spdlog::stderr_logger_mt("skelfuse"));
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("SKELFUSE_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(lvl));
  }
}

PipelineConfig resolve_config(const std::string& path, const Extrinsics& extrinsics) {
  if (path.empty()) return {};
  LoadedConfig loaded = load_pipeline_config(path);
  if (loaded.calibrate_from) {
    std::vector<SkeletonDetection> dets;
    for (const DetectionBatch& b : read_stream_file(*loaded.calibrate_from)) {
      const DetectionBatch g = extrinsics.count(b.camera_id) ? ingest_batch(b, extrinsics) : b;
      dets.insert(dets.end(), g.detections.begin(), g.detections.end());
    }
    loaded.pipeline.fusion.sigma_r2 = calibrate_sigma_r(dets);
    spdlog::info("calibrated sigma_r^2 = {:.6g} from {}", loaded.pipeline.fusion.sigma_r2,
                 loaded.calibrate_from->string());
  }
  return loaded.pipeline;
}

eval::Replay parse_replay(const std::string& s) {
  if (s == "merged") return eval::Replay::Merged;
  if (s == "jitter") return eval::Replay::Jitter;
  throw std::invalid_argument("unknown replay mode '" + s + "' (expected merged or jitter)");
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size() || v == 0) throw std::invalid_argument("bad camera count '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("no camera counts given");
  return out;
}

void write_timing_csv(std::ostream& out, const std::vector<std::tuple<std::string, std::string, std::size_t,
                                                                       eval::TimingReport>>& rows) {
  out << "sequence,variant,camera_count,batches,association_mean_ms,association_p95_ms,fusion_mean_ms,"
         "fusion_p95_ms,consistency_mean_ms,consistency_p95_ms,other_mean_ms,other_p95_ms,total_mean_ms,"
         "total_p95_ms,per_subject_ms,fps_1,fps_2,fps_3,fps_4,fps_5,fps_6\n";
  for (const auto& [seq, var, cams, r] : rows) {
    out << fmt::format("{},{},{},{},{:.5f},{:.5f},{:.5f},{:.5f},{:.5f},{:.5f},{:.5f},{:.5f},{:.5f},{:.5f},{:.5f}", seq,
                       var, cams, r.batches, r.association.mean_ms, r.association.p95_ms, r.fusion.mean_ms,
                       r.fusion.p95_ms, r.consistency.mean_ms, r.consistency.p95_ms, r.other.mean_ms, r.other.p95_ms,
                       r.total.mean_ms, r.total.p95_ms, r.per_subject_ms);
    for (double f : r.fps_by_subjects) out << fmt::format(",{:.1f}", f);
    out << '\n';
  }
}

int cmd_simulate(const std::string& scene_name, std::uint64_t seed, const std::string& out_dir, std::size_t cameras) {
  sim::Scene scene = sim::resolve_scene(scene_name);
  if (cameras > 0) scene = sim::with_node_count(scene, cameras);
  const auto generated = sim::generate_scene(scene, seed);
  const auto paths = sim::write_scene_outputs(out_dir, scene, generated);
  spdlog::info("wrote {} stream files, truth.txt and extrinsics.json to {}", paths.size(), out_dir);
  return 0;
}

int cmd_track(const std::vector<std::string>& streams, const std::string& extrinsics_path,
              const std::string& config_path, const std::string& variant, const std::string& replay,
              std::uint64_t replay_seed, const std::string& out_path, const std::string& timing_path) {
  const Extrinsics extrinsics = read_extrinsics_file(extrinsics_path);
  PipelineConfig cfg = resolve_config(config_path, extrinsics);
  cfg.variant = parse_variant(variant);
  std::vector<std::vector<DetectionBatch>> data;
  for (const std::string& s : streams) data.push_back(read_stream_file(s));
  const auto batches = parse_replay(replay) == eval::Replay::Merged
                           ? merge_by_timestamp(data)
                           : merge_with_arrival_jitter(data, 0.05, replay_seed);
  const TrackingRun run = run_tracker(cfg, batches, extrinsics);
  write_track_frames_file(out_path, run.frames);
  spdlog::info("{} batches -> {} track frames ({} tracks with >= 30 frames)", batches.size(), run.frames.size(),
               eval::long_lived_tracks(run.frames, 30));
  if (!timing_path.empty()) {
    std::ofstream t(timing_path);
    write_timing_csv(t, {{"-", std::string(to_string(cfg.variant)), streams.size(), eval::timing_report(run.timings)}});
  }
  return 0;
}

int cmd_evaluate(const std::string& tracks_path, const std::string& truth_path, const std::string& out_path,
                 const std::string& sequence, const std::string& variant, std::size_t cameras) {
  const auto frames = read_track_frames_file(tracks_path);
  const auto truth = sim::read_truth_file(truth_path);
  const auto reports = eval::evaluate(frames, truth);
  const double duration =
      truth.samples.empty() ? 0.0 : truth.samples.back().timestamp - truth.samples.front().timestamp;
  std::vector<eval::CsvRow> rows;
  for (const auto& r : reports) {
    rows.push_back({sequence, variant, cameras, r.subject_id, r.e_avg, r.e_sd, r.mpjpe, eval::output_rate(r, duration)});
    spdlog::info("subject {}: tracks {} frames {} e_avg {:.4f} m e_sd {:.4f} m mpjpe {:.4f} m", r.subject_id,
                 fmt::join(r.track_ids, "/"), r.frames, r.e_avg, r.e_sd, r.mpjpe);
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  eval::write_csv(out, rows);
  return 0;
}

struct BenchCell {
  std::string sequence;
  Variant variant;
  std::size_t cameras;
  std::uint64_t seed;
};

int cmd_bench(const std::vector<std::string>& scenes, const std::vector<std::string>& variants,
              const std::string& cameras, std::uint64_t seed, std::size_t seeds, const std::string& config_path,
              const std::string& out_dir, std::size_t jobs) {
  const auto counts = parse_counts(cameras);
  std::vector<Variant> vs;
  for (const auto& v : variants) vs.push_back(parse_variant(v));
  const PipelineConfig base = resolve_config(config_path, {});
  fs::create_directories(out_dir);

  struct SceneData {
    std::string name;
    std::uint64_t seed;
    sim::GeneratedScene generated;
  };
  std::vector<SceneData> data;
  for (const std::string& name : scenes) {
    const sim::Scene scene = sim::resolve_scene(name);
    const std::size_t max_count = *std::max_element(counts.begin(), counts.end());
    if (max_count > scene.nodes.size()) {
      throw std::invalid_argument(fmt::format("scene {} has only {} nodes", name, scene.nodes.size()));
    }
    for (std::size_t s = 0; s < seeds; ++s) {
      spdlog::debug("generating {} seed {}", name, seed + s);
      data.push_back({scene.name.empty() ? name : scene.name, seed + s, sim::generate_scene(scene, seed + s)});
    }
  }

  struct CellResult {
    std::vector<eval::CsvRow> rows;
    eval::TimingReport timing;
    std::string label;
    std::size_t cameras;
    Variant variant;
  };
  std::vector<std::function<CellResult()>> tasks;
  for (const SceneData& d : data) {
    const std::string label = seeds > 1 ? fmt::format("{}/seed={}", d.name, d.seed) : d.name;
    for (std::size_t k : counts) {
      for (Variant v : vs) {
        tasks.push_back([&d, label, k, v, &base]() {
          sim::GeneratedScene sub;
          sub.truth = d.generated.truth;
          sub.streams.assign(d.generated.streams.begin(),
                             d.generated.streams.begin() + static_cast<std::ptrdiff_t>(k));
          sub.extrinsics = d.generated.extrinsics;
          PipelineConfig cfg = base;
          cfg.variant = v;
          const auto res = eval::run_experiment(sub, cfg);
          CellResult out{{}, eval::timing_report(res.run.timings), label, k, v};
          for (const auto& r : res.reports) {
            out.rows.push_back({label, std::string(to_string(v)), k, r.subject_id, r.e_avg, r.e_sd, r.mpjpe,
                                eval::output_rate(r, res.sequence_duration)});
          }
          return out;
        });
      }
    }
  }

  std::vector<CellResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr error;
  for (std::size_t w = 0; w < std::max<std::size_t>(jobs, 1); ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          results[i] = tasks[i]();
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<eval::CsvRow> rows;
  std::vector<std::tuple<std::string, std::string, std::size_t, eval::TimingReport>> timing_rows;
  for (const CellResult& c : results) {
    rows.insert(rows.end(), c.rows.begin(), c.rows.end());
    timing_rows.emplace_back(c.label, std::string(to_string(c.variant)), c.cameras, c.timing);
  }
  {
    std::ofstream out(fs::path(out_dir) / "bench.csv");
    eval::write_csv(out, rows);
  }
  {
    std::ofstream out(fs::path(out_dir) / "timing.csv");
    write_timing_csv(out, timing_rows);
  }
  std::cout << fmt::format("{:<28} {:<15} {:>4} {:>4} {:>10} {:>10} {:>10}\n", "sequence", "variant", "cams", "subj",
                           "e_avg_m", "e_sd_m", "mpjpe_m");
  for (const auto& r : rows) {
    std::cout << fmt::format("{:<28} {:<15} {:>4} {:>4} {:>10.4f} {:>10.4f} {:>10.4f}\n", r.sequence, r.variant,
                             r.camera_count, r.subject, r.e_avg_m, r.e_sd_m, r.mpjpe_m);
  }
  spdlog::info("wrote {} and {}", (fs::path(out_dir) / "bench.csv").string(),
               (fs::path(out_dir) / "timing.csv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Multi-camera skeleton fusion: simulate, track, evaluate, bench"};
  app.require_subcommand(1);

  std::string scene, out, config, variant = "full", extrinsics, replay = "merged", tracks, truth, timing;
  std::string sequence = "-", cameras_list = "2,3,4";
  std::uint64_t seed = 1, replay_seed = 0;
  std::size_t cameras = 0, seeds = 1, jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::string> streams, scenes, variants;

  auto* sim_cmd = app.add_subcommand("simulate", "Generate detection streams and ground truth for a scene");
  sim_cmd->add_option("--scene", scene, "Preset name or scene config file")->required();
  sim_cmd->add_option("--seed", seed, "Random seed");
  sim_cmd->add_option("--out", out, "Output directory")->required();
  sim_cmd->add_option("--cameras", cameras, "Use only the first N nodes");

  auto* track_cmd = app.add_subcommand("track", "Fuse detection streams into skeleton tracks");
  track_cmd->add_option("--streams", streams, "Detection stream files")->required()->check(CLI::ExistingFile);
  track_cmd->add_option("--extrinsics", extrinsics, "Extrinsics file")->required()->check(CLI::ExistingFile);
  track_cmd->add_option("--config", config, "Pipeline config file")->check(CLI::ExistingFile);
  track_cmd->add_option("--variant", variant, "full|no-consistency|no-outlier|no-confidence|maf|raw");
  track_cmd->add_option("--replay", replay, "merged|jitter");
  track_cmd->add_option("--replay-seed", replay_seed, "Seed for jitter replay");
  track_cmd->add_option("--out", out, "Output track-frames file")->required();
  track_cmd->add_option("--timing", timing, "Optional timing CSV");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score track frames against ground truth");
  eval_cmd->add_option("--tracks", tracks, "Track-frames file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", truth, "Ground-truth file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", out, "Report CSV")->required();
  eval_cmd->add_option("--sequence", sequence, "Sequence label for the report");
  eval_cmd->add_option("--variant", variant, "Variant label for the report");
  eval_cmd->add_option("--cameras", cameras, "Camera count label for the report");

  auto* bench_cmd = app.add_subcommand("bench", "Variant x camera-count matrix over scenes");
  scenes = {"static-1", "oscillate-1", "walk-slow-1", "walk-fast-1", "walk-slow-2", "walk-fast-2"};
  for (Variant v : kAllVariants) variants.emplace_back(to_string(v));
  bench_cmd->add_option("--scene", scenes, "Presets or scene files (repeatable)");
  bench_cmd->add_option("--variant", variants, "Variants (repeatable)");
  bench_cmd->add_option("--cameras", cameras_list, "Comma-separated camera counts");
  bench_cmd->add_option("--seed", seed, "First seed");
  bench_cmd->add_option("--seeds", seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--config", config, "Pipeline config file")->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", out, "Output directory")->required();
  bench_cmd->add_option("--jobs", jobs, "Worker threads");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim_cmd) return cmd_simulate(scene, seed, out, cameras);
    if (*track_cmd) return cmd_track(streams, extrinsics, config, variant, replay, replay_seed, out, timing);
    if (*eval_cmd) return cmd_evaluate(tracks, truth, out, sequence, variant, cameras);
    if (*bench_cmd) return cmd_bench(scenes, variants, cameras_list, seed, seeds, config, out, jobs);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
