#include "skelfuse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace skelfuse {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kVariantNames = {"full", "no-consistency", "no-outlier",
                                                           "no-confidence", "maf", "raw"};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Reads `obj[key]` into `dst` when present; rejects keys not listed.
class Section {
 public:
  Section(const json& obj, std::string name) : obj_(obj), name_(std::move(name)) {
    if (!obj_.is_object()) throw std::invalid_argument("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  Section& read(const char* key, T& dst) {
    known_.insert(key);
    if (!obj_.contains(key)) return *this;
    try {
      dst = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(fmt::format("config key '{}.{}': {}", name_, key, e.what()));
    }
    return *this;
  }

  void reject_unknown() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!known_.count(key)) throw std::invalid_argument(fmt::format("unknown config key '{}.{}'", name_, key));
    }
  }

 private:
  const json& obj_;
  std::string name_;
  std::set<std::string> known_;
};

}  // namespace

std::string_view to_string(Variant v) { return kVariantNames.at(static_cast<std::size_t>(v)); }

Variant parse_variant(std::string_view name) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i) {
    if (kVariantNames[i] == name) return static_cast<Variant>(i);
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected full, no-consistency, no-outlier, no-confidence, maf, raw)");
}

PipelineConfig PipelineConfig::for_variant(Variant v) const {
  PipelineConfig out = *this;
  out.variant = v;
  switch (v) {
    case Variant::NoConsistency: out.consistency.enabled = false; break;
    case Variant::NoOutlier: out.fusion.use_outlier = false; break;
    case Variant::NoConfidence: out.fusion.use_confidence = false; break;
    default: break;
  }
  return out;
}

LoadedConfig parse_pipeline_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  LoadedConfig out;
  PipelineConfig& p = out.pipeline;
  for (const auto& [key, _] : doc.items()) {
    if (key != "association" && key != "fusion" && key != "consistency" && key != "baseline") {
      throw std::invalid_argument("unknown config section '" + key + "'");
    }
  }
  if (doc.contains("association")) {
    Section s(doc["association"], "association");
    s.read("gate_epsilon", p.association.gate_epsilon)
        .read("track_timeout_s", p.association.track_timeout_s)
        .read("init_velocity_sigma", p.association.init_velocity_sigma)
        .read("centroid_process_noise", p.association.centroid_process_noise)
        .read("centroid_measurement_variance", p.association.centroid_measurement_variance)
        .reject_unknown();
  }
  if (doc.contains("fusion")) {
    Section s(doc["fusion"], "fusion");
    std::string calibrate_from;
    s.read("sigma_q2", p.fusion.sigma_q2)
        .read("sigma_r2", p.fusion.sigma_r2)
        .read("calibrate_from", calibrate_from)
        .read("dt", p.fusion.dt)
        .read("confidence_floor", p.fusion.confidence_floor)
        .read("outlier_window", p.fusion.outlier_window)
        .read("outlier_multiplier", p.fusion.outlier_multiplier)
        .read("outlier_max_consecutive", p.fusion.outlier_max_consecutive)
        .read("max_inflation", p.fusion.max_inflation)
        .reject_unknown();
    if (!calibrate_from.empty()) {
      std::filesystem::path path(calibrate_from);
      out.calibrate_from = path.is_relative() ? base_dir / path : path;
    }
  }
  if (doc.contains("consistency")) {
    Section s(doc["consistency"], "consistency");
    s.read("enabled", p.consistency.enabled)
        .read("orientation_weight", p.consistency.orientation_weight)
        .read("length_alpha", p.consistency.length_alpha)
        .read("init_frames", p.consistency.init_frames)
        .read("lm_max_iters", p.consistency.lm.max_iterations)
        .read("lm_tol", p.consistency.lm.step_tolerance)
        .reject_unknown();
  }
  if (doc.contains("baseline")) {
    Section(doc["baseline"], "baseline").read("maf_window", p.maf_window).reject_unknown();
  }
  p.association.init_velocity_sigma = std::max(p.association.init_velocity_sigma, 0.0);
  p.fusion.init_velocity_sigma = p.association.init_velocity_sigma;
  p.fusion.validate();
  if (!(p.association.gate_epsilon > 0.0)) throw std::invalid_argument("association.gate_epsilon must be > 0");
  if (p.maf_window < 1) throw std::invalid_argument("baseline.maf_window must be >= 1");
  if (p.consistency.init_frames < 1) throw std::invalid_argument("consistency.init_frames must be >= 1");
  return out;
}

LoadedConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str(), path.parent_path());
}

// --- Baselines -------------------------------------------------------------------

MovingAverageFilter::MovingAverageFilter(std::size_t window) : window_(window) {
  if (window_ < 1) throw std::invalid_argument("moving average window must be >= 1");
}

SkeletonPose MovingAverageFilter::push(const SkeletonDetection& detection) {
  SkeletonPose out;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    auto& h = history_[i];
    if (detection.joints[i]) {
      h.push_back(detection.joints[i]->position);
      if (h.size() > window_) h.pop_front();
    }
    if (h.empty()) continue;
    Vec3 sum = Vec3::Zero();
    for (const Vec3& p : h) sum += p;
    out.joints[i] = sum / static_cast<double>(h.size());
  }
  return out;
}

std::vector<SkeletonPose> baseline_maf(std::span<const SkeletonDetection> detections, std::size_t window) {
  MovingAverageFilter f(window);
  std::vector<SkeletonPose> out;
  out.reserve(detections.size());
  for (const SkeletonDetection& d : detections) out.push_back(f.push(d));
  return out;
}

// --- Tracker -----------------------------------------------------------------------

Tracker::Tracker(PipelineConfig cfg) : cfg_(cfg.for_variant(cfg.variant)) {
  cfg_.fusion.init_velocity_sigma = cfg_.association.init_velocity_sigma;
  cfg_.fusion.validate();
}

std::vector<int> Tracker::live_track_ids() const {
  std::vector<int> ids;
  for (const Track& t : tracks_) ids.push_back(t.id);
  return ids;
}

Tracker::Track Tracker::spawn(const SkeletonDetection& det) {
  Track t;
  t.id = next_id_++;
  t.centroid = CentroidFilter::initialize(centroid(det.pose()), det.timestamp, cfg_.fusion.sigma_r2,
                                          cfg_.association.init_velocity_sigma);
  t.last_seen = det.timestamp;
  t.fusion = TrackState::initialize(t.id, det, cfg_.fusion);
  t.length_init = LengthInitializer(cfg_.consistency.init_frames);
  if (cfg_.variant == Variant::Maf) t.maf.emplace(cfg_.maf_window);
  return t;
}

TrackFrame Tracker::advance(Track& track, const SkeletonDetection& det, BatchTiming& timing) {
  TrackFrame frame;
  frame.timestamp = det.timestamp;
  frame.track_id = track.id;
  for (std::size_t i = 0; i < kNumJoints; ++i) frame.flags[i] = det.joints[i] ? 'A' : 'S';

  const auto t0 = Clock::now();
  if (cfg_.variant == Variant::Raw) {
    for (std::size_t i = 0; i < kNumJoints; ++i) {
      if (det.joints[i]) track.last_raw.joints[i] = det.joints[i]->position;
    }
    frame.pose = track.last_raw;
    timing.fusion_s += seconds_since(t0);
    return frame;
  }
  if (cfg_.variant == Variant::Maf) {
    frame.pose = track.maf->push(det);
    timing.fusion_s += seconds_since(t0);
    return frame;
  }

  UpdateResult res = update(track.fusion, det, cfg_.fusion);
  track.fusion = std::move(res.track);
  for (std::size_t i = 0; i < kNumJoints; ++i) frame.flags[i] = static_cast<char>(res.report.joints[i].status);
  const SkeletonPose filtered = track.fusion.pose_at(det.timestamp);
  frame.pose = filtered;
  timing.fusion_s += seconds_since(t0);

  if (!cfg_.consistency.enabled) return frame;
  const auto t1 = Clock::now();
  const BodyModel& model = BodyModel::standard();
  const bool clean = res.report.clean();
  if (!track.lengths.initialized) {
    if (clean && track.length_init.add(filtered, model)) track.lengths = track.length_init.result();
  } else {
    frame.pose = enforce_consistency(filtered, track.lengths, model, cfg_.consistency).pose;
    if (clean) track.lengths = update_lengths(track.lengths, filtered, model, cfg_.consistency.length_alpha);
  }
  timing.consistency_s += seconds_since(t1);
  return frame;
}

std::vector<TrackFrame> Tracker::process(const DetectionBatch& batch) {
  const auto start = Clock::now();
  BatchTiming timing;
  timing.detections = batch.detections.size();
  const double t = batch.timestamp;

  std::erase_if(tracks_, [&](const Track& tr) { return t - tr.last_seen > cfg_.association.track_timeout_s; });
  std::vector<Vec3> centroids;
  centroids.reserve(batch.detections.size());
  for (const SkeletonDetection& d : batch.detections) centroids.push_back(centroid(d.pose()));

  auto mark = Clock::now();
  CostMatrix costs(static_cast<Eigen::Index>(tracks_.size()), static_cast<Eigen::Index>(centroids.size()));
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    for (std::size_t j = 0; j < centroids.size(); ++j) {
      costs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          association_cost(tracks_[i].centroid, centroids[j], t, cfg_.association);
    }
  }
  const Assignment assignment = solve_assignment(costs, cfg_.association.gate_epsilon);
  for (const auto& [ti, dj] : assignment.pairs) {
    Track& tr = tracks_[ti];
    tr.centroid = update_centroid(tr.centroid, centroids[dj], t, cfg_.association);
    tr.last_seen = std::max(tr.last_seen, t);
  }
  timing.association_s += seconds_since(mark);

  std::vector<TrackFrame> frames;
  frames.reserve(batch.detections.size());
  for (const auto& [ti, dj] : assignment.pairs) {
    frames.push_back(advance(tracks_[ti], batch.detections[dj], timing));
  }

  for (std::size_t dj : assignment.unmatched_detections) {
    const SkeletonDetection& d = batch.detections[dj];
    tracks_.push_back(spawn(d));
    Track& tr = tracks_.back();
    TrackFrame frame;
    frame.timestamp = d.timestamp;
    frame.track_id = tr.id;
    for (std::size_t i = 0; i < kNumJoints; ++i) frame.flags[i] = d.joints[i] ? 'A' : 'S';
    if (cfg_.variant == Variant::Raw) {
      tr.last_raw = d.pose();
      frame.pose = tr.last_raw;
    } else if (cfg_.variant == Variant::Maf) {
      frame.pose = tr.maf->push(d);
    } else {
      frame.pose = tr.fusion.pose();
    }
    frames.push_back(frame);
  }
  std::sort(frames.begin(), frames.end(),
            [](const TrackFrame& a, const TrackFrame& b) { return a.track_id < b.track_id; });

  timing.total_s = seconds_since(start);
  // Everything outside the three named stages, including the clock reads.
  timing.other_s = std::max(0.0, timing.total_s - timing.association_s - timing.fusion_s - timing.consistency_s);
  if (timing_enabled_) timings_.push_back(timing);
  return frames;
}

std::vector<TrackFrame> Tracker::process(const DetectionBatch& batch, const Extrinsics& extrinsics) {
  return process(ingest_batch(batch, extrinsics));
}

TrackingRun run_tracker(const PipelineConfig& cfg, std::span<const DetectionBatch> batches,
                        const Extrinsics& extrinsics) {
  Tracker tracker(cfg);
  TrackingRun run;
  for (const DetectionBatch& b : batches) {
    auto frames = tracker.process(b, extrinsics);
    run.frames.insert(run.frames.end(), frames.begin(), frames.end());
  }
  run.timings = tracker.timings();
  return run;
}

// --- Track frame files ----------------------------------------------------------------

std::string encode_track_frame(const TrackFrame& frame) {
  std::string line = fmt::format("{:.6f} {}", frame.timestamp, frame.track_id);
  for (const auto& j : frame.pose.joints) {
    if (j) {
      fmt::format_to(std::back_inserter(line), " {:.6f} {:.6f} {:.6f}", j->x(), j->y(), j->z());
    } else {
      line += " nan nan nan";
    }
  }
  line += ' ';
  line.append(frame.flags.begin(), frame.flags.end());
  return line;
}

void write_track_frames(std::ostream& out, std::span<const TrackFrame> frames) {
  for (const TrackFrame& f : frames) out << encode_track_frame(f) << '\n';
}

void write_track_frames_file(const std::filesystem::path& path, std::span<const TrackFrame> frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_track_frames(out, frames);
}

std::vector<TrackFrame> read_track_frames(std::istream& in, const std::string& source) {
  std::vector<TrackFrame> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    TrackFrame f;
    std::string tok;
    const auto next_double = [&](const char* what) {
      if (!(ss >> tok)) throw FormatError(source, n, std::string("missing ") + what);
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
      } catch (const std::exception&) {
        throw FormatError(source, n, std::string("bad number for ") + what + ": '" + tok + "'");
      }
    };
    f.timestamp = next_double("timestamp");
    if (!(ss >> tok)) throw FormatError(source, n, "missing track_id");
    try {
      f.track_id = std::stoi(tok);
    } catch (const std::exception&) {
      throw FormatError(source, n, "bad track_id '" + tok + "'");
    }
    for (std::size_t i = 0; i < kNumJoints; ++i) {
      Vec3 p;
      for (int k = 0; k < 3; ++k) p(k) = next_double("joint coordinate");
      if (p.allFinite()) {
        f.pose.joints[i] = p;
      } else if (!p.array().isNaN().all()) {
        throw FormatError(source, n, fmt::format("joint {} partially missing", i));
      }
    }
    if (!(ss >> tok) || tok.size() != kNumJoints) {
      throw FormatError(source, n, fmt::format("expected {} status flags", kNumJoints));
    }
    std::copy(tok.begin(), tok.end(), f.flags.begin());
    if (ss >> tok) throw FormatError(source, n, "trailing data");
    out.push_back(f);
  }
  return out;
}

std::vector<TrackFrame> read_track_frames_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tracks file " + path.string());
  return read_track_frames(in, path.string());
}

}  // namespace skelfuse
