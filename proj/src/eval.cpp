#include "skelfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace skelfuse::eval {

namespace {

class TruthIndex {
 public:
  explicit TruthIndex(const sim::GroundTruthLog& log) {
    for (const sim::TruthSample& s : log.samples) {
      auto& v = by_subject_[s.subject_id];
      if (!v.empty() && s.timestamp <= v.back().first) {
        throw std::invalid_argument(
            fmt::format("truth for subject '{}' not strictly increasing at t={}", s.subject_id, s.timestamp));
      }
      v.emplace_back(s.timestamp, &s.pose);
    }
    order_ = log.subject_ids();
  }

  const std::vector<std::string>& subjects() const { return order_; }

  std::optional<SkeletonPose> at(const std::string& subject, double t) const {
    const auto it = by_subject_.find(subject);
    if (it == by_subject_.end()) return std::nullopt;
    const auto& v = it->second;
    if (v.empty() || t < v.front().first || t > v.back().first) return std::nullopt;
    auto hi = std::lower_bound(v.begin(), v.end(), t, [](const auto& e, double x) { return e.first < x; });
    if (hi->first == t) return *hi->second;
    auto lo = hi - 1;
    const double f = (t - lo->first) / (hi->first - lo->first);
    SkeletonPose out;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const auto& a = lo->second->joints[j];
      const auto& b = hi->second->joints[j];
      if (a && b) out.joints[j] = *a + f * (*b - *a);
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<std::pair<double, const SkeletonPose*>>> by_subject_;
  std::vector<std::string> order_;
};

double centroid_distance(const SkeletonPose& est, const SkeletonPose& truth) {
  Vec3 a = Vec3::Zero(), b = Vec3::Zero();
  int n = 0;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    if (!est.joints[j] || !truth.joints[j]) continue;
    a += *est.joints[j];
    b += *truth.joints[j];
    ++n;
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return (a - b).norm() / n;
}

}  // namespace

std::optional<SkeletonPose> interpolate_truth(const sim::GroundTruthLog& truth, const std::string& subject_id,
                                              double t) {
  return TruthIndex(truth).at(subject_id, t);
}

std::vector<AlignedSequence> align(std::span<const TrackFrame> frames, const sim::GroundTruthLog& truth,
                                   const AlignOptions& opts) {
  const TruthIndex index(truth);
  const auto& subjects = index.subjects();
  if (subjects.empty()) throw std::invalid_argument("truth log is empty");

  std::map<int, std::vector<const TrackFrame*>> by_track;
  for (const TrackFrame& f : frames) {
    auto& v = by_track[f.track_id];
    if (!v.empty() && f.timestamp <= v.back()->timestamp) continue;
    v.push_back(&f);
  }

  struct Candidate {
    int track_id;
    std::vector<const TrackFrame*> frames;  // in truth range
    std::vector<double> distance;           // per subject
  };
  std::vector<Candidate> eligible;
  std::size_t overlapping = 0;
  for (const auto& [id, list] : by_track) {
    Candidate c{id, {}, std::vector<double>(subjects.size(), 0.0)};
    for (const TrackFrame* f : list) {
      bool in_range = true;
      std::vector<double> d(subjects.size());
      for (std::size_t s = 0; s < subjects.size() && in_range; ++s) {
        const auto gt = index.at(subjects[s], f->timestamp);
        if (!gt) {
          in_range = false;
          break;
        }
        d[s] = centroid_distance(f->pose, *gt);
        if (std::isnan(d[s])) in_range = false;
      }
      if (!in_range) continue;
      c.frames.push_back(f);
      for (std::size_t s = 0; s < subjects.size(); ++s) c.distance[s] += d[s];
    }
    overlapping += c.frames.size();
    if (c.frames.size() < std::max<std::size_t>(opts.min_track_frames, 1)) continue;
    for (double& d : c.distance) d /= static_cast<double>(c.frames.size());
    eligible.push_back(std::move(c));
  }
  if (overlapping == 0) throw std::invalid_argument("no temporal overlap between track frames and truth");
  if (eligible.size() < subjects.size()) {
    throw std::invalid_argument(fmt::format(
        "mismatched subject counts: truth has {} subjects but only {} tracks have >= {} overlapping frames",
        subjects.size(), eligible.size(), opts.min_track_frames));
  }

  CostMatrix costs(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(eligible.size()));
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (std::size_t t = 0; t < eligible.size(); ++t) {
      costs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = eligible[t].distance[s];
    }
  }
  const std::vector<int> primary = hungarian(costs);

  std::vector<int> owner(eligible.size(), -1);
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto a = static_cast<std::size_t>(primary[s]);
    owner[a] = static_cast<int>(s);
    for (std::size_t b = 0; b < eligible.size(); ++b) {
      if (b == a) continue;
      if (std::abs(eligible[b].distance[s] - eligible[a].distance[s]) <= opts.tie_tolerance) {
        throw std::invalid_argument(fmt::format(
            "ambiguous correspondence for subject '{}': tracks {} and {} both at mean centroid distance {:.6f} m",
            subjects[s], eligible[a].track_id, eligible[b].track_id, eligible[a].distance[s]));
      }
    }
  }
  for (std::size_t t = 0; t < eligible.size(); ++t) {
    const auto& d = eligible[t].distance;
    const auto best = static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
    for (std::size_t s = 0; s < d.size(); ++s) {
      if (s != best && std::abs(d[s] - d[best]) <= opts.tie_tolerance) {
        throw std::invalid_argument(
            fmt::format("ambiguous correspondence for track {}: subjects '{}' and '{}' both at {:.6f} m",
                        eligible[t].track_id, subjects[best], subjects[s], d[best]));
      }
    }
    if (owner[t] < 0) owner[t] = static_cast<int>(best);
  }

  std::vector<AlignedSequence> out;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (std::size_t t = 0; t < eligible.size(); ++t) {
      if (owner[t] != static_cast<int>(s)) continue;
      AlignedSequence seq;
      seq.track_id = eligible[t].track_id;
      seq.subject_id = subjects[s];
      seq.mean_centroid_distance = eligible[t].distance[s];
      for (const TrackFrame* f : eligible[t].frames) {
        seq.frames.push_back({f->timestamp, f->pose, *index.at(subjects[s], f->timestamp)});
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

ErrorReport displacement_metrics(std::span<const AlignedSequence> sequences) {
  ErrorReport r;
  if (!sequences.empty()) r.subject_id = sequences.front().subject_id;
  // Welford accumulation for the summed-Q displacement.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  std::array<double, kNumJoints> joint_sum{};
  double total_sum = 0.0;
  std::size_t total_count = 0;
  for (const AlignedSequence& seq : sequences) {
    r.track_ids.push_back(seq.track_id);
    for (const AlignedFrame& f : seq.frames) {
      Vec3 q_est = Vec3::Zero(), q_gt = Vec3::Zero();
      bool any = false;
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        if (!f.estimate.joints[j] || !f.truth.joints[j]) continue;
        any = true;
        q_est += *f.estimate.joints[j];
        q_gt += *f.truth.joints[j];
        const double e = (*f.estimate.joints[j] - *f.truth.joints[j]).norm();
        joint_sum[j] += e;
        ++r.per_joint_count[j];
        total_sum += e;
        ++total_count;
      }
      if (!any) continue;
      const double e = (q_est - q_gt).norm();
      ++n;
      const double delta = e - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (e - mean);
    }
  }
  r.frames = n;
  if (n > 0) {
    r.e_avg = mean;
    r.e_sd = std::sqrt(std::max(m2 / static_cast<double>(n), 0.0));
  }
  if (total_count > 0) r.mpjpe = total_sum / static_cast<double>(total_count);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    if (r.per_joint_count[j] > 0) r.per_joint_mpjpe[j] = joint_sum[j] / static_cast<double>(r.per_joint_count[j]);
  }
  return r;
}

std::vector<ErrorReport> evaluate(std::span<const TrackFrame> frames, const sim::GroundTruthLog& truth,
                                  const AlignOptions& opts) {
  const auto sequences = align(frames, truth, opts);
  std::vector<ErrorReport> out;
  for (const std::string& subject : truth.subject_ids()) {
    std::vector<AlignedSequence> mine;
    for (const AlignedSequence& s : sequences) {
      if (s.subject_id == subject) mine.push_back(s);
    }
    ErrorReport r = displacement_metrics(mine);
    r.subject_id = subject;
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t long_lived_tracks(std::span<const TrackFrame> frames, std::size_t min_frames) {
  std::map<int, std::size_t> counts;
  for (const TrackFrame& f : frames) ++counts[f.track_id];
  return static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [&](const auto& kv) { return kv.second >= min_frames; }));
}

ExperimentResult run_experiment(const sim::GeneratedScene& generated, const PipelineConfig& cfg, Replay replay,
                                std::uint64_t replay_seed, const AlignOptions& opts) {
  const auto batches = replay == Replay::Merged
                           ? merge_by_timestamp(generated.streams)
                           : merge_with_arrival_jitter(generated.streams, 0.05, replay_seed);
  ExperimentResult res;
  res.run = run_tracker(cfg, batches, generated.extrinsics);
  res.reports = evaluate(res.run.frames, generated.truth, opts);
  if (!generated.truth.samples.empty()) {
    res.sequence_duration = generated.truth.samples.back().timestamp - generated.truth.samples.front().timestamp;
  }
  return res;
}

std::vector<AblationRow> ablation_camera_count(const sim::Scene& scene, std::uint64_t seed,
                                               const PipelineConfig& cfg, std::span<const std::size_t> counts) {
  std::vector<AblationRow> rows;
  for (std::size_t k : counts) {
    const auto generated = sim::generate_scene(sim::with_node_count(scene, k), seed);
    AblationRow row;
    row.camera_count = k;
    row.outside_reference_range = k < 2;
    row.reports = run_experiment(generated, cfg).reports;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

StageStats stats(std::vector<double> ms) {
  StageStats s;
  if (ms.empty()) return s;
  double sum = 0.0;
  for (double v : ms) sum += v;
  s.mean_ms = sum / static_cast<double>(ms.size());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size()))) - 1;
  std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(rank), ms.end());
  s.p95_ms = ms[rank];
  return s;
}

}  // namespace

TimingReport timing_report(std::span<const BatchTiming> timings) {
  std::vector<double> assoc, fusion, cons, other, total, per_subject;
  for (const BatchTiming& t : timings) {
    if (t.detections == 0) continue;
    assoc.push_back(1e3 * t.association_s);
    fusion.push_back(1e3 * t.fusion_s);
    cons.push_back(1e3 * t.consistency_s);
    other.push_back(1e3 * t.other_s);
    total.push_back(1e3 * t.total_s);
    per_subject.push_back(1e3 * (t.association_s + t.fusion_s + t.consistency_s) / static_cast<double>(t.detections));
  }
  TimingReport r;
  r.batches = total.size();
  r.association = stats(assoc);
  r.fusion = stats(fusion);
  r.consistency = stats(cons);
  r.other = stats(other);
  r.total = stats(total);
  r.per_subject_ms = stats(per_subject).mean_ms;
  for (std::size_t n = 1; n <= r.fps_by_subjects.size(); ++n) {
    r.fps_by_subjects[n - 1] = r.per_subject_ms > 0.0 ? 1000.0 / (r.per_subject_ms * static_cast<double>(n)) : 0.0;
  }
  return r;
}

void write_csv(std::ostream& out, std::span<const CsvRow> rows) {
  out << kCsvHeader << '\n';
  for (const CsvRow& r : rows) {
    out << fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{:.3f}\n", r.sequence, r.variant, r.camera_count, r.subject,
                       r.e_avg_m, r.e_sd_m, r.mpjpe_m, r.fps);
  }
}

std::vector<CsvRow> read_csv(std::istream& in, const std::string& source) {
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1) {
      if (line != kCsvHeader) throw FormatError(source, n, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw FormatError(source, n, fmt::format("expected 8 columns, got {}", cells.size()));
    try {
      rows.push_back({cells[0], cells[1], std::stoul(cells[2]), cells[3], std::stod(cells[4]), std::stod(cells[5]),
                      std::stod(cells[6]), std::stod(cells[7])});
    } catch (const std::exception&) {
      throw FormatError(source, n, "bad numeric cell");
    }
  }
  return rows;
}

double output_rate(const ErrorReport& report, double duration) {
  return duration > 0.0 ? static_cast<double>(report.frames) / duration : 0.0;
}

}  // namespace skelfuse::eval
