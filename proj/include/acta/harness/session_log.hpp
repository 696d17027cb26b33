#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "acta/common.hpp"
#include "acta/geo.hpp"
#include "acta/harness/scenario.hpp"
#include "acta/learner.hpp"
#include "acta/network.hpp"
#include "acta/pipeline.hpp"
#include "acta/protocol.hpp"
#include "acta/signal.hpp"

namespace acta::harness {

inline constexpr const char* kLogMagic = "acta-log v1";

/// Newline-delimited record text plus the little-endian float32 EEG sidecar.
struct SessionLog {
  std::string text;
  std::string sidecar;

  friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

inline std::string sidecar_path(const std::string& log_path) { return log_path + ".eeg"; }

inline void save_log(const SessionLog& log, const std::string& path) {
  auto write = [](const std::string& file, const std::string& bytes) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + file);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "short write to " + file);
  };
  write(path, log.text);
  write(sidecar_path(path), log.sidecar);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A missing sidecar reads as empty; any reference into it then fails as CorruptLog.
inline SessionLog load_log(const std::string& path) {
  SessionLog log;
  log.text = read_file(path);
  std::ifstream probe(sidecar_path(path));
  if (probe) log.sidecar = read_file(sidecar_path(path));
  return log;
}

/// Escapes separators so free text fits in one tab-separated field.
inline std::string field_text(std::string s) {
  for (char& c : s)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return s;
}

inline std::string join_tab(std::initializer_list<std::string> fields) {
  std::string out;
  for (const auto& f : fields) {
    if (!out.empty()) out += '\t';
    out += f;
  }
  return out;
}

inline std::string segment_hash(const std::string& prev, std::string_view segment, std::string_view sidecar_slice) {
  return sha256_hex(prev + std::string(segment) + sha256_hex(sidecar_slice));
}

/// Append-only writer. Lines accumulate into the open segment; closing it
/// chains its hash (over the text and the sidecar bytes it added) onto the
/// previous segment's.
class LogWriter {
 public:
  using Listener = std::function<void(const std::string&)>;

  explicit LogWriter(Listener listener = {}) : listener_(std::move(listener)) {}

  void line(const std::string& l) {
    log_.text += l;
    log_.text += '\n';
    segment_ += l;
    segment_ += '\n';
    if (listener_) listener_(l);
  }

  std::string& sidecar() { return log_.sidecar; }
  const SessionLog& log() const { return log_; }
  std::string_view open_segment() const { return segment_; }
  std::size_t segment_sidecar_begin() const { return sidecar_mark_; }

  void close_segment(int index) {
    const std::string h = segment_hash(prev_, segment_, std::string_view(log_.sidecar).substr(sidecar_mark_));
    prev_ = h;
    segment_.clear();
    sidecar_mark_ = log_.sidecar.size();
    emit_raw(join_tab({"seghash", std::to_string(index), std::to_string(sidecar_mark_ / 4), h}));
  }

  SessionLog finish(int n_sessions) {
    const std::string h = segment_hash(prev_, segment_, std::string_view(log_.sidecar).substr(sidecar_mark_));
    emit_raw(join_tab({"end", std::to_string(n_sessions), h}));
    return log_;
  }

 private:
  void emit_raw(const std::string& l) {
    log_.text += l;
    log_.text += '\n';
    if (listener_) listener_(l);
  }

  Listener listener_;
  SessionLog log_;
  std::string segment_;
  std::string prev_;
  std::size_t sidecar_mark_ = 0;
};

// --- EEG windows from telemetry -------------------------------------------------

/// Rebuilds analysis windows from EEG messages fed in increasing seq order.
/// A window is emitted only when every message it covers is present; the
/// sample grid is fixed by sample index, so lost messages never shift it.
class WindowAssembler {
 public:
  WindowAssembler(const signal::EegConfig& config, std::size_t samples_per_message)
      : len_(config.window_samples()), hop_(config.hop_samples()), batch_(samples_per_message), fs_(config.fs_hz) {}

  std::size_t skipped() const { return skipped_; }
  std::size_t emitted() const { return emitted_; }

  std::vector<signal::EegWindow> add(const pipeline::TelemetryMessage& m) {
    if (m.batch_size() != batch_) fail(ErrorCode::CorruptLog, "EEG message batch differs from the scenario");
    if (!held_.empty() && m.seq <= held_.rbegin()->first) fail(ErrorCode::CorruptLog, "EEG messages out of order");
    held_.emplace(m.seq, m);
    std::vector<signal::EegWindow> out;
    while (last_seq(next_) <= m.seq) {
      const auto first = first_seq(next_), last = last_seq(next_);
      bool complete = true;
      for (auto s = first; s <= last && complete; ++s) complete = held_.count(s) > 0;
      if (complete) {
        out.push_back(build(next_));
        ++emitted_;
      } else {
        ++skipped_;
      }
      ++next_;
      held_.erase(held_.begin(), held_.lower_bound(first_seq(next_)));
    }
    return out;
  }

 private:
  std::uint64_t first_seq(std::uint64_t k) const { return k * hop_ / batch_ + 1; }
  std::uint64_t last_seq(std::uint64_t k) const { return (k * hop_ + len_ - 1) / batch_ + 1; }

  signal::EegWindow build(std::uint64_t k) const {
    const std::uint64_t i0 = k * hop_;
    const auto& head = held_.at(first_seq(k));
    const std::size_t width = head.width;
    signal::EegWindow w;
    w.fs_hz = fs_;
    w.samples.assign(width, std::vector<double>(len_));
    w.start_ts = head.sample_ts(static_cast<std::size_t>(i0 - (first_seq(k) - 1) * batch_));
    for (std::size_t i = 0; i < len_; ++i) {
      const std::uint64_t idx = i0 + i;
      const auto& m = held_.at(idx / batch_ + 1);
      const std::size_t j = static_cast<std::size_t>(idx % batch_);
      for (std::size_t c = 0; c < width; ++c) w.samples[c][i] = m.payload[j * width + c];
    }
    return w;
  }

  std::size_t len_, hop_, batch_;
  double fs_;
  std::uint64_t next_ = 0;
  std::map<std::uint64_t, pipeline::TelemetryMessage> held_;
  std::size_t skipped_ = 0, emitted_ = 0;
};

inline std::vector<std::string> feature_layout(const Scenario& s) {
  auto names = signal::feature_names(s.eeg, s.bands);
  if (s.learner.features == FeatureSource::BandPowersAndGraph)
    for (const char* n : {"graph:q", "graph:c", "graph:l"}) names.emplace_back(n);
  return names;
}

/// Feature vector of one window, rounded like every logged value so a model
/// sees the same numbers online and in replay.
inline signal::FeatureVector window_features(const signal::EegWindow& w, const Scenario& s, std::uint64_t network_seed) {
  auto fv = signal::extract_features(w, s.bands);
  if (s.learner.features == FeatureSource::BandPowersAndGraph) {
    const auto pt = network::window_metrics(w, s.metrics.threshold, network_seed);
    fv.values.push_back(pt ? pt->modularity : 0.0);
    fv.values.push_back(pt ? pt->clustering : 0.0);
    fv.values.push_back(pt && std::isfinite(pt->path_length) ? pt->path_length : 0.0);
  }
  for (auto& v : fv.values) v = quantize6(v);
  return fv;
}

inline std::uint64_t session_seed(const Scenario& s, const std::string& name, int session) {
  return mix_seed(s.seed(name), static_cast<std::uint64_t>(session));
}

// --- parsing ----------------------------------------------------------------------

struct Segment {
  int session = 0;
  protocol::Phase phase = protocol::Phase::OpenLoopNudges;
  std::vector<pipeline::TelemetryMessage> messages;  // cloud store order
  std::vector<protocol::FeedbackEvent> feedback;
  std::vector<geo::Stimulus> disturbances;
  std::optional<learner::AttentionModel> model;
  std::vector<std::string> derived;  // recorded derived lines, verbatim
};

struct ParsedLog {
  Scenario scenario;
  std::string scenario_sha256;
  std::vector<Segment> sessions;
  int n_sessions = 0;
};

inline std::vector<std::string_view> log_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) fail(ErrorCode::CorruptLog, "log ends mid-record");
    out.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

/// Turns session records into Segments. The engine feeds it the segment it
/// just wrote and replay feeds it the stored log, so both derive from the
/// same parsed values.
class SegmentBuilder {
 public:
  /// Returns false for records outside any session (header, intermission).
  bool consume(std::string_view line, std::string_view sidecar) {
    const auto f = split(line, '\t');
    const std::string_view tag = f[0];
    if (tag == "session" && f.size() >= 4 && f[2] == "begin") {
      segments_.emplace_back();
      cur_ = &segments_.back();
      cur_->session = std::stoi(std::string(f[1]));
      cur_->phase = protocol::parse_phase(f[3]);
      stim_index_.clear();
      return true;
    }
    if (!cur_) return false;
    if (tag == "msg") {
      cur_->messages.push_back(pipeline::parse_message(line, sidecar));
    } else if (tag == "model") {
      cur_->model = learner::model_from_json(nlohmann::json::parse(line.substr(line.find('\t') + 1)));
    } else if (tag == "derived") {
      cur_->derived.emplace_back(line);
    } else if (tag == "event") {
      const double ts = parse_double(f.at(1));
      const std::string_view type = f.at(2);
      if (type == "feedback") {
        protocol::FeedbackEvent e;
        e.ts = ts;
        e.kind = protocol::parse_feedback_kind(f.at(3));
        if (f.at(4) != "-") e.place_id = std::string(f.at(4));
        e.rationale = protocol::parse_rationale(f.at(5));
        cur_->feedback.push_back(e);
      } else if (type == "disturbance") {
        stim_index_[std::string(f.at(3))] = cur_->disturbances.size();
        cur_->disturbances.push_back({std::string(f.at(3)), ts, std::nullopt});
      } else if (type == "ack") {
        auto it = stim_index_.find(std::string(f.at(3)));
        if (it == stim_index_.end()) fail(ErrorCode::CorruptLog, "ack for unknown disturbance");
        cur_->disturbances[it->second].ack_ts = ts;
      }
    }
    return true;
  }

  /// Ends the current session; later records belong to no session until the next begin.
  void close() { cur_ = nullptr; }

  std::vector<Segment>& segments() { return segments_; }

 private:
  std::vector<Segment> segments_;
  Segment* cur_ = nullptr;
  std::map<std::string, std::size_t> stim_index_;
};

/// Parses one self-contained session segment.
inline Segment parse_segment(std::string_view text, std::string_view sidecar) {
  SegmentBuilder b;
  for (auto line : log_lines(text)) b.consume(line, sidecar);
  if (b.segments().size() != 1) fail(ErrorCode::CorruptLog, "expected exactly one session in the segment");
  return std::move(b.segments().front());
}

/// Verifies the hash chain and parses every session segment.
inline ParsedLog parse_log(const SessionLog& log) {
  const auto lines = log_lines(log.text);
  if (lines.empty() || lines[0] != kLogMagic) fail(ErrorCode::CorruptLog, "not an acta log");
  ParsedLog out;
  std::string prev, segment;
  std::size_t sidecar_mark = 0;
  bool ended = false, have_scenario = false;
  SegmentBuilder builder;

  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string_view line = lines[li];
    if (ended) fail(ErrorCode::CorruptLog, "records after end");
    const auto f = split(line, '\t');
    const std::string_view tag = f[0];
    if (tag == "seghash" || tag == "end") {
      if (tag == "seghash" && f.size() != 4) fail(ErrorCode::CorruptLog, "malformed seghash");
      if (tag == "end" && f.size() != 3) fail(ErrorCode::CorruptLog, "malformed end");
      std::size_t sidecar_end = log.sidecar.size();
      if (tag == "seghash") {
        sidecar_end = std::stoull(std::string(f[2])) * 4;
        if (sidecar_end > log.sidecar.size() || sidecar_end < sidecar_mark) fail(ErrorCode::CorruptLog, "sidecar truncated");
      }
      const auto h = segment_hash(prev, segment, std::string_view(log.sidecar).substr(sidecar_mark, sidecar_end - sidecar_mark));
      if (h != f.back()) fail(ErrorCode::CorruptLog, "segment hash mismatch at line " + std::to_string(li + 1));
      prev = h;
      segment.clear();
      sidecar_mark = sidecar_end;
      builder.close();
      if (tag == "end") {
        out.n_sessions = std::stoi(std::string(f[1]));
        ended = true;
      }
      continue;
    }
    segment += line;
    segment += '\n';
    if (li == 0) continue;
    try {
      if (tag == "scenario") {
        out.scenario = parse_scenario(std::string(line.substr(line.find('\t') + 1)));
        have_scenario = true;
      } else if (tag == "scenario_sha256") {
        out.scenario_sha256 = std::string(f.at(1));
      } else {
        builder.consume(line, log.sidecar);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CorruptLog) throw;
      fail(ErrorCode::CorruptLog, "line " + std::to_string(li + 1) + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCode::CorruptLog, "line " + std::to_string(li + 1) + ": " + e.what());
    }
  }
  if (!ended) fail(ErrorCode::CorruptLog, "log truncated: no end record");
  if (!have_scenario) fail(ErrorCode::CorruptLog, "log has no scenario");
  if (scenario_hash(out.scenario) != out.scenario_sha256) fail(ErrorCode::CorruptLog, "scenario hash mismatch");
  out.sessions = std::move(builder.segments());
  if (static_cast<std::size_t>(out.n_sessions) != out.sessions.size()) fail(ErrorCode::CorruptLog, "session count mismatch");
  return out;
}

// --- derived records --------------------------------------------------------------

struct LabelSummary {
  std::size_t windows = 0;     // complete windows
  std::size_t incomplete = 0;  // skipped for missing messages
  std::size_t attention = 0;
  std::size_t non_attention = 0;
  std::size_t dropped = 0;  // straddling a geofence edge or outside GPS coverage
};

struct SessionDerived {
  std::vector<std::string> lines;
  LabelSummary labels;
  learner::Dataset dataset;
  std::optional<geo::BehavioralReport> behavior;
  network::MetricSeries metrics;
  std::optional<learner::EvalReport> eval;
};

inline std::string render_behavior(const geo::BehavioralReport& b) {
  std::string rts;
  for (const auto& [id, rt] : b.reaction_times_s) {
    if (!rts.empty()) rts += ',';
    rts += id + "=" + (rt ? fmt6(*rt) : "-");
  }
  return join_tab({"derived", "behavior", fmt6(b.path_efficiency_m), fmt6(b.peak_speed_mps), std::to_string(b.step_count),
                   fmt6(b.completion_rate), rts.empty() ? "-" : rts});
}

/// Recomputes every derived record of a session from its logged streams.
inline SessionDerived derive_session(const Scenario& s, const Segment& seg) {
  using pipeline::SensorKind;
  SessionDerived d;
  d.dataset.participant_id = s.participant.id;
  d.dataset.feature_names = feature_layout(s);

  std::map<std::string, std::vector<const pipeline::TelemetryMessage*>> by_sensor;
  for (const auto& m : seg.messages) by_sensor[m.sensor_id].push_back(&m);
  for (auto& [id, v] : by_sensor)
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->seq < b->seq; });

  geo::Trajectory traj;
  std::vector<geo::AccelSample> accel;
  std::vector<signal::EegWindow> windows;
  const std::uint64_t net_seed = session_seed(s, "network", seg.session);
  WindowAssembler assembler(s.eeg, s.devices.eeg_samples_per_message);
  for (const auto& [id, msgs] : by_sensor) {
    for (const auto* m : msgs) {
      switch (m->kind) {
        case SensorKind::Gps:
          for (std::size_t j = 0; j < m->batch_size(); ++j)
            traj.samples.push_back({m->sample_ts(j), geo::GeoPoint(m->payload[j * 2], m->payload[j * 2 + 1])});
          break;
        case SensorKind::Accel:
          for (std::size_t j = 0; j < m->batch_size(); ++j) accel.push_back({m->sample_ts(j), m->payload[j * m->width]});
          break;
        case SensorKind::Eeg:
          for (auto& w : assembler.add(*m)) windows.push_back(std::move(w));
          break;
        case SensorKind::HeartRate:
          break;
      }
    }
  }
  std::stable_sort(traj.samples.begin(), traj.samples.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

  d.labels.windows = windows.size();
  d.labels.incomplete = assembler.skipped();
  std::string feature_text;
  for (const auto& w : windows) {
    std::optional<AttentionLabel> label;
    if (traj.size() >= 2 && w.start_ts >= traj.t_begin() && w.start_ts + w.duration() <= traj.t_end())
      label = signal::label_span(w.start_ts, w.duration(), traj, s.path);
    if (!label) {
      ++d.labels.dropped;
      continue;
    }
    ++(*label == AttentionLabel::Attention ? d.labels.attention : d.labels.non_attention);
    auto fv = window_features(w, s, net_seed);
    feature_text += fmt6(fv.ts);
    for (double v : fv.values) feature_text += "," + fmt6(v);
    feature_text += '\n';
    d.dataset.append({std::move(fv), *label, learner::Origin::Phase1});
  }
  const auto& L = d.labels;
  d.lines.push_back(join_tab({"derived", "labels", std::to_string(L.windows), std::to_string(L.incomplete),
                              std::to_string(L.attention), std::to_string(L.non_attention), std::to_string(L.dropped),
                              sha256_hex(feature_text)}));

  if (traj.size() >= 2) {
    std::vector<geo::Stimulus> stimuli;
    for (const auto& e : seg.feedback)
      if (e.kind == protocol::FeedbackKind::Nudge && e.place_id) stimuli.push_back({"nudge:" + *e.place_id, e.ts, std::nullopt});
    for (const auto& x : seg.disturbances) stimuli.push_back({"task2:" + x.id, x.ts, x.ack_ts});
    d.behavior = geo::behavioral_report(traj, s.path, accel, stimuli, true);
    d.lines.push_back(render_behavior(*d.behavior));
  } else {
    d.lines.push_back(join_tab({"derived", "behavior", "-"}));
  }

  if (s.metrics.enabled) {
    d.metrics = network::metric_series(windows, s.metrics.threshold, net_seed);
    for (const auto& p : d.metrics.points)
      d.lines.push_back(join_tab({"derived", "metric", fmt6(p.ts), fmt6(p.modularity), fmt6(p.clustering),
                                  fmt6(p.path_length), fmt6(p.small_world)}));
    for (double g : d.metrics.gaps) d.lines.push_back(join_tab({"derived", "metric_gap", fmt6(g)}));
  }

  if (seg.model && !d.dataset.records.empty()) {
    d.eval = learner::evaluate(*seg.model, d.dataset);
    const auto& e = *d.eval;
    d.lines.push_back(join_tab({"derived", "eval", std::to_string(e.n), std::to_string(e.tp), std::to_string(e.fp),
                                std::to_string(e.tn), std::to_string(e.fn), fmt6(e.accuracy)}));
  }
  return d;
}

// --- replay -------------------------------------------------------------------

struct ReplayReport {
  bool equal = true;
  std::vector<std::string> mismatches;
  std::vector<SessionDerived> sessions;
  std::string scenario_sha256;

  /// Plain-text report: every derived record, then the verdict.
  std::string text() const {
    std::string out = "scenario_sha256\t" + scenario_sha256 + "\n";
    for (std::size_t k = 0; k < sessions.size(); ++k) {
      out += "session\t" + std::to_string(k + 1) + "\n";
      for (const auto& l : sessions[k].lines) out += l + "\n";
    }
    out += equal ? "replay\tequal\n" : "replay\tmismatch\n";
    for (const auto& m : mismatches) out += "mismatch\t" + m + "\n";
    return out;
  }
};

/// Re-derives every session from the raw streams and compares with what the
/// run recorded. Reads the log only.
inline ReplayReport replay(const SessionLog& log) {
  const ParsedLog parsed = parse_log(log);
  ReplayReport r;
  r.scenario_sha256 = parsed.scenario_sha256;
  for (const auto& seg : parsed.sessions) {
    auto d = derive_session(parsed.scenario, seg);
    if (d.lines != seg.derived) {
      r.equal = false;
      const std::size_t n = std::max(d.lines.size(), seg.derived.size());
      for (std::size_t i = 0; i < n; ++i) {
        const std::string a = i < seg.derived.size() ? seg.derived[i] : "<missing>";
        const std::string b = i < d.lines.size() ? d.lines[i] : "<missing>";
        if (a != b) {
          r.mismatches.push_back("session " + std::to_string(seg.session) + ": logged '" + a + "' replayed '" + b + "'");
          break;
        }
      }
    }
    r.sessions.push_back(std::move(d));
  }
  return r;
}

}  // namespace acta::harness
