#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acta/common.hpp"

namespace acta::pipeline {

// --- device registry -------------------------------------------------------

struct DeviceProfile {
  std::string brand_product;
  bool wireless = true;
  std::string radio;         // as listed, empty when unspecified
  double fs_hz = 0.0;        // highest listed sampling rate
  std::string fs_listed;     // rate(s) exactly as listed
  int channels_min = 1;
  int channels_max = 1;
  std::string noise_reduction;
  std::optional<double> price_usd;
};

/// Commercial low-cost portable EEG devices.
inline const std::vector<DeviceProfile>& device_registry() {
  static const std::vector<DeviceProfile> rows = {
      {"ANT Neuro mini-serie", false, "", 2048, "<2048", 8, 8, "active shielding", std::nullopt},
      {"Open BCI", true, "BLE/WiFi", 250, "250", 8, 21, "n.a.", 1000},
      {"mBrainTrain", true, "BT-EDR", 500, "250/500", 24, 24, "high SNR claimed", 66750},
      {"Unicorn EEG", true, "BT", 250, "250", 8, 8, "high SNR claimed", 1200},
      {"Wearable Sensing", true, "BT", 300, "300", 7, 24, "n.a.", std::nullopt},
      {"Emotiv EPOC-X", true, "BLE", 256, "128-256", 14, 14, "notch filter", 850},
      {"Bitbrain Hero", true, "BT 2.1+EDR", 250, "250", 9, 9, "active shielding", std::nullopt},
      {"Brain Live Amp", true, "", 1000, "<=1000", 8, 32, "n.a.", 18200},
      {"Neurosky - MindWave", true, "", 512, "512", 1, 1, "n.a.", 180},
  };
  return rows;
}

inline const DeviceProfile& default_eeg_device() { return device_registry()[3]; }

// --- sensors -----------------------------------------------------------------

enum class SensorKind { Eeg, HeartRate, Gps, Accel };

inline const char* to_string(SensorKind k) {
  switch (k) {
    case SensorKind::Eeg: return "eeg";
    case SensorKind::HeartRate: return "heart_rate";
    case SensorKind::Gps: return "gps";
    case SensorKind::Accel: return "accel";
  }
  return "?";
}

inline SensorKind parse_sensor_kind(std::string_view s) {
  for (auto k : {SensorKind::Eeg, SensorKind::HeartRate, SensorKind::Gps, SensorKind::Accel})
    if (s == to_string(k)) return k;
  fail(ErrorCode::CorruptLog, "unknown sensor kind '" + std::string(s) + "'");
}

struct BatteryState {
  double capacity_mah = 100.0;
  double drawn_mah = 0.0;
  std::map<std::string, double> load_ma;  // gps, display, cpu, radio, ...

  double current_ma() const {
    double total = 0.0;
    for (const auto& [name, ma] : load_ma) total += ma;
    return total;
  }
  double remaining_fraction() const { return 1.0 - drawn_mah / capacity_mah; }
};

struct TelemetryMessage {
  std::string sensor_id;
  SensorKind kind = SensorKind::Gps;
  std::uint64_t seq = 0;
  double device_ts_s = 0.0;  // device clock at emission
  std::optional<double> corrected_ts_s;
  std::size_t width = 1;      // values per sample
  double sample_period_s = 0.0;
  std::vector<double> payload;

  std::size_t batch_size() const { return width ? payload.size() / width : 0; }

  /// Timestamp of sample j (last sample at the message timestamp).
  double sample_ts(std::size_t j) const {
    const double base = corrected_ts_s.value_or(device_ts_s);
    return base - static_cast<double>(batch_size() - 1 - j) * sample_period_s;
  }
};

/// Fills `out` with the `width` values of one sample.
using SampleSource = std::function<void(std::uint64_t sample_index, double sim_ts, std::vector<double>& out)>;

struct SensorSpec {
  std::string id;
  SensorKind kind = SensorKind::Gps;
  double rate_hz = 1.0;  // messages per second
  std::size_t samples_per_message = 1;
  std::size_t width = 1;
  double clock_offset_s = 0.0;
  double clock_drift_ppm = 0.0;
  BatteryState battery;
  bool float32 = false;  // payload values are single precision on the wire
};

struct EmitResult {
  std::vector<TelemetryMessage> messages;
  std::optional<double> exhausted_at;
};

class SensorAgent {
 public:
  SensorAgent(SensorSpec spec, SampleSource source) : spec_(std::move(spec)), source_(std::move(source)) {
    if (!(spec_.rate_hz > 0.0) || spec_.samples_per_message == 0 || spec_.width == 0)
      fail(ErrorCode::InvalidConfig, "sensor " + spec_.id + " has an invalid rate or batch");
  }

  const SensorSpec& spec() const { return spec_; }
  const BatteryState& battery() const { return spec_.battery; }
  std::uint64_t seq() const { return seq_; }
  bool exhausted() const { return exhausted_at_.has_value(); }
  std::optional<double> exhausted_at() const { return exhausted_at_; }
  std::uint64_t emitted() const { return seq_; }
  double message_period() const { return 1.0 / spec_.rate_hz; }

  double device_time(double sim_ts) const {
    return sim_ts * (1.0 + spec_.clock_drift_ppm * 1e-6) + spec_.clock_offset_s;
  }

  /// Messages due in (last emit, sim_now]; the battery drains at the summed
  /// load current until capacity, after which the agent stays silent.
  EmitResult emit(double sim_now) {
    if (exhausted()) fail(ErrorCode::BatteryExhausted, "sensor " + spec_.id + " battery exhausted");
    EmitResult r;
    while (true) {
      const double due = static_cast<double>(seq_ + 1) / spec_.rate_hz;
      if (due > sim_now + 1e-9) break;
      if (!drain_to(due)) break;
      r.messages.push_back(make_message(due));
    }
    if (!exhausted()) drain_to(sim_now);
    r.exhausted_at = exhausted_at_;
    return r;
  }

 private:
  bool drain_to(double t) {
    if (t <= last_drain_) return true;
    const double ma = spec_.battery.current_ma();
    const double need = ma * (t - last_drain_) / 3600.0;
    auto& b = spec_.battery;
    if (b.drawn_mah + need > b.capacity_mah * (1.0 + 1e-12)) {
      exhausted_at_ = last_drain_ + (b.capacity_mah - b.drawn_mah) / ma * 3600.0;
      b.drawn_mah = b.capacity_mah;
      last_drain_ = *exhausted_at_;
      return false;
    }
    b.drawn_mah = std::min(b.capacity_mah, b.drawn_mah + need);
    last_drain_ = t;
    return true;
  }

  TelemetryMessage make_message(double due) {
    ++seq_;
    TelemetryMessage m;
    m.sensor_id = spec_.id;
    m.kind = spec_.kind;
    m.seq = seq_;
    m.device_ts_s = quantize6(device_time(due));
    m.width = spec_.width;
    const std::size_t batch = spec_.samples_per_message;
    m.sample_period_s = 1.0 / (spec_.rate_hz * static_cast<double>(batch));
    m.payload.reserve(batch * spec_.width);
    for (std::size_t j = 0; j < batch; ++j) {
      const std::uint64_t index = (seq_ - 1) * batch + j;
      const double t = due - static_cast<double>(batch - 1 - j) * m.sample_period_s;
      scratch_.assign(spec_.width, 0.0);
      source_(index, t, scratch_);
      for (double v : scratch_) m.payload.push_back(spec_.float32 ? static_cast<double>(static_cast<float>(v)) : quantize6(v));
    }
    return m;
  }

  SensorSpec spec_;
  SampleSource source_;
  std::uint64_t seq_ = 0;
  double last_drain_ = 0.0;
  std::optional<double> exhausted_at_;
  std::vector<double> scratch_;
};

// --- links -------------------------------------------------------------------

struct LinkModel {
  double latency_ms = 20.0;
  double jitter_ms = 5.0;  // uniform half-width
  double loss_rate = 0.0;
  std::uint64_t seed = 1;
};

inline void validate(const LinkModel& m) {
  if (!(m.loss_rate >= 0.0 && m.loss_rate < 1.0)) fail(ErrorCode::InvalidLink, "loss_rate must be in [0,1)");
  if (!(m.latency_ms >= 0.0) || !(m.jitter_ms >= 0.0)) fail(ErrorCode::InvalidLink, "latency/jitter must be >= 0");
}

/// Single-hop lossy link; two uniform draws per call keep the RNG stream
/// aligned with call order.
class Link {
 public:
  explicit Link(LinkModel model) : model_(model), rng_(model.seed) { validate(model_); }

  const LinkModel& model() const { return model_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t delivered() const { return delivered_; }

  /// Delivery time, or nullopt when the message is lost.
  std::optional<double> delivery_time(double now) {
    const double u_loss = unit_(rng_);
    const double u_jitter = unit_(rng_);
    if (u_loss < model_.loss_rate) {
      ++dropped_;
      return std::nullopt;
    }
    ++delivered_;
    const double delay_ms = model_.latency_ms + (2.0 * u_jitter - 1.0) * model_.jitter_ms;
    return now + std::max(0.0, delay_ms) / 1000.0;
  }

  template <class Msg>
  std::vector<std::pair<double, Msg>> transmit(const Msg& msg, double now) {
    std::vector<std::pair<double, Msg>> out;
    if (auto t = delivery_time(now)) out.emplace_back(*t, msg);
    return out;
  }

 private:
  LinkModel model_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::uint64_t dropped_ = 0;
  std::uint64_t delivered_ = 0;
};

// --- gateway -----------------------------------------------------------------

struct SyncExchange {
  double t_req_gw = 0.0;
  double t_at_sensor = 0.0;
  double t_resp_gw = 0.0;
};

/// Round-trip midpoint estimate; exact when both legs take equal time.
inline double estimate_offset(const SyncExchange& x) {
  if (x.t_resp_gw < x.t_req_gw) fail(ErrorCode::NegativeRoundTrip, "response precedes request");
  return x.t_at_sensor - (x.t_req_gw + x.t_resp_gw) / 2.0;
}

struct ForwardedBatch {
  std::string sensor_id;
  SensorKind kind = SensorKind::Gps;
  double flush_ts = 0.0;
  std::vector<TelemetryMessage> messages;  // seq-ordered, corrected timestamps set
};

struct SeqGap {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

struct GatewayCounters {
  std::uint64_t received = 0;
  std::uint64_t forwarded = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t late_dropped = 0;
};

class Gateway {
 public:
  static constexpr double kDefaultHorizonS = 0.5;
  static constexpr double kDefaultWindowS = 1.0;

  explicit Gateway(double reorder_horizon_s = kDefaultHorizonS, double window_s = kDefaultWindowS)
      : horizon_(reorder_horizon_s), window_(window_s), next_flush_(window_s) {}

  double window() const { return window_; }
  double horizon() const { return horizon_; }

  double estimate_offset(const std::string& sensor_id, const SyncExchange& x) {
    const double off = pipeline::estimate_offset(x);
    sensors_[sensor_id].offset = off;
    return off;
  }

  std::optional<double> offset(const std::string& sensor_id) const {
    auto it = sensors_.find(sensor_id);
    if (it == sensors_.end()) return std::nullopt;
    return it->second.offset;
  }

  const GatewayCounters& counters(const std::string& sensor_id) { return sensors_[sensor_id].counters; }
  const std::vector<SeqGap>& gaps(const std::string& sensor_id) { return sensors_[sensor_id].gaps; }

  /// Buffers the message; returns whatever a flush due by `arrival_ts` releases.
  std::vector<ForwardedBatch> ingest(const TelemetryMessage& msg, double arrival_ts) {
    auto& s = sensors_[msg.sensor_id];
    s.kind = msg.kind;
    ++s.counters.received;
    if (msg.seq < s.next_expected) {
      if (s.gapped.count(msg.seq)) {
        ++s.counters.late_dropped;
        s.gapped.erase(msg.seq);
      } else {
        ++s.counters.duplicates;
      }
    } else if (!s.buffer.emplace(msg.seq, Pending{msg, arrival_ts}).second) {
      ++s.counters.duplicates;
    }
    if (arrival_ts >= next_flush_) return flush(arrival_ts);
    return {};
  }

  /// Releases in-order runs; a missing seq is declared a gap once the next
  /// buffered message has waited the reorder horizon. `drain` ignores the horizon.
  std::vector<ForwardedBatch> flush(double now, bool drain = false) {
    next_flush_ = (std::floor(now / window_ + 1e-9) + 1.0) * window_;
    std::vector<ForwardedBatch> out;
    for (auto& [id, s] : sensors_) {
      ForwardedBatch batch{id, s.kind, now, {}};
      while (!s.buffer.empty()) {
        auto it = s.buffer.begin();
        if (it->first != s.next_expected) {
          if (!drain && now - it->second.arrival < horizon_) break;
          s.gaps.push_back({s.next_expected, it->first - 1});
          for (auto q = s.next_expected; q < it->first; ++q) s.gapped.insert(q);
          s.next_expected = it->first;
        }
        TelemetryMessage m = std::move(it->second.msg);
        s.buffer.erase(it);
        ++s.next_expected;
        m.corrected_ts_s = quantize6(m.device_ts_s - s.offset);
        batch.messages.push_back(std::move(m));
        ++s.counters.forwarded;
      }
      if (!batch.messages.empty()) out.push_back(std::move(batch));
    }
    return out;
  }

  double next_flush() const { return next_flush_; }

 private:
  struct Pending {
    TelemetryMessage msg;
    double arrival = 0.0;
  };
  struct SensorState {
    SensorKind kind = SensorKind::Gps;
    std::uint64_t next_expected = 1;
    std::map<std::uint64_t, Pending> buffer;
    std::set<std::uint64_t> gapped;
    std::vector<SeqGap> gaps;
    double offset = 0.0;
    GatewayCounters counters;
  };

  double horizon_;
  double window_;
  double next_flush_;
  std::map<std::string, SensorState> sensors_;
};

// --- cloud -------------------------------------------------------------------

struct StoreAck {
  std::size_t stored = 0;
  std::size_t duplicates = 0;
};

struct TimedSample {
  double ts = 0.0;
  std::vector<double> values;
};

/// Idempotent per (sensor_id, seq) store, partitioned by session.
class Cloud {
 public:
  void open_session(const std::string& session_id) { sessions_[session_id]; }

  StoreAck store(const std::string& session_id, const ForwardedBatch& batch) {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "no session '" + session_id + "'");
    StoreAck ack;
    auto& per_sensor = it->second[batch.sensor_id];
    for (const auto& m : batch.messages) {
      if (per_sensor.emplace(m.seq, m).second) ++ack.stored;
      else ++ack.duplicates;
    }
    return ack;
  }

  /// Samples of every sensor of `kind` with corrected timestamp in [t0, t1), time-ordered.
  std::vector<TimedSample> query(const std::string& session_id, SensorKind kind, double t0, double t1) const {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "no session '" + session_id + "'");
    std::vector<TimedSample> out;
    for (const auto& [sid, msgs] : it->second)
      for (const auto& [seq, m] : msgs) {
        if (m.kind != kind) continue;
        for (std::size_t j = 0; j < m.batch_size(); ++j) {
          const double ts = m.sample_ts(j);
          if (ts < t0 || ts >= t1) continue;
          out.push_back({ts, {m.payload.begin() + static_cast<std::ptrdiff_t>(j * m.width),
                              m.payload.begin() + static_cast<std::ptrdiff_t>((j + 1) * m.width)}});
        }
      }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });
    return out;
  }

  const std::map<std::uint64_t, TelemetryMessage>& messages(const std::string& session_id, const std::string& sensor_id) const {
    static const std::map<std::uint64_t, TelemetryMessage> empty;
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "no session '" + session_id + "'");
    auto jt = it->second.find(sensor_id);
    return jt == it->second.end() ? empty : jt->second;
  }

  std::size_t sample_count(const std::string& session_id, const std::string& sensor_id) const {
    std::size_t n = 0;
    for (const auto& [seq, m] : messages(session_id, sensor_id)) n += m.batch_size();
    return n;
  }

 private:
  std::map<std::string, std::map<std::string, std::map<std::uint64_t, TelemetryMessage>>> sessions_;
};

// --- wire format -------------------------------------------------------------

/// Little-endian float32 sidecar for bulky payloads.
inline std::size_t append_f32(std::string& sidecar, std::span<const double> values) {
  const std::size_t offset = sidecar.size() / 4;
  for (double v : values) {
    const auto f = static_cast<float>(v);
    auto bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    char bytes[4];
    std::memcpy(bytes, &bits, 4);
    sidecar.append(bytes, 4);
  }
  return offset;
}

inline std::vector<double> read_f32(std::string_view sidecar, std::size_t offset, std::size_t count) {
  if ((offset + count) * 4 > sidecar.size()) fail(ErrorCode::CorruptLog, "sidecar reference out of range");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, sidecar.data() + (offset + i) * 4, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

/// One record per line, tab separated, fixed field order:
///   msg sensor_id kind seq device_ts corrected_ts|- width period batch payload
/// where payload is comma-separated values or "bin:<offset>" into the sidecar.
inline std::string format_message(const TelemetryMessage& m, std::string* sidecar = nullptr) {
  std::string line = "msg\t" + m.sensor_id + "\t" + to_string(m.kind) + "\t" + std::to_string(m.seq) + "\t" +
                     fmt6(m.device_ts_s) + "\t" + (m.corrected_ts_s ? fmt6(*m.corrected_ts_s) : "-") + "\t" +
                     std::to_string(m.width) + "\t" + fmt6(m.sample_period_s) + "\t" + std::to_string(m.batch_size()) + "\t";
  if (sidecar) {
    line += "bin:" + std::to_string(append_f32(*sidecar, m.payload));
  } else {
    for (std::size_t i = 0; i < m.payload.size(); ++i) {
      if (i) line += ",";
      line += fmt6(m.payload[i]);
    }
  }
  return line;
}

inline TelemetryMessage parse_message(std::string_view line, std::string_view sidecar = {}) {
  const auto f = split(line, '\t');
  if (f.size() != 10 || f[0] != "msg") fail(ErrorCode::CorruptLog, "malformed message record");
  TelemetryMessage m;
  m.sensor_id = std::string(f[1]);
  m.kind = parse_sensor_kind(f[2]);
  m.seq = std::stoull(std::string(f[3]));
  m.device_ts_s = parse_double(f[4]);
  if (f[5] != "-") m.corrected_ts_s = parse_double(f[5]);
  m.width = std::stoull(std::string(f[6]));
  m.sample_period_s = parse_double(f[7]);
  const std::size_t batch = std::stoull(std::string(f[8]));
  if (f[9].rfind("bin:", 0) == 0) {
    m.payload = read_f32(sidecar, std::stoull(std::string(f[9].substr(4))), batch * m.width);
  } else if (!f[9].empty()) {
    for (auto v : split(f[9], ',')) m.payload.push_back(parse_double(v));
  }
  if (m.payload.size() != batch * m.width) fail(ErrorCode::CorruptLog, "payload length disagrees with batch size");
  return m;
}

// --- discrete-event scheduler ------------------------------------------------

/// Timestamp-ordered event queue; equal timestamps run in insertion order.
class Scheduler {
 public:
  using Action = std::function<void()>;

  void schedule(double t, Action a) {
    if (t < now_) t = now_;
    queue_.push({t, next_id_++, std::move(a)});
  }

  bool empty() const { return queue_.empty(); }
  double now() const { return now_; }
  std::optional<double> next_time() const {
    if (queue_.empty()) return std::nullopt;
    return queue_.top().t;
  }

  /// Runs one event; false when nothing is queued.
  bool step() {
    if (queue_.empty()) return false;
    Entry e = queue_.top();
    queue_.pop();
    now_ = e.t;
    e.action();
    return true;
  }

  void run_until(double t) {
    while (!queue_.empty() && queue_.top().t <= t) step();
    now_ = std::max(now_, t);
  }

 private:
  struct Entry {
    double t;
    std::uint64_t id;
    Action action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const { return a.t != b.t ? a.t > b.t : a.id > b.id; }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::uint64_t next_id_ = 0;
  double now_ = 0.0;
};

}  // namespace acta::pipeline
