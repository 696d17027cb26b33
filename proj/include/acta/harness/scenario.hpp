#pragma once

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "acta/common.hpp"
#include "acta/geo.hpp"
#include "acta/harness/profile.hpp"
#include "acta/learner.hpp"
#include "acta/network.hpp"
#include "acta/pipeline.hpp"
#include "acta/protocol.hpp"
#include "acta/signal.hpp"

namespace acta::harness {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Seeds every run needs; a seed set must name all of them.
inline const std::vector<std::string>& seed_names() {
  static const std::vector<std::string> names = {"walker", "eeg", "sensors", "links", "sync", "protocol", "acks", "learner", "network"};
  return names;
}

using SeedSet = std::map<std::string, std::uint64_t>;

struct WalkerParams {
  double speed_mps = 1.2;
  double speed_noise_mps = 0.1;
  double lateral_noise_m = 1.0;
};

struct SensorClock {
  double offset_s = 0.0;
  double drift_ppm = 0.0;
};

struct DeviceSettings {
  std::size_t eeg_samples_per_message = 25;
  double gps_rate_hz = 1.0;
  double heart_rate_hz = 1.0;
  double accel_rate_hz = 50.0;
  std::size_t accel_samples_per_message = 10;
  std::map<std::string, SensorClock> clocks = {{"eeg", {0.120, 20.0}},
                                               {"gps", {-0.250, 15.0}},
                                               {"heart_rate", {-0.250, 15.0}},
                                               {"accel", {-0.250, 15.0}}};
  pipeline::BatteryState watch_battery{100.0, 0.0, {{"gps", 30.0}}};
  pipeline::BatteryState headset_battery{500.0, 0.0, {{"radio", 12.0}, {"cpu", 8.0}}};
};

struct LinkSettings {
  pipeline::LinkModel sensor_gateway{30.0, 20.0, 0.0, 0};
  pipeline::LinkModel gateway_cloud{80.0, 40.0, 0.0, 0};
};

struct AckModel {
  double probability = 0.9;
  double mean_delay_s = 3.0;
};

struct MetricsSettings {
  bool enabled = true;
  double threshold = network::kDefaultThreshold;
};

enum class FeatureSource { BandPowers, BandPowersAndGraph };

inline const char* to_string(FeatureSource f) {
  return f == FeatureSource::BandPowers ? "band_powers" : "band_powers+graph";
}

struct LearnerSettings {
  learner::TrainOptions train;
  learner::RetrainPolicy retrain;
  FeatureSource features = FeatureSource::BandPowers;
  double holdout_fraction = 0.25;
};

struct Scenario {
  int schema_version = kSchemaVersion;
  std::string name = "default";
  geo::PathSpec path;
  ParticipantProfile participant;
  protocol::Phase phase = protocol::Phase::OpenLoopNudges;
  int n_sessions = 4;
  signal::EegConfig eeg;
  std::vector<signal::Band> bands = signal::default_bands();
  signal::AttentionProfile attention_sim;  // modulation parameters; intervals come from the walker
  LinkSettings links;
  WalkerParams walker;
  DeviceSettings devices;
  std::map<std::string, SeedSet> seed_sets;
  std::string seed_set = "default";
  std::vector<protocol::DisturbanceSpec> task2;
  protocol::CaseCPolicy case_c_policy = protocol::CaseCPolicy::NoOp;
  bool adaptive = false;
  MetricsSettings metrics;
  LearnerSettings learner;
  AckModel acks;

  const SeedSet& seeds() const {
    auto it = seed_sets.find(seed_set);
    if (it == seed_sets.end()) fail(ErrorCode::ScenarioInvalid, "seed set '" + seed_set + "' not defined");
    return it->second;
  }
  std::uint64_t seed(const std::string& name) const {
    const auto& s = seeds();
    auto it = s.find(name);
    if (it == s.end()) fail(ErrorCode::ScenarioInvalid, "seed '" + name + "' missing from set '" + seed_set + "'");
    return it->second;
  }
};

// --- default route -------------------------------------------------------------

inline const geo::GeoPoint kDefaultOrigin{45.4642, 9.19};

/// L-shaped 1 km route: 600 m east then 400 m north, four landmarks and three
/// non-relevant places on the way, 20 m radii.
inline geo::PathSpec default_path() {
  using geo::PlaceKind;
  auto at = [](double e, double n) { return geo::from_planar(kDefaultOrigin, {e, n}); };
  auto place = [&](std::string id, PlaceKind k, double e, double n, int idx = 0) {
    return geo::Place{std::move(id), k, idx, at(e, n), geo::kDefaultRadiusM};
  };
  geo::PathSpec p;
  p.id = "milan-l-route";
  p.start = place("start", PlaceKind::Start, 0, 0);
  p.destination = place("destination", PlaceKind::Destination, 600, 400);
  p.landmarks = {place("lm1", PlaceKind::Landmark, 150, 0, 1), place("lm2", PlaceKind::Landmark, 400, 0, 2),
                 place("lm3", PlaceKind::Landmark, 600, 100, 3), place("lm4", PlaceKind::Landmark, 600, 300, 4)};
  p.non_relevant = {place("nr1", PlaceKind::NonRelevant, 275, 0), place("nr2", PlaceKind::NonRelevant, 525, 0),
                    place("nr3", PlaceKind::NonRelevant, 600, 200)};
  p.polyline = {at(0, 0), at(600, 0), at(600, 400)};
  return p;
}

inline SeedSet make_seed_set(std::uint64_t base) {
  SeedSet s;
  std::uint64_t salt = 1;
  for (const auto& n : seed_names()) s[n] = mix_seed(base, salt++) % 1000000007ULL;
  return s;
}

inline Scenario default_scenario() {
  Scenario s;
  s.path = default_path();
  s.seed_sets["default"] = make_seed_set(1);
  s.seed_sets["alt"] = make_seed_set(2);
  s.task2 = {{"q1", 120.0, protocol::DisturbanceKind::AuditoryQuestion, "What did you see at the last corner?", 10.0, false},
             {"q2", 480.0, protocol::DisturbanceKind::AuditoryQuestion, "Which shop comes next?", 10.0, false}};
  return s;
}

// --- JSON ---------------------------------------------------------------------

namespace detail {

/// Object reader that rejects unknown keys and reports missing required ones.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCode::ScenarioInvalid, where_ + ": expected an object");
  }
  ~Obj() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(ErrorCode::ScenarioInvalid, where_ + ": unknown key '" + k + "'");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  const json& at(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) fail(ErrorCode::ScenarioInvalid, where_ + ": missing key '" + k + "'");
    return j_.at(k);
  }

  template <class T>
  void opt(const std::string& k, T& out) {
    seen_.insert(k);
    if (!j_.contains(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::ScenarioInvalid, where_ + "." + k + ": " + e.what());
    }
  }

  template <class T>
  T req(const std::string& k) {
    const json& v = at(k);
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::ScenarioInvalid, where_ + "." + k + ": " + e.what());
    }
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline json place_json(const geo::Place& p) {
  return {{"id", p.id}, {"lat", p.center.lat}, {"lon", p.center.lon}, {"radius_m", p.radius_m}};
}

inline geo::Place place_from(const json& j, geo::PlaceKind kind, int index, const std::string& where) {
  Obj o(j, where);
  geo::Place p;
  p.id = o.req<std::string>("id");
  p.kind = kind;
  p.landmark_index = index;
  try {
    p.center = geo::GeoPoint(o.req<double>("lat"), o.req<double>("lon"));
  } catch (const Error& e) {
    fail(ErrorCode::ScenarioInvalid, where + ": " + e.what());
  }
  o.opt("radius_m", p.radius_m);
  return p;
}

inline json link_json(const pipeline::LinkModel& l) {
  return {{"latency_ms", l.latency_ms}, {"jitter_ms", l.jitter_ms}, {"loss_rate", l.loss_rate}};
}

inline pipeline::LinkModel link_from(const json& j, pipeline::LinkModel l, const std::string& where) {
  Obj o(j, where);
  o.opt("latency_ms", l.latency_ms);
  o.opt("jitter_ms", l.jitter_ms);
  o.opt("loss_rate", l.loss_rate);
  return l;
}

inline json battery_json(const pipeline::BatteryState& b) { return {{"capacity_mah", b.capacity_mah}, {"load_ma", b.load_ma}}; }

inline pipeline::BatteryState battery_from(const json& j, pipeline::BatteryState b, const std::string& where) {
  Obj o(j, where);
  o.opt("capacity_mah", b.capacity_mah);
  o.opt("load_ma", b.load_ma);
  return b;
}

}  // namespace detail

inline json path_to_json(const geo::PathSpec& p) {
  json j;
  j["id"] = p.id;
  j["start"] = detail::place_json(p.start);
  j["destination"] = detail::place_json(p.destination);
  j["landmarks"] = json::array();
  for (const auto& l : p.landmarks) j["landmarks"].push_back(detail::place_json(l));
  j["non_relevant"] = json::array();
  for (const auto& l : p.non_relevant) j["non_relevant"].push_back(detail::place_json(l));
  j["polyline"] = json::array();
  for (const auto& q : p.polyline) j["polyline"].push_back({q.lat, q.lon});
  return j;
}

inline geo::PathSpec path_from_json(const json& j) {
  using geo::PlaceKind;
  detail::Obj o(j, "path");
  geo::PathSpec p;
  p.id = o.req<std::string>("id");
  p.start = detail::place_from(o.at("start"), PlaceKind::Start, 0, "path.start");
  p.destination = detail::place_from(o.at("destination"), PlaceKind::Destination, 0, "path.destination");
  int k = 0;
  for (const auto& l : o.at("landmarks")) {
    ++k;
    p.landmarks.push_back(detail::place_from(l, PlaceKind::Landmark, k, "path.landmarks[" + std::to_string(k - 1) + "]"));
  }
  int i = 0;
  for (const auto& l : o.at("non_relevant"))
    p.non_relevant.push_back(detail::place_from(l, PlaceKind::NonRelevant, 0, "path.non_relevant[" + std::to_string(i++) + "]"));
  for (const auto& q : o.at("polyline")) {
    if (!q.is_array() || q.size() != 2) fail(ErrorCode::ScenarioInvalid, "path.polyline: points are [lat, lon]");
    try {
      p.polyline.emplace_back(q[0].get<double>(), q[1].get<double>());
    } catch (const std::exception& e) {
      fail(ErrorCode::ScenarioInvalid, std::string("path.polyline: ") + e.what());
    }
  }
  return p;
}

inline json to_json(const Scenario& s) {
  json j;
  j["schema_version"] = s.schema_version;
  j["name"] = s.name;
  j["path"] = path_to_json(s.path);
  json exc = json::array();
  for (auto e : s.participant.exclusions) exc.push_back(to_string(e));
  j["participant"] = {{"id", s.participant.id},
                      {"age_years", s.participant.age_years},
                      {"mci_diagnosed", s.participant.mci_diagnosed},
                      {"informatics_entry_level", s.participant.informatics_entry_level},
                      {"exclusions", exc}};
  j["phase"] = protocol::to_string(s.phase);
  j["n_sessions"] = s.n_sessions;
  json bands = json::array();
  for (const auto& b : s.bands) bands.push_back({{"name", b.name}, {"lo_hz", b.lo_hz}, {"hi_hz", b.hi_hz}});
  j["eeg"] = {{"channels", s.eeg.channels}, {"fs_hz", s.eeg.fs_hz}, {"window_s", s.eeg.window_s},
              {"overlap", s.eeg.overlap}, {"bands", bands}};
  const auto& a = s.attention_sim;
  j["attention_sim"] = {{"d_theta", a.d_theta},           {"d_alpha", a.d_alpha},   {"amp_theta_uv", a.amp_theta_uv},
                        {"amp_alpha_uv", a.amp_alpha_uv}, {"amp_beta_uv", a.amp_beta_uv}, {"noise_uv", a.noise_uv},
                        {"noise_pole", a.noise_pole}};
  j["links"] = {{"sensor_gateway", detail::link_json(s.links.sensor_gateway)},
                {"gateway_cloud", detail::link_json(s.links.gateway_cloud)}};
  j["walker"] = {{"speed_mps", s.walker.speed_mps}, {"speed_noise_mps", s.walker.speed_noise_mps},
                 {"lateral_noise_m", s.walker.lateral_noise_m}};
  json clocks = json::object();
  for (const auto& [k, c] : s.devices.clocks) clocks[k] = {{"offset_s", c.offset_s}, {"drift_ppm", c.drift_ppm}};
  const auto& d = s.devices;
  j["devices"] = {{"eeg_samples_per_message", d.eeg_samples_per_message},
                  {"gps_rate_hz", d.gps_rate_hz},
                  {"heart_rate_hz", d.heart_rate_hz},
                  {"accel_rate_hz", d.accel_rate_hz},
                  {"accel_samples_per_message", d.accel_samples_per_message},
                  {"clocks", clocks},
                  {"watch_battery", detail::battery_json(d.watch_battery)},
                  {"headset_battery", detail::battery_json(d.headset_battery)}};
  j["seed_sets"] = s.seed_sets;
  j["seed_set"] = s.seed_set;
  json t2 = json::array();
  for (const auto& x : s.task2)
    t2.push_back({{"id", x.id}, {"trigger_offset_s", x.trigger_ts_offset_s}, {"payload", x.payload},
                  {"response_deadline_s", x.response_deadline_s}});
  j["task2"] = t2;
  j["case_c_policy"] = protocol::to_string(s.case_c_policy);
  j["adaptive"] = s.adaptive;
  j["metrics"] = {{"enabled", s.metrics.enabled}, {"threshold", s.metrics.threshold}};
  const auto& t = s.learner.train;
  j["learner"] = {{"epochs", t.epochs},
                  {"step_size", t.step_size},
                  {"l2", t.l2},
                  {"min_per_class", t.min_per_class},
                  {"retrain_min_new_records", s.learner.retrain.min_new_records},
                  {"features", to_string(s.learner.features)},
                  {"holdout_fraction", s.learner.holdout_fraction}};
  j["acks"] = {{"probability", s.acks.probability}, {"mean_delay_s", s.acks.mean_delay_s}};
  return j;
}

/// Parses a scenario. schema_version, path and participant are required, the
/// rest default to default_scenario(). Unknown keys are rejected.
inline Scenario scenario_from_json(const json& j) {
  using detail::Obj;
  Scenario s = default_scenario();
  Obj o(j, "scenario");
  s.schema_version = o.req<int>("schema_version");
  if (s.schema_version != kSchemaVersion)
    fail(ErrorCode::ScenarioInvalid, "unsupported schema_version " + std::to_string(s.schema_version));
  o.opt("name", s.name);
  s.path = path_from_json(o.at("path"));
  if (o.has("participant")) {
    Obj p(o.at("participant"), "participant");
    p.opt("id", s.participant.id);
    p.opt("age_years", s.participant.age_years);
    p.opt("mci_diagnosed", s.participant.mci_diagnosed);
    p.opt("informatics_entry_level", s.participant.informatics_entry_level);
    std::vector<std::string> exc;
    p.opt("exclusions", exc);
    s.participant.exclusions.clear();
    for (const auto& e : exc) s.participant.exclusions.insert(parse_exclusion(e));
  } else {
    o.at("participant");
  }
  if (o.has("phase")) s.phase = protocol::parse_phase(o.req<std::string>("phase"));
  o.opt("n_sessions", s.n_sessions);
  if (o.has("eeg")) {
    Obj e(o.at("eeg"), "eeg");
    e.opt("channels", s.eeg.channels);
    e.opt("fs_hz", s.eeg.fs_hz);
    e.opt("window_s", s.eeg.window_s);
    e.opt("overlap", s.eeg.overlap);
    if (e.has("bands")) {
      s.bands.clear();
      for (const auto& b : e.at("bands")) {
        Obj bo(b, "eeg.bands");
        s.bands.push_back({bo.req<std::string>("name"), bo.req<double>("lo_hz"), bo.req<double>("hi_hz")});
      }
    }
  }
  if (o.has("attention_sim")) {
    Obj a(o.at("attention_sim"), "attention_sim");
    auto& p = s.attention_sim;
    a.opt("d_theta", p.d_theta);
    a.opt("d_alpha", p.d_alpha);
    a.opt("amp_theta_uv", p.amp_theta_uv);
    a.opt("amp_alpha_uv", p.amp_alpha_uv);
    a.opt("amp_beta_uv", p.amp_beta_uv);
    a.opt("noise_uv", p.noise_uv);
    a.opt("noise_pole", p.noise_pole);
  }
  if (o.has("links")) {
    Obj l(o.at("links"), "links");
    if (l.has("sensor_gateway")) s.links.sensor_gateway = detail::link_from(l.at("sensor_gateway"), s.links.sensor_gateway, "links.sensor_gateway");
    if (l.has("gateway_cloud")) s.links.gateway_cloud = detail::link_from(l.at("gateway_cloud"), s.links.gateway_cloud, "links.gateway_cloud");
  }
  if (o.has("walker")) {
    Obj w(o.at("walker"), "walker");
    w.opt("speed_mps", s.walker.speed_mps);
    w.opt("speed_noise_mps", s.walker.speed_noise_mps);
    w.opt("lateral_noise_m", s.walker.lateral_noise_m);
  }
  if (o.has("devices")) {
    Obj d(o.at("devices"), "devices");
    auto& v = s.devices;
    d.opt("eeg_samples_per_message", v.eeg_samples_per_message);
    d.opt("gps_rate_hz", v.gps_rate_hz);
    d.opt("heart_rate_hz", v.heart_rate_hz);
    d.opt("accel_rate_hz", v.accel_rate_hz);
    d.opt("accel_samples_per_message", v.accel_samples_per_message);
    if (d.has("clocks")) {
      for (const auto& [k, c] : d.at("clocks").items()) {
        if (!v.clocks.count(k)) fail(ErrorCode::ScenarioInvalid, "devices.clocks: unknown sensor '" + k + "'");
        Obj co(c, "devices.clocks." + k);
        co.opt("offset_s", v.clocks[k].offset_s);
        co.opt("drift_ppm", v.clocks[k].drift_ppm);
      }
    }
    if (d.has("watch_battery")) v.watch_battery = detail::battery_from(d.at("watch_battery"), v.watch_battery, "devices.watch_battery");
    if (d.has("headset_battery"))
      v.headset_battery = detail::battery_from(d.at("headset_battery"), v.headset_battery, "devices.headset_battery");
  }
  if (o.has("seed_sets")) s.seed_sets = o.req<std::map<std::string, SeedSet>>("seed_sets");
  o.opt("seed_set", s.seed_set);
  if (o.has("task2")) {
    s.task2.clear();
    for (const auto& t : o.at("task2")) {
      Obj to(t, "task2");
      protocol::DisturbanceSpec d;
      d.id = to.req<std::string>("id");
      d.trigger_ts_offset_s = to.req<double>("trigger_offset_s");
      to.opt("payload", d.payload);
      to.opt("response_deadline_s", d.response_deadline_s);
      s.task2.push_back(d);
    }
  }
  if (o.has("case_c_policy")) s.case_c_policy = protocol::parse_case_c_policy(o.req<std::string>("case_c_policy"));
  o.opt("adaptive", s.adaptive);
  if (o.has("metrics")) {
    Obj m(o.at("metrics"), "metrics");
    m.opt("enabled", s.metrics.enabled);
    m.opt("threshold", s.metrics.threshold);
  }
  if (o.has("learner")) {
    Obj l(o.at("learner"), "learner");
    auto& t = s.learner.train;
    l.opt("epochs", t.epochs);
    l.opt("step_size", t.step_size);
    l.opt("l2", t.l2);
    l.opt("min_per_class", t.min_per_class);
    l.opt("retrain_min_new_records", s.learner.retrain.min_new_records);
    l.opt("holdout_fraction", s.learner.holdout_fraction);
    if (l.has("features")) {
      const auto f = l.req<std::string>("features");
      if (f == "band_powers") s.learner.features = FeatureSource::BandPowers;
      else if (f == "band_powers+graph") s.learner.features = FeatureSource::BandPowersAndGraph;
      else fail(ErrorCode::ScenarioInvalid, "unknown feature source '" + f + "'");
    }
  }
  if (o.has("acks")) {
    Obj a(o.at("acks"), "acks");
    a.opt("probability", s.acks.probability);
    a.opt("mean_delay_s", s.acks.mean_delay_s);
  }
  return s;
}

inline Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ScenarioInvalid, std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

/// Canonical text form: the log header and the scenario hash use it.
inline std::string canonical_text(const Scenario& s) { return to_json(s).dump(); }

inline std::string scenario_hash(const Scenario& s) { return sha256_hex(canonical_text(s)); }

/// Throws ScenarioInvalid naming the first problem found.
inline void validate_scenario(const Scenario& s) {
  auto wrap = [](auto&& fn, const std::string& what) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ScenarioInvalid) throw;
      fail(ErrorCode::ScenarioInvalid, what + ": " + e.what());
    }
  };
  wrap([&] { geo::validate_path(s.path); }, "path");
  wrap([&] { signal::validate(s.eeg, s.bands); }, "eeg");
  for (const auto& b : s.bands) wrap([&] { signal::check_band(b, s.eeg.fs_hz); }, "eeg.bands");
  wrap([&] { pipeline::validate(s.links.sensor_gateway); }, "links.sensor_gateway");
  wrap([&] { pipeline::validate(s.links.gateway_cloud); }, "links.gateway_cloud");
  if (s.n_sessions < 2) fail(ErrorCode::ScenarioInvalid, "n_sessions must be >= 2");
  if (!(s.walker.speed_mps > 0.0) || s.walker.speed_noise_mps < 0.0 || s.walker.lateral_noise_m < 0.0)
    fail(ErrorCode::ScenarioInvalid, "walker parameters out of range");
  const auto elig = validate_profile(s.participant);
  if (!elig.eligible) {
    std::string why;
    for (const auto& r : elig.reasons) why += (why.empty() ? "" : ",") + r;
    fail(ErrorCode::ScenarioInvalid, "participant not eligible: " + why);
  }
  for (const auto& n : seed_names()) s.seed(n);
  const auto& d = s.devices;
  const double eeg_rate = s.eeg.fs_hz / static_cast<double>(d.eeg_samples_per_message);
  if (d.eeg_samples_per_message == 0 || std::abs(eeg_rate - std::round(eeg_rate * 1e6) / 1e6) > 1e-9)
    fail(ErrorCode::ScenarioInvalid, "eeg fs must be a multiple of samples_per_message giving a representable rate");
  if (s.eeg.window_samples() % d.eeg_samples_per_message != 0 || s.eeg.hop_samples() % d.eeg_samples_per_message != 0)
    fail(ErrorCode::ScenarioInvalid, "eeg window and hop must be whole messages");
  if (!(d.gps_rate_hz > 0) || !(d.heart_rate_hz > 0) || !(d.accel_rate_hz > 0) || d.accel_samples_per_message == 0)
    fail(ErrorCode::ScenarioInvalid, "device rates must be positive");
  std::set<std::string> ids;
  for (const auto& t : s.task2) {
    if (!ids.insert(t.id).second) fail(ErrorCode::ScenarioInvalid, "duplicate disturbance id " + t.id);
    if (t.trigger_ts_offset_s < 0.0) fail(ErrorCode::ScenarioInvalid, "disturbance trigger must be >= 0");
  }
  if (!(s.acks.probability >= 0.0 && s.acks.probability <= 1.0) || !(s.acks.mean_delay_s > 0.0))
    fail(ErrorCode::ScenarioInvalid, "ack model out of range");
  if (!(s.learner.holdout_fraction > 0.0 && s.learner.holdout_fraction < 1.0))
    fail(ErrorCode::ScenarioInvalid, "holdout_fraction must be in (0,1)");
}

// --- walker -------------------------------------------------------------------

inline constexpr double kLateralPole = 0.9;

/// Walks the polyline at speed + N(0, speed_noise) per tick with an AR(1)
/// lateral offset whose stationary deviation is lateral_noise_m. Sampled at
/// `rate_hz` from t = 0; the last sample sits on the destination.
inline geo::Trajectory simulate_walker(const geo::PathSpec& path, const WalkerParams& w, double rate_hz, std::uint64_t seed) {
  const double length = geo::polyline_length(path.polyline);
  const double dt = 1.0 / rate_hz;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double innov = w.lateral_noise_m * std::sqrt(1.0 - kLateralPole * kLateralPole);
  double lateral = w.lateral_noise_m * gauss(rng);
  double s = 0.0;
  geo::Trajectory traj;
  const geo::GeoPoint origin = path.polyline.front();
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    const bool done = s >= length;
    const auto on = geo::point_at_arc(path.polyline, std::min(s, length));
    const auto h = geo::heading_at_arc(path.polyline, std::min(s, length));
    const double off = done || k == 0 ? 0.0 : lateral;
    const auto base = geo::to_planar(origin, on);
    traj.samples.push_back({t, geo::from_planar(origin, {base.x - h.y * off, base.y + h.x * off})});
    if (done) break;
    s += std::max(0.1 * w.speed_mps, w.speed_mps + w.speed_noise_mps * gauss(rng)) * dt;
    lateral = kLateralPole * lateral + innov * gauss(rng);
  }
  return traj;
}

/// Time intervals during which the walker is inside any landmark radius,
/// resolved at `step_s` on the interpolated trajectory.
inline std::vector<std::pair<double, double>> landmark_intervals(const geo::Trajectory& traj, const geo::PathSpec& path,
                                                                 double step_s = 0.02) {
  std::vector<std::pair<double, double>> out;
  double open = 0.0;
  bool inside_run = false;
  const auto n = static_cast<std::size_t>(std::floor((traj.t_end() - traj.t_begin()) / step_s));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = traj.t_begin() + static_cast<double>(i) * step_s;
    const auto pos = geo::position_at(traj, t);
    bool inside = false;
    for (const auto& lm : path.landmarks) inside = inside || geo::is_within(pos, lm);
    if (inside && !inside_run) open = t;
    if (!inside && inside_run) out.emplace_back(open, t);
    inside_run = inside;
  }
  if (inside_run) out.emplace_back(open, traj.t_end() + step_s);
  return out;
}

}  // namespace acta::harness
