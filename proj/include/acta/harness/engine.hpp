#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "acta/common.hpp"
#include "acta/geo.hpp"
#include "acta/harness/scenario.hpp"
#include "acta/harness/session_log.hpp"
#include "acta/learner.hpp"
#include "acta/network.hpp"
#include "acta/pipeline.hpp"
#include "acta/protocol.hpp"
#include "acta/signal.hpp"

namespace acta::harness {

/// Operator command fixed to a session and a session-relative time.
struct ScriptedCommand {
  int session = 1;
  double at_s = 0.0;
  json command;
};

struct CommandOutcome {
  bool applied = false;
  std::string reason;  // empty when applied
};

struct RunOptions {
  std::vector<ScriptedCommand> commands;
  double pace = 0.0;            // simulated seconds per wall second; 0 runs unpaced
  double intermission_s = 0.0;  // simulated pause between sessions, paced mode only
  bool start_paused = false;
  bool live_metrics = false;    // compute graph metrics online for the ops snapshot
  LogWriter::Listener on_line;  // every log record, in order
};

struct SensorStats {
  std::uint64_t emitted = 0;
  std::uint64_t uplink_dropped = 0;
  std::uint64_t late_dropped = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t forwarded = 0;
  std::uint64_t wan_dropped = 0;
  std::uint64_t stored = 0;
  std::optional<double> exhausted_at;
  double remaining = 1.0;
};

struct SessionStats {
  int session = 0;
  double duration_s = 0.0;
  std::vector<double> nudge_probability;  // as executed
  std::map<std::string, SensorStats> sensors;
  std::vector<protocol::FeedbackEvent> feedback;
  std::size_t classifications = 0;
};

struct RunResult {
  SessionLog log;
  learner::Dataset dataset;  // Phase 1: labeled windows; Phase 2: base plus semi-supervised records
  std::optional<learner::AttentionModel> model;
  std::vector<SessionDerived> sessions;
  std::vector<SessionStats> stats;
};

inline constexpr int kSyncExchanges = 8;
inline constexpr double kDrainDelayS = 2.0;
inline constexpr double kStepFrequencyHz = 1.8;
inline constexpr std::size_t kTraceLength = 60;

/// Runs every session of a scenario on one thread. Other threads talk to it
/// only through submit() and snapshot().
class Engine {
 public:
  Engine(Scenario scenario, std::optional<learner::AttentionModel> model = std::nullopt, RunOptions options = {},
         std::optional<learner::Dataset> base_dataset = std::nullopt)
      : s_(std::move(scenario)), model_(std::move(model)), opt_(std::move(options)), writer_(opt_.on_line) {
    validate_scenario(s_);
    if (s_.phase == protocol::Phase::ClosedLoopNfb) {
      if (!model_) fail(ErrorCode::ModelMissing, "closed-loop sessions need a trained model");
      if (model_->feature_names != feature_layout(s_))
        fail(ErrorCode::ScenarioInvalid, "model features do not match the scenario's feature layout");
    }
    dataset_ = base_dataset.value_or(learner::Dataset{});
    if (dataset_.feature_names.empty()) dataset_.feature_names = feature_layout(s_);
    if (dataset_.participant_id.empty()) dataset_.participant_id = s_.participant.id;
    paused_ = opt_.start_paused;
    policy_ = s_.case_c_policy;
    publish();
  }

  const Scenario& scenario() const { return s_; }

  RunResult run() {
    header();
    plans_ = protocol::plan_sessions(s_.path, s_.n_sessions, s_.phase);
    for (auto& p : plans_) p.disturbances = s_.task2;
    RunResult result;
    std::optional<geo::BehavioralReport> prev_behavior;
    std::vector<double> prev_executed;
    int begun = 0;
    for (int k = 1; k <= s_.n_sessions && !stop_; ++k) {
      between_sessions();
      if (stop_) break;
      maybe_retrain(k);
      protocol::SessionPlan plan = plans_[static_cast<std::size_t>(k - 1)];
      if (k > 1) plan.previous_nudge_probability = prev_executed;
      if (s_.adaptive && prev_behavior) plan = protocol::adjust_plan(plan, *prev_behavior);
      for (const auto& [id, p] : overrides_)
        for (std::size_t i = 0; i < s_.path.landmarks.size(); ++i)
          if (s_.path.landmarks[i].id == id) plan.nudge_probability[i] = p;
      overrides_.clear();
      plans_[static_cast<std::size_t>(k - 1)].active = true;
      ++begun;
      auto [derived, stats] = run_session(k, std::move(plan));
      prev_executed = stats.nudge_probability;
      prev_behavior = derived.behavior;
      if (s_.phase == protocol::Phase::OpenLoopNudges)
        for (const auto& r : derived.dataset.records) dataset_.append(r);
      result.sessions.push_back(std::move(derived));
      result.stats.push_back(std::move(stats));
    }
    {
      std::lock_guard lock(state_mu_);
      finished_ = true;
    }
    result.log = writer_.finish(begun);
    drain_commands("run_finished");
    publish();
    result.dataset = dataset_;
    result.model = model_;
    return result;
  }

  /// Queues an operator command; the future resolves once the engine loop
  /// applied or rejected it.
  std::future<CommandOutcome> submit(json command) {
    std::promise<CommandOutcome> p;
    auto f = p.get_future();
    std::lock_guard lock(state_mu_);
    if (finished_) {
      p.set_value({false, "run_finished"});
      return f;
    }
    queue_.push_back({std::move(command), std::move(p)});
    pending_ = true;
    wake_.notify_all();
    return f;
  }

  json snapshot() const {
    std::lock_guard lock(state_mu_);
    return snapshot_;
  }

  void request_stop() {
    stop_ = true;
    wake_.notify_all();
  }

 private:
  // --- per-session live state -------------------------------------------------

  struct Agent {
    std::string id;
    pipeline::SensorKind kind;
    std::unique_ptr<pipeline::SensorAgent> agent;
    std::unique_ptr<pipeline::Link> uplink;
    SensorStats stats;
    bool exhaustion_logged = false;
  };

  struct Live {
    int k = 0;
    std::string cloud_session;
    double T = 0.0;
    pipeline::Scheduler sched;
    pipeline::Gateway gateway;
    std::unique_ptr<pipeline::Link> wan;
    double last_wan = 0.0;
    std::vector<Agent> agents;  // sorted by id
    std::unique_ptr<protocol::SessionController> controller;
    std::unique_ptr<WindowAssembler> assembler;
    std::optional<protocol::Classification> latest;
    std::optional<signal::FeatureVector> latest_fv;
    std::optional<geo::GeoPoint> position;
    std::mt19937_64 ack_rng;
    std::uint64_t net_seed = 0;
    SessionStats stats;
    std::deque<std::string> recent;
    std::deque<std::pair<double, double>> confidence;
    std::deque<network::MetricPoint> metrics;
  };

  struct Pending {
    json command;
    std::promise<CommandOutcome> done;
  };

  // --- log helpers --------------------------------------------------------------

  void line(const std::string& l) {
    writer_.line(l);
    if (live_ && (l.rfind("event\t", 0) == 0 || l.rfind("command\t", 0) == 0)) {
      live_->recent.push_back(l);
      if (live_->recent.size() > 20) live_->recent.pop_front();
    }
  }

  void event(double ts, std::initializer_list<std::string> fields) {
    std::string l = "event\t" + fmt6(ts);
    for (const auto& f : fields) l += "\t" + f;
    line(l);
  }

  void header() {
    writer_.line(kLogMagic);
    writer_.line("scenario\t" + canonical_text(s_));
    writer_.line("scenario_sha256\t" + scenario_hash(s_));
    writer_.line("seed_set\t" + s_.seed_set + "\t" + json(s_.seeds()).dump());
    writer_.close_segment(0);
  }

  // --- session --------------------------------------------------------------------

  std::pair<SessionDerived, SessionStats> run_session(int k, protocol::SessionPlan plan) {
    using pipeline::SensorKind;
    auto L = std::make_unique<Live>();
    live_ = L.get();
    L->k = k;
    L->cloud_session = "s" + std::to_string(k);
    L->net_seed = session_seed(s_, "network", k);
    L->ack_rng.seed(session_seed(s_, "acks", k));
    L->stats.session = k;

    const auto traj = simulate_walker(s_.path, s_.walker, s_.devices.gps_rate_hz, session_seed(s_, "walker", k));
    L->T = traj.t_end();
    L->stats.duration_s = L->T;
    auto profile = s_.attention_sim;
    profile.attention_intervals = landmark_intervals(traj, s_.path);
    const auto eeg = std::make_shared<signal::EegStream>(
        signal::generate_eeg(s_.eeg, profile, L->T + 1.0, session_seed(s_, "eeg", k), 1.0 / s_.eeg.fs_hz));

    build_agents(*L, traj, eeg);
    L->wan = std::make_unique<pipeline::Link>(with_seed(s_.links.gateway_cloud, mix_seed(session_seed(s_, "links", k), 100)));
    L->assembler = std::make_unique<WindowAssembler>(s_.eeg, s_.devices.eeg_samples_per_message);
    cloud_.open_session(L->cloud_session);

    line(join_tab({"session", std::to_string(k), "begin", protocol::to_string(s_.phase), s_.path.id}));
    std::string probs;
    for (double p : plan.nudge_probability) probs += (probs.empty() ? "" : ",") + fmt6(p);
    line(join_tab({"plan", std::to_string(k), probs.empty() ? "-" : probs, plan.pure_nfb ? "pure_nfb" : "nudges"}));
    if (model_) line("model\t" + learner::to_json(*model_).dump());
    synchronize_clocks(*L);

    L->controller = std::make_unique<protocol::SessionController>(s_.path, plan, session_seed(s_, "protocol", k), policy_);
    L->controller->start();

    for (std::size_t i = 0; i < L->agents.size(); ++i) schedule_emission(*L, i);
    schedule_flush(*L, L->gateway.window());
    L->sched.schedule(L->T + kDrainDelayS, [this, &L = *L] { deliver(L, L.gateway.flush(L.sched.now(), true)); });
    for (const auto& d : L->controller->plan().disturbances) schedule_disturbance(*L, d.trigger_ts_offset_s);
    for (const auto& c : opt_.commands)
      if (c.session == k) L->sched.schedule(c.at_s, [this, cmd = c.command] { apply_and_log(cmd); });

    publish();
    while (!L->sched.empty() && !stop_) {
      service_boundary();
      if (stop_) break;
      L->sched.step();
      if (opt_.pace > 0.0) publish();
    }
    L->controller->finish();

    for (auto& a : L->agents) {
      const auto& gc = L->gateway.counters(a.id);
      a.stats.emitted = a.agent->emitted();
      a.stats.late_dropped = gc.late_dropped;
      a.stats.duplicates = gc.duplicates;
      a.stats.forwarded = gc.forwarded;
      a.stats.exhausted_at = a.agent->exhausted_at();
      a.stats.remaining = a.agent->battery().remaining_fraction();
      const auto& st = a.stats;
      line(join_tab({"counters", a.id, "emitted=" + std::to_string(st.emitted), "uplink_dropped=" + std::to_string(st.uplink_dropped),
                     "late_dropped=" + std::to_string(st.late_dropped), "duplicates=" + std::to_string(st.duplicates),
                     "forwarded=" + std::to_string(st.forwarded), "wan_dropped=" + std::to_string(st.wan_dropped),
                     "stored=" + std::to_string(st.stored)}));
      line(join_tab({"battery", a.id, fmt6(st.remaining)}));
      L->stats.sensors[a.id] = st;
    }
    L->stats.nudge_probability = L->controller->plan().nudge_probability;

    auto derived = derive_session(s_, parse_segment(writer_.open_segment(), writer_.log().sidecar));
    for (const auto& l : derived.lines) line(l);
    writer_.close_segment(k);
    SessionStats stats = std::move(L->stats);
    publish();
    live_ = nullptr;
    return {std::move(derived), std::move(stats)};
  }

  static pipeline::LinkModel with_seed(pipeline::LinkModel m, std::uint64_t seed) {
    m.seed = seed;
    return m;
  }

  void build_agents(Live& L, const geo::Trajectory& traj, std::shared_ptr<signal::EegStream> eeg) {
    using pipeline::SensorKind;
    const auto& d = s_.devices;
    const std::uint64_t sensor_seed = session_seed(s_, "sensors", L.k);
    const std::uint64_t link_seed = session_seed(s_, "links", L.k);
    auto clock = [&](const std::string& id) { return d.clocks.at(id); };
    auto make = [&](pipeline::SensorSpec spec, pipeline::SampleSource src) {
      const auto c = clock(spec.id);
      spec.clock_offset_s = c.offset_s;
      spec.clock_drift_ppm = c.drift_ppm;
      Agent a;
      a.id = spec.id;
      a.kind = spec.kind;
      const std::uint64_t salt = L.agents.size() + 1;
      a.agent = std::make_unique<pipeline::SensorAgent>(std::move(spec), std::move(src));
      a.uplink = std::make_unique<pipeline::Link>(with_seed(s_.links.sensor_gateway, mix_seed(link_seed, salt)));
      L.agents.push_back(std::move(a));
    };

    const double T = L.T;
    const double accel_rate = d.accel_rate_hz / static_cast<double>(d.accel_samples_per_message);
    make({"accel", SensorKind::Accel, accel_rate, d.accel_samples_per_message, 1, 0, 0, {1.0, 0.0, {}}, false},
         [rng = std::make_shared<std::mt19937_64>(mix_seed(sensor_seed, 1)), T](std::uint64_t, double t, std::vector<double>& out) {
           std::normal_distribution<double> g(0.0, 0.3);
           const double gait = t <= T ? 3.0 * std::sin(2.0 * std::numbers::pi * kStepFrequencyHz * t) : 0.0;
           out[0] = 9.81 + gait + g(*rng);
         });
    make({"eeg", SensorKind::Eeg, s_.eeg.fs_hz / static_cast<double>(d.eeg_samples_per_message), d.eeg_samples_per_message,
          s_.eeg.channels.size(), 0, 0, d.headset_battery, true},
         [eeg](std::uint64_t i, double, std::vector<double>& out) {
           const auto idx = static_cast<std::size_t>(std::min<std::uint64_t>(i, eeg->samples() - 1));
           for (std::size_t c = 0; c < eeg->channels(); ++c) out[c] = eeg->data[c][idx];
         });
    make({"gps", SensorKind::Gps, d.gps_rate_hz, 1, 2, 0, 0, d.watch_battery, false},
         [&traj](std::uint64_t, double t, std::vector<double>& out) {
           const auto p = geo::position_at(traj, t);
           out[0] = p.lat;
           out[1] = p.lon;
         });
    make({"heart_rate", SensorKind::HeartRate, d.heart_rate_hz, 1, 1, 0, 0, {1.0, 0.0, {}}, false},
         [rng = std::make_shared<std::mt19937_64>(mix_seed(sensor_seed, 2))](std::uint64_t, double t, std::vector<double>& out) {
           std::normal_distribution<double> g(0.0, 1.0);
           out[0] = 72.0 + 6.0 * std::sin(2.0 * std::numbers::pi * t / 120.0) + g(*rng);
         });
  }

  /// NTP-style offset estimate per sensor: the exchange with the shortest
  /// round trip out of a few.
  void synchronize_clocks(Live& L) {
    std::mt19937_64 rng(session_seed(s_, "sync", L.k));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto& m = s_.links.sensor_gateway;
    for (auto& a : L.agents) {
      std::optional<pipeline::SyncExchange> best;
      for (int r = 0; r < kSyncExchanges; ++r) {
        const double t_req = 0.01 * r;
        const double d1 = std::max(0.0, m.latency_ms + u(rng) * m.jitter_ms) / 1000.0;
        const double d2 = std::max(0.0, m.latency_ms + u(rng) * m.jitter_ms) / 1000.0;
        pipeline::SyncExchange x{quantize6(t_req), quantize6(a.agent->device_time(t_req + d1)), quantize6(t_req + d1 + d2)};
        if (!best || x.t_resp_gw - x.t_req_gw < best->t_resp_gw - best->t_req_gw) best = x;
      }
      const double off = L.gateway.estimate_offset(a.id, *best);
      line(join_tab({"sync", a.id, fmt6(off)}));
    }
  }

  void schedule_emission(Live& L, std::size_t i) {
    auto& a = L.agents[i];
    if (a.agent->exhausted()) return;
    const double due = static_cast<double>(a.agent->seq() + 1) / a.agent->spec().rate_hz;
    if (due > L.T + 1e-9) return;
    L.sched.schedule(due, [this, &L, i, due] {
      auto& ag = L.agents[i];
      const auto r = ag.agent->emit(due);
      for (const auto& m : r.messages) {
        if (auto t = ag.uplink->delivery_time(due)) {
          L.sched.schedule(*t, [this, &L, m] { deliver(L, L.gateway.ingest(m, L.sched.now())); });
        } else {
          ++ag.stats.uplink_dropped;
        }
      }
      if (r.exhausted_at && !ag.exhaustion_logged) {
        ag.exhaustion_logged = true;
        event(*r.exhausted_at, {"battery_exhausted", ag.id});
      }
      schedule_emission(L, i);
    });
  }

  void schedule_flush(Live& L, double t) {
    if (t > L.T + kDrainDelayS - L.gateway.window() / 2) return;
    L.sched.schedule(t, [this, &L, t] {
      deliver(L, L.gateway.flush(L.sched.now()));
      schedule_flush(L, t + L.gateway.window());
    });
  }

  Agent& agent(Live& L, const std::string& id) {
    for (auto& a : L.agents)
      if (a.id == id) return a;
    fail(ErrorCode::InvalidConfig, "no sensor " + id);
  }

  /// Phone-side handling of forwarded batches, then the WAN hop to the cloud.
  /// The WAN is in-order: a batch never overtakes an earlier one.
  void deliver(Live& L, std::vector<pipeline::ForwardedBatch> batches) {
    const double now = L.sched.now();
    for (auto& b : batches) {
      if (b.kind == pipeline::SensorKind::Eeg) on_eeg(L, b);
      if (b.kind == pipeline::SensorKind::Gps) on_gps(L, b);
      auto t = L.wan->delivery_time(now);
      if (!t) {
        agent(L, b.sensor_id).stats.wan_dropped += b.messages.size();
        continue;
      }
      L.last_wan = std::max(*t, L.last_wan);
      L.sched.schedule(L.last_wan, [this, &L, batch = std::move(b)] { store(L, batch); });
    }
  }

  void store(Live& L, const pipeline::ForwardedBatch& b) {
    const auto& have = cloud_.messages(L.cloud_session, b.sensor_id);
    std::vector<const pipeline::TelemetryMessage*> fresh;
    for (const auto& m : b.messages)
      if (!have.count(m.seq)) fresh.push_back(&m);
    agent(L, b.sensor_id).stats.stored += cloud_.store(L.cloud_session, b).stored;
    for (const auto* m : fresh)
      line(m->kind == pipeline::SensorKind::Eeg ? pipeline::format_message(*m, &writer_.sidecar()) : pipeline::format_message(*m));
  }

  void on_eeg(Live& L, const pipeline::ForwardedBatch& b) {
    const bool classify = s_.phase == protocol::Phase::ClosedLoopNfb;
    for (const auto& m : b.messages) {
      for (const auto& w : L.assembler->add(m)) {
        if (opt_.live_metrics)
          if (auto pt = network::window_metrics(w, s_.metrics.threshold, L.net_seed)) {
            L.metrics.push_back(*pt);
            if (L.metrics.size() > kTraceLength) L.metrics.pop_front();
          }
        if (!classify) continue;
        auto fv = window_features(w, s_, L.net_seed);
        const auto p = learner::predict(*model_, fv);
        L.latest = protocol::Classification{p.label, p.confidence, w.start_ts};
        L.latest_fv = std::move(fv);
        ++L.stats.classifications;
        event(L.sched.now(), {"classify", fmt6(w.start_ts), to_string(p.label), fmt6(p.confidence)});
        L.confidence.emplace_back(w.start_ts, p.confidence);
        if (L.confidence.size() > kTraceLength) L.confidence.pop_front();
      }
    }
  }

  void on_gps(Live& L, const pipeline::ForwardedBatch& b) {
    const bool closed = s_.phase == protocol::Phase::ClosedLoopNfb;
    for (const auto& m : b.messages) {
      for (std::size_t j = 0; j < m.batch_size(); ++j) {
        const geo::GeoPoint pos(m.payload[j * 2], m.payload[j * 2 + 1]);
        const double ts = m.sample_ts(j);
        L.position = pos;
        const auto events = L.controller->on_position(pos, ts, closed ? L.latest : std::nullopt);
        for (const auto& e : events) {
          event(e.ts, {"feedback", protocol::to_string(e.kind), e.place_id.value_or("-"), protocol::to_string(e.rationale)});
          L.stats.feedback.push_back(e);
          if (closed && L.latest_fv) {
            const auto before = dataset_.records.size();
            dataset_ = learner::semi_supervised_update(dataset_, *L.latest_fv, e);
            if (dataset_.records.size() > before)
              event(e.ts, {"semi_supervised", to_string(dataset_.records.back().label), fmt6(L.latest_fv->ts)});
          }
        }
      }
    }
  }

  void schedule_disturbance(Live& L, double at) {
    L.sched.schedule(at, [this, &L] {
      for (const auto& d : protocol::inject_disturbances(L.controller->mutable_plan(), L.sched.now())) {
        const double now = L.sched.now();
        event(now, {"disturbance", d.id, field_text(d.payload)});
        std::bernoulli_distribution answers(s_.acks.probability);
        std::exponential_distribution<double> delay(1.0 / s_.acks.mean_delay_s);
        const bool answered = answers(L.ack_rng);
        const double rt = delay(L.ack_rng);
        if (answered && rt <= d.response_deadline_s)
          L.sched.schedule(now + rt, [this, &L, id = d.id] { event(L.sched.now(), {"ack", id}); });
        else
          L.sched.schedule(now + d.response_deadline_s, [this, &L, id = d.id] { event(L.sched.now(), {"ack_missed", id}); });
      }
    });
  }

  // --- commands ---------------------------------------------------------------

  void service_boundary() {
    if (pending_) drain_commands();
    if (opt_.pace <= 0.0 || !live_) return;
    const auto next = live_->sched.next_time();
    if (!next) return;
    while (!stop_) {
      if (pending_) drain_commands();
      std::unique_lock lock(state_mu_);
      if (paused_) {
        wake_.wait_for(lock, std::chrono::milliseconds(50));
        continue;
      }
      const auto now = Clock::now();
      if (!pace_anchor_) pace_anchor_ = {now, live_->sched.now()};
      const auto due = pace_anchor_->first + std::chrono::duration_cast<Clock::duration>(
                                                 std::chrono::duration<double>((*next - pace_anchor_->second) / opt_.pace));
      if (now >= due) break;
      wake_.wait_until(lock, std::min(due, now + std::chrono::milliseconds(50)));
    }
  }

  void between_sessions() {
    pace_anchor_.reset();
    drain_commands();
    if (opt_.pace > 0.0 && opt_.intermission_s > 0.0) {
      const auto until = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                            std::chrono::duration<double>(opt_.intermission_s / opt_.pace));
      while (!stop_ && (Clock::now() < until || paused_)) {
        std::unique_lock lock(state_mu_);
        wake_.wait_for(lock, std::chrono::milliseconds(50));
        lock.unlock();
        drain_commands();
      }
    }
    pace_anchor_.reset();
  }

  void drain_commands(const char* reject_all = nullptr) {
    std::deque<Pending> q;
    {
      std::lock_guard lock(state_mu_);
      q.swap(queue_);
      pending_ = false;
    }
    for (auto& p : q) {
      if (reject_all) {
        p.done.set_value({false, reject_all});
        continue;
      }
      p.done.set_value(apply_and_log(p.command));
    }
    if (!q.empty()) publish();
  }

  CommandOutcome apply_and_log(const json& cmd) {
    CommandOutcome out = apply(cmd);
    const double ts = live_ ? live_->sched.now() : 0.0;
    line(join_tab({"command", std::to_string(live_ ? live_->k : 0), fmt6(ts), cmd.dump(), out.applied ? "applied" : "rejected",
                   out.reason.empty() ? "-" : out.reason}));
    return out;
  }

  CommandOutcome apply(const json& cmd) {
    auto reject = [](std::string why) { return CommandOutcome{false, std::move(why)}; };
    if (!cmd.is_object() || !cmd.contains("type") || !cmd["type"].is_string()) return reject("malformed_command");
    const std::string type = cmd["type"];
    auto* c = live_ ? live_->controller.get() : nullptr;
    try {
      if (type == "pause" || type == "resume") {
        std::lock_guard lock(state_mu_);
        paused_ = type == "pause";
        pace_anchor_.reset();
        return {true, ""};
      }
      if (type == "set_case_c_policy") {
        const auto p = protocol::parse_case_c_policy(cmd.at("policy").get<std::string>());
        if (c && c->in_encounter()) return reject("mid_encounter");
        policy_ = p;
        if (c) c->set_policy(p);
        return {true, ""};
      }
      if (type == "set_nudge_probability") {
        const std::string id = cmd.at("landmark").get<std::string>();
        const double p = cmd.at("probability").get<double>();
        if (!(p >= 0.0 && p <= 1.0)) return reject("invalid_probability");
        const auto* place = s_.path.find(id);
        if (!place || place->kind != geo::PlaceKind::Landmark) return reject("unknown_landmark");
        if (!c) {
          overrides_[id] = p;
          return {true, ""};
        }
        if (c->in_encounter()) return reject("mid_encounter");
        if (c->encounters().at(id).latch != protocol::Latch::Unvisited) return reject("landmark_already_visited");
        c->set_nudge_probability(id, p);
        return {true, ""};
      }
      if (type == "schedule_disturbance") {
        protocol::DisturbanceSpec d;
        d.id = cmd.at("id").get<std::string>();
        d.trigger_ts_offset_s = cmd.at("offset_s").get<double>();
        d.payload = cmd.value("payload", std::string{});
        d.response_deadline_s = cmd.value("response_deadline_s", 10.0);
        auto& list = c ? c->mutable_plan().disturbances : next_plan().disturbances;
        for (const auto& x : list)
          if (x.id == d.id) return reject("duplicate_id");
        if (c && d.trigger_ts_offset_s < live_->sched.now()) return reject("in_past");
        if (d.trigger_ts_offset_s < 0.0) return reject("in_past");
        list.push_back(d);
        if (c) schedule_disturbance(*live_, d.trigger_ts_offset_s);
        return {true, ""};
      }
      if (type == "cancel_disturbance") {
        const std::string id = cmd.at("id").get<std::string>();
        auto& list = c ? c->mutable_plan().disturbances : next_plan().disturbances;
        auto it = std::find_if(list.begin(), list.end(), [&](const auto& x) { return x.id == id; });
        if (it == list.end()) return reject("unknown_disturbance");
        if (it->consumed) return reject("already_fired");
        list.erase(it);
        return {true, ""};
      }
      if (type == "retrain") {
        if (c) return reject("mid_session");
        if (s_.phase != protocol::Phase::ClosedLoopNfb) return reject("no_model_in_phase1");
        retrain();
        return {true, ""};
      }
    } catch (const Error& e) {
      return reject(std::string(to_string(e.code())) + ": " + e.what());
    } catch (const json::exception&) {
      return reject("malformed_command");
    }
    return reject("unknown_command");
  }

  protocol::SessionPlan& next_plan() {
    const std::size_t done = static_cast<std::size_t>(std::count_if(plans_.begin(), plans_.end(), [](const auto& p) { return p.active; }));
    if (done >= plans_.size()) fail(ErrorCode::CommandRejected, "no session left");
    return plans_[done];
  }

  void retrain() {
    model_ = learner::train(dataset_, train_options());
    dataset_.new_semi_supervised = 0;
    line(join_tab({"retrain", std::to_string(dataset_.records.size())}));
  }

  learner::TrainOptions train_options() const {
    auto o = s_.learner.train;
    o.seed = s_.seed("learner");
    return o;
  }

  void maybe_retrain(int k) {
    if (s_.phase != protocol::Phase::ClosedLoopNfb || k == 1) return;
    if (!learner::retrain_schedule(dataset_, s_.learner.retrain, true)) return;
    try {
      retrain();
    } catch (const Error& e) {
      line(join_tab({"retrain_skipped", to_string(e.code())}));
    }
  }

  // --- snapshot -----------------------------------------------------------------

  void publish() {
    json j;
    j["phase"] = protocol::to_string(s_.phase);
    j["n_sessions"] = s_.n_sessions;
    j["case_c_policy"] = protocol::to_string(policy_);
    if (live_) {
      auto& L = *live_;
      j["session"] = L.k;
      j["sim_ts"] = L.sched.now();
      j["position"] = L.position ? json{{"lat", L.position->lat}, {"lon", L.position->lon}} : json(nullptr);
      json probs = json::object(), enc = json::object();
      const auto& plan = L.controller ? L.controller->plan() : plans_.at(static_cast<std::size_t>(L.k - 1));
      for (std::size_t i = 0; i < s_.path.landmarks.size() && i < plan.nudge_probability.size(); ++i)
        probs[s_.path.landmarks[i].id] = plan.nudge_probability[i];
      j["nudge_probability"] = probs;
      if (L.controller) {
        static constexpr const char* latch[] = {"unvisited", "approaching", "resolved"};
        for (const auto& [id, e] : L.controller->encounters()) enc[id] = latch[static_cast<int>(e.latch)];
        j["in_encounter"] = L.controller->in_encounter();
      }
      j["encounters"] = enc;
      json bat = json::object();
      for (const auto& a : L.agents) bat[a.id] = a.agent->battery().remaining_fraction();
      j["battery"] = bat;
      j["last_events"] = json(std::vector<std::string>(L.recent.begin(), L.recent.end()));
      json conf = json::array(), met = json::array();
      for (const auto& [t, c] : L.confidence) conf.push_back({t, c});
      for (const auto& p : L.metrics)
        met.push_back({p.ts, p.modularity, p.clustering, p.path_length, std::isnan(p.small_world) ? json(nullptr) : json(p.small_world)});
      j["confidence"] = conf;
      j["metrics"] = met;
      json dist = json::array();
      if (L.controller)
        for (const auto& d : L.controller->plan().disturbances)
          dist.push_back({{"id", d.id}, {"offset_s", d.trigger_ts_offset_s}, {"consumed", d.consumed}});
      j["disturbances"] = dist;
    } else {
      j["session"] = nullptr;
    }
    std::lock_guard lock(state_mu_);
    j["paused"] = paused_;
    j["finished"] = finished_;
    snapshot_ = std::move(j);
  }

  using Clock = std::chrono::steady_clock;

  Scenario s_;
  std::optional<learner::AttentionModel> model_;
  RunOptions opt_;
  LogWriter writer_;
  pipeline::Cloud cloud_;
  learner::Dataset dataset_;
  std::vector<protocol::SessionPlan> plans_;
  std::map<std::string, double> overrides_;
  protocol::CaseCPolicy policy_ = protocol::CaseCPolicy::NoOp;
  Live* live_ = nullptr;
  std::optional<std::pair<Clock::time_point, double>> pace_anchor_;

  mutable std::mutex state_mu_;
  std::condition_variable wake_;
  std::deque<Pending> queue_;
  std::atomic<bool> pending_{false};
  std::atomic<bool> stop_{false};
  bool paused_ = false;
  bool finished_ = false;
  json snapshot_;
};

// --- phase entry points -------------------------------------------------------

struct Phase1Result {
  SessionLog log;
  learner::Dataset dataset;
  std::vector<SessionDerived> sessions;
  std::vector<SessionStats> stats;
};

inline Phase1Result run_phase1(const Scenario& scenario, RunOptions options = {}) {
  if (scenario.phase != protocol::Phase::OpenLoopNudges) fail(ErrorCode::ScenarioInvalid, "phase 1 needs an open-loop scenario");
  Engine e(scenario, std::nullopt, std::move(options));
  auto r = e.run();
  return {std::move(r.log), std::move(r.dataset), std::move(r.sessions), std::move(r.stats)};
}

inline RunResult run_phase2(const Scenario& scenario, const std::optional<learner::AttentionModel>& model,
                            RunOptions options = {}, std::optional<learner::Dataset> base_dataset = std::nullopt) {
  if (scenario.phase != protocol::Phase::ClosedLoopNfb) fail(ErrorCode::ScenarioInvalid, "phase 2 needs a closed-loop scenario");
  if (!model) fail(ErrorCode::ModelMissing, "phase 2 needs a trained model");
  Engine e(scenario, model, std::move(options), std::move(base_dataset));
  return e.run();
}

/// Trains on a stratified split of the Phase-1 dataset and scores the model on
/// a class-balanced holdout, so chance level is 50%.
struct HeldOut {
  learner::AttentionModel model;
  learner::EvalReport report;
};

inline HeldOut train_held_out(const Scenario& s, const learner::Dataset& data) {
  const auto [train_set, holdout] = learner::split_dataset(data, s.learner.holdout_fraction, s.seed("learner"));
  auto opts = s.learner.train;
  opts.seed = s.seed("learner");
  HeldOut h{learner::train(train_set, opts), {}};
  h.report = learner::evaluate(h.model, learner::balance(holdout, s.seed("learner")));
  return h;
}

}  // namespace acta::harness
