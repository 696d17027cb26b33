#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "acta/harness.hpp"
#include "acta/harness/ops.hpp"

using namespace acta;
using namespace acta::harness;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

bool is_validation(ErrorCode c) {
  switch (c) {
    case ErrorCode::ScenarioInvalid:
    case ErrorCode::InvalidPath:
    case ErrorCode::InvalidConfig:
    case ErrorCode::BandOutOfRange:
    case ErrorCode::InvalidLink:
    case ErrorCode::TooFewSessions:
    case ErrorCode::ModelMissing:
    case ErrorCode::CorruptLog:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ClassImbalanceFatal:
    case ErrorCode::EmptyDataset:
      return true;
    default:
      return false;
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size())))
    fail(ErrorCode::Io, "cannot write " + path);
}

Scenario load_scenario(const std::string& path, const std::string& seed_set) {
  Scenario s = parse_scenario(read_file(path));
  if (!seed_set.empty()) s.seed_set = seed_set;
  validate_scenario(s);
  return s;
}

std::vector<ScriptedCommand> load_commands(const std::string& path) {
  if (path.empty()) return {};
  std::vector<ScriptedCommand> out;
  try {
    for (const auto& c : json::parse(read_file(path)))
      out.push_back({c.at("session").get<int>(), c.at("at_s").get<double>(), c.at("command")});
  } catch (const json::exception& e) {
    fail(ErrorCode::ScenarioInvalid, "commands file: " + std::string(e.what()));
  }
  return out;
}

void print_sessions(const std::vector<SessionStats>& stats, const std::vector<SessionDerived>& derived) {
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& st = stats[i];
    std::map<std::string, int> kinds;
    for (const auto& f : st.feedback) ++kinds[protocol::to_string(f.kind)];
    std::printf("session %d  %.1f s  windows %zu (attention %zu, non_attention %zu, incomplete %zu)", st.session,
                st.duration_s, derived[i].labels.windows, derived[i].labels.attention, derived[i].labels.non_attention,
                derived[i].labels.incomplete);
    for (const auto& [k, n] : kinds) std::printf("  %s=%d", k.c_str(), n);
    if (derived[i].eval) std::printf("  accuracy=%.3f", derived[i].eval->accuracy);
    std::printf("\n");
  }
}

void print_eval(const learner::EvalReport& r) {
  std::printf("n %zu  accuracy %.4f  precision %.4f  recall %.4f  tp %zu fp %zu tn %zu fn %zu\n", r.n, r.accuracy,
              r.precision, r.recall, r.tp, r.fp, r.tn, r.fn);
}

std::atomic<bool> g_interrupted{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acta: simulated nudge and neurofeedback training loop"};
  app.require_subcommand(1);

  std::string scenario_path, seed_set, out, dataset_path, model_path, log_path, report_path, commands_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  double pace = 10.0;
  bool start_paused = false;

  auto* validate = app.add_subcommand("validate", "check a scenario file and print its hash");
  validate->add_option("--scenario", scenario_path)->required();
  validate->add_option("--seed-set", seed_set);

  auto* simulate = app.add_subcommand("simulate", "run the open-loop phase and write the log and dataset");
  simulate->add_option("--scenario", scenario_path)->required();
  simulate->add_option("--seed-set", seed_set);
  simulate->add_option("--out", out, "session log; the EEG sidecar goes to <out>.eeg")->required();
  simulate->add_option("--dataset", dataset_path, "labeled dataset CSV (default <out>.dataset.csv)");
  simulate->add_option("--commands", commands_path, "JSON list of {session, at_s, command}");

  auto* train = app.add_subcommand("train", "fit the attention classifier on a dataset");
  train->add_option("--dataset", dataset_path)->required();
  train->add_option("--out", out)->required();
  train->add_option("--scenario", scenario_path, "take learner settings and seeds from this scenario");

  auto* eval = app.add_subcommand("eval", "score a model on a dataset");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--dataset", dataset_path)->required();

  auto* phase2 = app.add_subcommand("phase2", "run the closed-loop phase with a trained model");
  phase2->add_option("--scenario", scenario_path)->required();
  phase2->add_option("--model", model_path)->required();
  phase2->add_option("--out", out)->required();
  phase2->add_option("--seed-set", seed_set);
  phase2->add_option("--dataset", dataset_path, "base dataset extended by semi-supervised records");
  phase2->add_option("--commands", commands_path, "JSON list of {session, at_s, command}");

  auto* replay_cmd = app.add_subcommand("replay", "re-derive every record of a log and compare");
  replay_cmd->add_option("--log", log_path)->required();
  replay_cmd->add_option("--report", report_path);

  auto* serve = app.add_subcommand("serve", "run a paced session behind the ops API");
  serve->add_option("--scenario", scenario_path)->required();
  serve->add_option("--model", model_path, "required for closed-loop scenarios");
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--pace", pace, "simulated seconds per wall-clock second")->check(CLI::PositiveNumber);
  serve->add_option("--seed-set", seed_set);
  serve->add_option("--out", out, "write the session log here when the run ends");
  serve->add_flag("--start-paused", start_paused);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*validate) {
      const auto s = load_scenario(scenario_path, seed_set);
      std::printf("valid  %s  phase %s  sessions %d  sha256 %s\n", s.name.c_str(), protocol::to_string(s.phase),
                  s.n_sessions, scenario_hash(s).c_str());
    } else if (*simulate) {
      auto s = load_scenario(scenario_path, seed_set);
      s.phase = protocol::Phase::OpenLoopNudges;
      RunOptions o;
      o.commands = load_commands(commands_path);
      const auto r = run_phase1(s, o);
      save_log(r.log, out);
      if (dataset_path.empty()) dataset_path = out + ".dataset.csv";
      write_file(dataset_path, learner::dataset_to_csv(r.dataset));
      print_sessions(r.stats, r.sessions);
      std::printf("log %s  dataset %s (%zu records)\n", out.c_str(), dataset_path.c_str(), r.dataset.records.size());
    } else if (*train) {
      const auto data = learner::dataset_from_csv(read_file(dataset_path));
      Scenario s = default_scenario();
      if (!scenario_path.empty()) s = load_scenario(scenario_path, "");
      const auto h = train_held_out(s, data);
      learner::save_model(h.model, out);
      std::printf("held-out ");
      print_eval(h.report);
      std::printf("model %s\n", out.c_str());
    } else if (*eval) {
      print_eval(learner::evaluate(learner::load_model(model_path), learner::dataset_from_csv(read_file(dataset_path))));
    } else if (*phase2) {
      auto s = load_scenario(scenario_path, seed_set);
      s.phase = protocol::Phase::ClosedLoopNfb;
      std::optional<learner::Dataset> base;
      if (!dataset_path.empty()) base = learner::dataset_from_csv(read_file(dataset_path));
      RunOptions o;
      o.commands = load_commands(commands_path);
      const auto r = run_phase2(s, learner::load_model(model_path), o, base);
      save_log(r.log, out);
      print_sessions(r.stats, r.sessions);
      std::printf("log %s\n", out.c_str());
    } else if (*replay_cmd) {
      const auto rep = replay(load_log(log_path));
      if (!report_path.empty()) write_file(report_path, rep.text());
      std::printf("replay %s  sessions %zu  scenario %s\n", rep.equal ? "equal" : "mismatch", rep.sessions.size(),
                  rep.scenario_sha256.c_str());
      for (const auto& m : rep.mismatches) std::printf("  %s\n", m.c_str());
      if (!rep.equal) return kExitRuntime;
    } else if (*serve) {
      const auto s = load_scenario(scenario_path, seed_set);
      std::optional<learner::AttentionModel> model;
      if (!model_path.empty()) model = learner::load_model(model_path);
      LineBuffer lines;
      RunOptions o;
      o.pace = pace;
      o.start_paused = start_paused;
      o.live_metrics = s.metrics.enabled;
      o.on_line = [&](const std::string& l) { lines.push(l); };
      Engine engine(s, model, o);
      OpsServer server(engine, lines);
      const int bound = server.start(host, port);
      std::printf("serving http://%s:%d  (GET /state, GET /events, POST /command)\n", host.c_str(), bound);
      std::fflush(stdout);
      std::signal(SIGINT, [](int) { g_interrupted = true; });
      std::signal(SIGTERM, [](int) { g_interrupted = true; });
      std::atomic<bool> done{false};
      std::exception_ptr failure;
      RunResult result;
      std::thread runner([&] {
        try {
          result = engine.run();
        } catch (...) {
          failure = std::current_exception();
        }
        lines.close();
        done = true;
      });
      while (!g_interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (done && !out.empty()) break;
      }
      engine.request_stop();
      runner.join();
      server.stop();
      if (failure) std::rethrow_exception(failure);
      if (!out.empty()) {
        save_log(result.log, out);
        std::printf("log %s\n", out.c_str());
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return is_validation(e.code()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
