#pragma once

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "acta/harness/engine.hpp"

namespace acta::harness {

/// Append-only copy of the log records for stream subscribers.
class LineBuffer {
 public:
  void push(const std::string& line) {
    {
      std::lock_guard lock(mu_);
      lines_.push_back(line);
    }
    cv_.notify_all();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  /// Lines from `from` on, waiting up to `wait` for at least one.
  std::vector<std::string> read(std::size_t from, std::chrono::milliseconds wait, bool* closed) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [&] { return lines_.size() > from || closed_; });
    *closed = closed_;
    if (from >= lines_.size()) return {};
    return {lines_.begin() + static_cast<std::ptrdiff_t>(from), lines_.end()};
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return lines_.size();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::string> lines_;
  bool closed_ = false;
};

/// Event id of record i is i + 1, so Last-Event-ID resumes right after it.
inline std::string sse_frame(std::size_t index, const std::string& line) {
  const auto tab = line.find('\t');
  return "id: " + std::to_string(index + 1) + "\nevent: " + line.substr(0, tab) + "\ndata: " + line + "\n\n";
}

/// HTTP front of a running engine: GET /state, GET /events (server-sent
/// events over the log records), POST /command.
class OpsServer {
 public:
  OpsServer(Engine& engine, LineBuffer& lines) : engine_(engine), lines_(lines) { routes(); }
  ~OpsServer() { stop(); }

  /// Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

 private:
  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_.Options("/command", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server_.Get("/state", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(engine_.snapshot().dump(), "application/json");
    });
    server_.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t from = 0;
      if (req.has_header("Last-Event-ID")) {
        try {
          from = std::stoull(req.get_header_value("Last-Event-ID"));
        } catch (const std::exception&) {
          from = 0;
        }
      }
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, from](std::size_t, httplib::DataSink& sink) mutable {
        bool closed = false;
        const auto batch = lines_.read(from, std::chrono::milliseconds(200), &closed);
        for (const auto& l : batch) {
          const auto frame = sse_frame(from++, l);
          if (!sink.write(frame.data(), frame.size())) return false;
        }
        if (batch.empty()) {
          if (closed) {
            sink.done();
            return true;
          }
          static constexpr char keepalive[] = ": keepalive\n\n";
          if (!sink.write(keepalive, sizeof keepalive - 1)) return false;
        }
        return true;
      });
    });
    server_.Post("/command", [this](const httplib::Request& req, httplib::Response& res) {
      json cmd;
      try {
        cmd = json::parse(req.body);
      } catch (const json::exception&) {
        res.status = 400;
        res.set_content(json{{"applied", false}, {"reason", "malformed_json"}}.dump(), "application/json");
        return;
      }
      auto fut = engine_.submit(cmd);
      if (fut.wait_for(std::chrono::seconds(30)) != std::future_status::ready) {
        res.status = 504;
        res.set_content(json{{"applied", false}, {"reason", "engine_timeout"}}.dump(), "application/json");
        return;
      }
      const auto out = fut.get();
      res.status = out.applied ? 200 : 409;
      json body{{"applied", out.applied}, {"command", cmd}};
      if (!out.applied) body["reason"] = out.reason;
      res.set_content(body.dump(), "application/json");
    });
  }

  Engine& engine_;
  LineBuffer& lines_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace acta::harness
