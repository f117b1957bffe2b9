#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "vigil/sim_engine.hpp"

namespace vigil {

// Live protocol: one JSON document per WebSocket text message.
//
//   client -> server  {"type":"input","eyes":"open"|"closed"}
//                     {"type":"input","alcohol_ppm":N}
//                     {"type":"reset"}
//   server -> client  {"type":"state","t_ms":N,"phase":S,"speed":N,"alarm":B,"red":B,"green":B,"vibration":B}
//                     {"type":"alert","seq":N,"code":S,"detail":S}

struct EyesInput {
  bool closed = false;
};
struct AlcoholInput {
  double ppm = 0.0;
};
struct ResetInput {};
struct ProtocolError {
  std::string message;
};

using ClientMessage = std::variant<EyesInput, AlcoholInput, ResetInput, ProtocolError>;

ClientMessage parse_client_message(std::string_view text);

struct LiveState {
  TimeMs t_ms = 0;
  Phase phase = Phase::NORMAL;
  double speed = 0.0;
  bool alarm = false;
  bool red = false;
  bool green = false;
  bool vibration = false;

  friend bool operator==(const LiveState&, const LiveState&) = default;
};

std::string state_message(const LiveState& state);
std::string alert_message(const TraceRecord& delivered);

/// The scripted engine with ground truth supplied by a human instead of a script.
/// Single-threaded; the server owns one instance on its engine thread.
class LiveSession {
 public:
  LiveSession(const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg);

  /// Handles every instant up to and including `t`.
  void advance_to(TimeMs t);

  /// Ground-truth changes take effect from the next handled instant.
  void apply(const ClientMessage& input, TimeMs now);

  LiveState state() const;
  TimeMs now() const { return now_; }

  /// Alerts delivered to the phone since the previous call.
  std::vector<TraceRecord> take_delivered_alerts();

  const Trace& trace() const { return engine_.core().trace(); }

 private:
  std::shared_ptr<GroundTruth> truth_;
  EventEngine engine_;
  TimeMs now_ = 0;
  std::size_t alerts_cursor_ = 0;
};

/// Bounded FIFO that discards the oldest entry when full.
template <class T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    std::lock_guard lock(mutex_);
    if (items_.size() == capacity_) {
      items_.pop_front();
      ++dropped_;
    }
    items_.push_back(std::move(value));
  }

  std::optional<T> pop() {
    std::lock_guard lock(mutex_);
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

  std::vector<T> drain() {
    std::lock_guard lock(mutex_);
    std::vector<T> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
    items_.clear();
    return out;
  }

  std::size_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

 private:
  mutable std::mutex mutex_;
  std::deque<T> items_;
  std::size_t capacity_;
  std::size_t dropped_ = 0;
};

struct ServeOptions {
  unsigned short port = 8717;
  double pace = 1.0;  // virtual ms per wall ms
  ControllerConfig controller;
  ChannelConfig channel;
  std::chrono::milliseconds state_interval{100};
  std::size_t outbound_capacity = 256;
};

class PortInUseError : public Error {
 public:
  using Error::Error;
};

/// WebSocket front end for a LiveSession. Accepts one client at a time.
class LiveServer {
 public:
  explicit LiveServer(ServeOptions options);
  ~LiveServer();

  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  /// Binds and starts the engine and I/O threads. Throws PortInUseError.
  void start();
  void stop();
  /// Blocks until stop() is called or a termination signal arrives.
  void wait();

  unsigned short port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vigil
