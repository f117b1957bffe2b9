#include <atomic>
#include <condition_variable>
#include <iostream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "vigil/live.hpp"
#include "vigil/log.hpp"

namespace vigil {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

// One connected console. Lives on the I/O thread only.
class ClientSession : public std::enable_shared_from_this<ClientSession> {
 public:
  ClientSession(tcp::socket socket, DropOldestQueue<std::string>& inbound, DropOldestQueue<std::string>& outbound,
                std::function<void()> on_close)
      : ws_(std::move(socket)),
        pump_(ws_.get_executor()),
        inbound_(inbound),
        outbound_(outbound),
        on_close_(std::move(on_close)) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return self->close();
      log_info("console connected");
      self->read();
      self->pump();
    });
  }

  void shutdown() {
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      self->inbound_.push(beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  // Polls the outbound queue; one write in flight at a time.
  void pump() {
    if (closed_) return;
    if (!writing_) {
      if (auto next = outbound_.pop()) {
        writing_ = true;
        current_ = std::move(*next);
        ws_.text(true);
        ws_.async_write(asio::buffer(current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
          self->writing_ = false;
          if (ec) return self->close();
          self->pump();
        });
      }
    }
    pump_.expires_after(std::chrono::milliseconds(5));
    pump_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->pump();
    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    pump_.cancel();
    log_info("console disconnected");
    on_close_();
  }

  websocket::stream<beast::tcp_stream> ws_;
  asio::steady_timer pump_;
  beast::flat_buffer buffer_;
  std::string current_;
  DropOldestQueue<std::string>& inbound_;
  DropOldestQueue<std::string>& outbound_;
  std::function<void()> on_close_;
  bool writing_ = false;
  bool closed_ = false;
};

}  // namespace

struct LiveServer::Impl {
  explicit Impl(ServeOptions opts)
      : options(std::move(opts)),
        acceptor(io),
        signals(io, SIGINT, SIGTERM),
        inbound(options.outbound_capacity),
        outbound(options.outbound_capacity) {}

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      if (client) {
        beast::error_code ignored;
        socket.close(ignored);  // single-client mode
      } else {
        outbound.drain();  // stale updates from before this client
        client = std::make_shared<ClientSession>(std::move(socket), inbound, outbound, [this] {
          client.reset();
        });
        client->start();
      }
      accept();
    });
  }

  void engine_loop() {
    LiveSession session(options.controller, options.channel);
    const auto started = std::chrono::steady_clock::now();
    auto next_state = started;
    std::optional<LiveState> last_sent;
    while (running) {
      const auto wall = std::chrono::steady_clock::now();
      const double wall_ms = std::chrono::duration<double, std::milli>(wall - started).count();
      const auto virtual_now = static_cast<TimeMs>(wall_ms * options.pace);

      for (auto& text : inbound.drain()) {
        const auto msg = parse_client_message(text);
        if (const auto* err = std::get_if<ProtocolError>(&msg)) {
          log_info("ignored client message: " + err->message);
          continue;
        }
        session.advance_to(virtual_now);
        session.apply(msg, virtual_now);
        log_debug("input applied at " + std::to_string(virtual_now) + " ms: " + text);
      }
      session.advance_to(virtual_now);
      for (const auto& alert : session.take_delivered_alerts()) {
        outbound.push(alert_message(alert));
      }
      if (wall >= next_state) {
        const auto state = session.state();
        outbound.push(state_message(state));
        if (!last_sent || last_sent->phase != state.phase) {
          log_info("phase " + std::string(to_string(state.phase)) + " at " + std::to_string(state.t_ms) + " ms");
        }
        last_sent = state;
        next_state = wall + options.state_interval;
      }
      std::unique_lock lock(wake_mutex);
      wake.wait_for(lock, std::chrono::milliseconds(5), [this] { return !running.load(); });
    }
  }

  ServeOptions options;
  asio::io_context io;
  tcp::acceptor acceptor;
  asio::signal_set signals;
  std::shared_ptr<ClientSession> client;
  DropOldestQueue<std::string> inbound;
  DropOldestQueue<std::string> outbound;
  std::atomic<bool> running{false};
  std::mutex wake_mutex;
  std::condition_variable wake;
  std::thread io_thread;
  std::thread engine_thread;
  std::mutex done_mutex;
  std::condition_variable done;
  bool stopped = false;
};

LiveServer::LiveServer(ServeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->options.controller.validate();
  impl_->options.channel.validate();
  if (!(impl_->options.pace > 0.0)) throw ConfigError("pace must be > 0");
}

LiveServer::~LiveServer() { stop(); }

void LiveServer::start() {
  auto& im = *impl_;
  beast::error_code ec;
  const tcp::endpoint endpoint(asio::ip::make_address("127.0.0.1"), im.options.port);
  im.acceptor.open(endpoint.protocol(), ec);
  if (!ec) im.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(endpoint, ec);
  if (!ec) im.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw PortInUseError("cannot listen on port " + std::to_string(im.options.port) + ": " + ec.message());
  }

  im.signals.async_wait([this](beast::error_code ec, int) {
    if (!ec) stop();
  });
  im.accept();
  im.running = true;
  im.engine_thread = std::thread([&im] { im.engine_loop(); });
  im.io_thread = std::thread([&im] { im.io.run(); });
  log_info("serving on ws://127.0.0.1:" + std::to_string(port()));
}

void LiveServer::stop() {
  auto& im = *impl_;
  {
    std::lock_guard lock(im.done_mutex);
    if (im.stopped) return;
    im.stopped = true;
  }
  im.running = false;
  im.wake.notify_all();
  asio::post(im.io, [&im] {
    beast::error_code ignored;
    im.acceptor.close(ignored);
    im.signals.cancel(ignored);
    if (im.client) im.client->shutdown();
    im.io.stop();
  });
  if (im.engine_thread.joinable() && im.engine_thread.get_id() != std::this_thread::get_id()) im.engine_thread.join();
  if (im.io_thread.joinable() && im.io_thread.get_id() != std::this_thread::get_id()) im.io_thread.join();
  im.done.notify_all();
}

void LiveServer::wait() {
  auto& im = *impl_;
  std::unique_lock lock(im.done_mutex);
  im.done.wait(lock, [&im] { return im.stopped; });
  lock.unlock();
  if (im.engine_thread.joinable()) im.engine_thread.join();
  if (im.io_thread.joinable()) im.io_thread.join();
}

unsigned short LiveServer::port() const {
  beast::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? impl_->options.port : ep.port();
}

}  // namespace vigil
