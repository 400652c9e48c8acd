#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <fstream>
#include <iostream>
#include <set>

#include "racelab/teleop.hpp"

namespace racelab {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxQueuedFrames = 64;

std::string_view mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

class Hub;

class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  WsClient(tcp::socket socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}
  void start(http::request<http::string_body> req);
  void send(std::string msg);
  void close();

 private:
  void read();
  void write_next();

  websocket::stream<tcp::socket> ws_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool writing_ = false;
  bool closed_ = false;
};

class Hub {
 public:
  Hub(TeleopSession& session, const ServerOptions& opts) : session_(session), opts_(opts) {}
  TeleopSession& session() { return session_; }
  const ServerOptions& opts() const { return opts_; }
  void join(const std::shared_ptr<WsClient>& c) { clients_.insert(c); }
  void leave(const std::shared_ptr<WsClient>& c) { clients_.erase(c); }
  void broadcast(const std::string& msg) {
    for (const auto& c : clients_) c->send(msg);
  }
  void close_all() {
    for (const auto& c : std::set<std::shared_ptr<WsClient>>(clients_)) c->close();
  }

 private:
  TeleopSession& session_;
  const ServerOptions& opts_;
  std::set<std::shared_ptr<WsClient>> clients_;
};

void WsClient::start(http::request<http::string_body> req) {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->hub_.join(self);
    self->send(self->hub_.session().track_message());
    self->send(self->hub_.session().state_message());
    self->read();
  });
}

void WsClient::read() {
  ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) {
      self->closed_ = true;
      self->hub_.leave(self);
      return;
    }
    const std::string text = beast::buffers_to_string(self->buffer_.data());
    self->buffer_.consume(self->buffer_.size());
    for (auto& reply : self->hub_.session().handle_message(text)) self->send(std::move(reply));
    self->read();
  });
}

void WsClient::send(std::string msg) {
  if (closed_) return;
  if (queue_.size() >= kMaxQueuedFrames) queue_.pop_front();
  queue_.push_back(std::move(msg));
  if (!writing_) write_next();
}

void WsClient::write_next() {
  if (queue_.empty() || closed_) {
    writing_ = false;
    return;
  }
  writing_ = true;
  ws_.text(true);
  ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
    self->queue_.pop_front();
    if (ec) {
      self->closed_ = true;
      self->hub_.leave(self);
      return;
    }
    self->write_next();
  });
}

void WsClient::close() {
  if (closed_) return;
  closed_ = true;
  hub_.leave(shared_from_this());
  beast::error_code ec;
  ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
  ws_.next_layer().close(ec);
}

http::response<http::string_body> static_response(const http::request<http::string_body>& req,
                                                  const std::filesystem::path& root) {
  auto reply = [&](http::status st, std::string body, std::string_view type) {
    http::response<http::string_body> res{st, req.version()};
    res.set(http::field::content_type, std::string(type));
    res.keep_alive(false);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  if (req.method() != http::verb::get && req.method() != http::verb::head)
    return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
  std::string target(req.target());
  target = target.substr(0, target.find('?'));
  if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos)
    return reply(http::status::bad_request, "bad path\n", "text/plain");
  if (target.back() == '/') target += "index.html";
  if (root.empty()) return reply(http::status::not_found, "no UI directory configured\n", "text/plain");
  const std::filesystem::path file = root / target.substr(1);
  std::ifstream f(file, std::ios::binary);
  if (!f || std::filesystem::is_directory(file)) return reply(http::status::not_found, "not found\n", "text/plain");
  std::string body((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return reply(http::status::ok, std::move(body), mime_type(file));
}

class HttpConn : public std::enable_shared_from_this<HttpConn> {
 public:
  HttpConn(tcp::socket socket, Hub& hub) : socket_(std::move(socket)), hub_(hub) {}

  void start() {
    http::async_read(socket_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (websocket::is_upgrade(self->req_)) {
        std::make_shared<WsClient>(std::move(self->socket_), self->hub_)->start(std::move(self->req_));
        return;
      }
      self->res_ = static_response(self->req_, self->hub_.opts().ui_dir);
      http::async_write(self->socket_, self->res_, [self](beast::error_code, std::size_t) {
        beast::error_code ignored;
        self->socket_.shutdown(tcp::socket::shutdown_send, ignored);
      });
    });
  }

 private:
  tcp::socket socket_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  http::response<http::string_body> res_;
};

}  // namespace

void serve(TeleopSession& session, const ServerOptions& opts) {
  asio::io_context io;
  Hub hub(session, opts);
  tcp::acceptor acceptor(io, tcp::endpoint(asio::ip::make_address("127.0.0.1"), opts.port));
  if (opts.on_listening) opts.on_listening(acceptor.local_endpoint().port());

  std::function<void()> accept = [&] {
    acceptor.async_accept([&](beast::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<HttpConn>(std::move(socket), hub)->start();
      if (acceptor.is_open()) accept();
    });
  };
  accept();

  const auto period = std::chrono::microseconds(static_cast<std::int64_t>(std::llround(1e6 * 0.02)));
  const auto start = std::chrono::steady_clock::now();
  asio::steady_timer timer(io);
  std::uint64_t ticks = 0;
  std::function<void()> schedule = [&] {
    timer.expires_at(start + period * (++ticks));
    timer.async_wait([&](beast::error_code ec) {
      if (ec) return;
      for (const auto& msg : session.step()) hub.broadcast(msg);
      if (opts.run_seconds > 0.0 && std::chrono::steady_clock::now() - start >= std::chrono::duration<double>(opts.run_seconds)) {
        beast::error_code ignored;
        acceptor.close(ignored);
        hub.close_all();
        io.stop();
        return;
      }
      schedule();
    });
  };
  schedule();

  asio::signal_set signals(io, SIGINT, SIGTERM);
  signals.async_wait([&](beast::error_code, int) {
    beast::error_code ignored;
    acceptor.close(ignored);
    hub.close_all();
    io.stop();
  });
  io.run();
}

}  // namespace racelab
