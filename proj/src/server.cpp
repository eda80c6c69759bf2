#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <deque>
#include <thread>

#include "bioptx/service.hpp"

namespace bioptx {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

constexpr auto kIdleTimeout = std::chrono::seconds(60);

std::vector<std::string> split_path(std::string_view target) {
  const auto q = target.find('?');
  if (q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < target.size()) {
    const auto next = target.find('/', pos);
    const auto end = next == std::string_view::npos ? target.size() : next;
    if (end > pos) parts.emplace_back(target.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

// Pushes StepResults of one session to one WebSocket client.
class StreamConn : public std::enable_shared_from_this<StreamConn> {
 public:
  StreamConn(tcp::socket&& socket, SessionStore& store, std::string id)
      : ws_(std::move(socket)), store_(store), id_(std::move(id)) {}

  void run(http::request<http::string_body> req) {
    // Subscribe before the handshake completes so that no step issued right
    // after the client sees the upgrade is missed.
    std::weak_ptr<StreamConn> weak = shared_from_this();
    token_ = store_.subscribe(id_, [weak](const std::string& msg) {
      if (auto self = weak.lock()) {
        net::post(self->ws_.get_executor(), [self, msg] { self->enqueue(msg); });
      }
    });
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return self->shutdown();
      self->accepted_ = true;
      self->do_read();
      self->flush();
    });
  }

 private:
  void enqueue(const std::string& msg) {
    queue_.push_back(msg);
    if (queue_.size() == 1 && accepted_) flush();
  }

  void flush() {
    if (queue_.empty() || writing_ || closed_) return;
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->writing_ = false;
                      if (ec) return self->shutdown();
                      self->queue_.pop_front();
                      self->flush();
                    });
  }

  // Incoming frames are ignored; reading keeps control frames flowing and
  // tells us when the client goes away.
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      self->buffer_.consume(self->buffer_.size());
      self->do_read();
    });
  }

  void shutdown() {
    if (closed_) return;
    closed_ = true;
    store_.unsubscribe(id_, token_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionStore& store_;
  std::string id_;
  std::uint64_t token_ = 0;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool accepted_ = false;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpConn : public std::enable_shared_from_this<HttpConn> {
 public:
  HttpConn(tcp::socket&& socket, SessionStore& store) : stream_(std::move(socket)), store_(store) {}

  void run() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->do_read(); });
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(kIdleTimeout);
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       self->on_read(ec);
                     });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;

    const beast::string_view target = req_.target();
    const auto parts = split_path(std::string_view(target.data(), target.size()));
    if (websocket::is_upgrade(req_)) {
      if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "stream" &&
          store_.log(parts[1]).status == 200) {
        stream_.expires_never();
        std::make_shared<StreamConn>(stream_.release_socket(), store_, parts[1])
            ->run(std::move(req_));
        return;
      }
      return respond({404, Json{{"error", "no stream at " + std::string(req_.target().data(), req_.target().size())}}});
    }
    respond(route(parts));
  }

  ServiceReply route(const std::vector<std::string>& parts) {
    const auto method = req_.method();
    if (method == http::verb::options) return {204, nullptr};
    auto body = [&]() -> std::optional<Json> {
      try {
        return Json::parse(req_.body().empty() ? std::string("{}") : req_.body());
      } catch (const Json::exception&) {
        return std::nullopt;
      }
    };
    auto need = [&](http::verb v) -> std::optional<ServiceReply> {
      if (method == v) return std::nullopt;
      return ServiceReply{405, Json{{"error", "method not allowed"}}};
    };

    if (parts.size() == 1 && parts[0] == "cases") {
      if (auto bad = need(http::verb::get)) return *bad;
      return store_.cases();
    }
    if (parts.size() == 1 && parts[0] == "sessions") {
      if (auto bad = need(http::verb::post)) return *bad;
      const auto j = body();
      if (!j) return {400, Json{{"error", "malformed JSON body"}}};
      return store_.create(*j);
    }
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "step") {
      if (auto bad = need(http::verb::post)) return *bad;
      const auto j = body();
      if (!j) return {400, Json{{"error", "malformed JSON body"}}};
      return store_.step(parts[1], *j);
    }
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "log") {
      if (auto bad = need(http::verb::get)) return *bad;
      return store_.log(parts[1]);
    }
    return {404, Json{{"error", "no route for " + std::string(req_.target().data(), req_.target().size())}}};
  }

  void respond(ServiceReply reply) {
    res_ = {};
    res_.version(req_.version());
    res_.result(static_cast<http::status>(reply.status));
    res_.set(http::field::server, "bioptx");
    res_.set(http::field::access_control_allow_origin, "*");
    res_.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res_.set(http::field::access_control_allow_headers, "Content-Type");
    if (!reply.body.is_null()) {
      res_.set(http::field::content_type, "application/json");
      res_.body() = reply.body.dump();
    }
    res_.keep_alive(req_.keep_alive());
    res_.prepare_payload();
    http::async_write(stream_, res_,
                      [self = shared_from_this()](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!self->res_.keep_alive()) {
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
                          return;
                        }
                        self->do_read();
                      });
  }

  beast::tcp_stream stream_;
  SessionStore& store_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  http::response<http::string_body> res_;
};

}  // namespace

struct SessionServer::Impl {
  Impl(SessionStore& s, ServerOptions o) : store(s), opts(std::move(o)), acceptor(ioc) {}

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) std::make_shared<HttpConn>(std::move(socket), store)->run();
      do_accept();
    });
  }

  SessionStore& store;
  ServerOptions opts;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::vector<std::thread> threads;
};

SessionServer::SessionServer(SessionStore& store, ServerOptions opts)
    : impl_(std::make_unique<Impl>(store, std::move(opts))) {
  const tcp::endpoint ep(net::ip::make_address(impl_->opts.address), impl_->opts.port);
  auto& acc = impl_->acceptor;
  acc.open(ep.protocol());
  acc.set_option(net::socket_base::reuse_address(true));
  acc.bind(ep);
  acc.listen(net::socket_base::max_listen_connections);
}

SessionServer::~SessionServer() {
  stop();
  for (auto& t : impl_->threads) {
    if (t.joinable()) t.join();
  }
}

unsigned short SessionServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void SessionServer::start() {
  impl_->do_accept();
  const int n = std::max(1, impl_->opts.threads);
  for (int k = 0; k < n; ++k) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void SessionServer::run() {
  start();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
}

void SessionServer::stop() { impl_->ioc.stop(); }

}  // namespace bioptx
