#include <cmath>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

#include "sparseemg/error.hpp"
#include "sparseemg/service.hpp"
#include "sparseemg/stencil.hpp"

namespace sparseemg {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

constexpr std::size_t kBodyLimit = 1 << 20;
constexpr auto kHttpTimeout = std::chrono::seconds(30);

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

// Lets stop() close live connections so blocked peers see EOF.
struct Closable {
  virtual ~Closable() = default;
  virtual void shutdown() = 0;
};

struct Shared {
  DatasetRegistry registry;
  std::unique_ptr<ArtifactStore> store;
  unsigned sweep_workers = 1;
  net::thread_pool* jobs = nullptr;

  std::mutex live_mutex;
  std::set<std::shared_ptr<std::atomic<bool>>> live_jobs;

  std::mutex sessions_mutex;
  std::vector<std::weak_ptr<Closable>> sessions;

  void track(const std::shared_ptr<Closable>& session) {
    std::lock_guard lock(sessions_mutex);
    std::erase_if(sessions, [](const auto& w) { return w.expired(); });
    sessions.push_back(session);
  }
};

Response make_response(const Request& req, http::status status, std::string body,
                       std::string_view content_type) {
  Response res{status, req.version()};
  res.set(http::field::server, "sparseemg");
  res.set(http::field::content_type, std::string(content_type));
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

std::string_view target_of(const Request& req) { return {req.target().data(), req.target().size()}; }

Response json_response(const Request& req, http::status status, const json& body) {
  return make_response(req, status, body.dump(), "application/json");
}

Response error_response(const Request& req, http::status status, std::string_view code,
                        std::string_view field, std::string_view message) {
  return json_response(req, status, error_message(code, field, message));
}

std::vector<std::string> split_path(std::string_view full) {
  const std::string target(full.substr(0, full.find('?')));
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < target.size()) {
    const auto next = target.find('/', pos);
    const auto end = next == std::string::npos ? target.size() : next;
    if (end > pos) parts.emplace_back(target.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

std::string query_param(std::string_view target, std::string_view key) {
  const auto q = target.find('?');
  if (q == std::string_view::npos) return {};
  auto rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (pair.substr(0, eq) == key && eq != std::string_view::npos) return std::string(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return {};
}

std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("selected", fmt::format("'{}' is not an electrode id", item));
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return ids;
}

Response stencil_response(const Shared& shared, const Request& req) {
  json body;
  try {
    body = json::parse(req.body());
  } catch (const json::parse_error& e) {
    return error_response(req, http::status::bad_request, "bad_message", "", e.what());
  }
  if (!body.is_object() || !body.contains("dataset") || !body["dataset"].is_string())
    return error_response(req, http::status::bad_request, "validation", "dataset", "is required");
  const auto* m = shared.registry.find(body["dataset"].get<std::string>());
  if (!m)
    return error_response(req, http::status::not_found, "not_found", "dataset", "unknown dataset");
  if (!body.contains("layout") || !body["layout"].is_array())
    return error_response(req, http::status::bad_request, "validation", "layout",
                          "must be an array of electrode ids");
  std::vector<int> layout;
  for (std::size_t i = 0; i < body["layout"].size(); ++i) {
    const auto& v = body["layout"][i];
    if (!v.is_number_integer())
      return error_response(req, http::status::bad_request, "validation",
                            fmt::format("layout[{}]", i), "must be an integer");
    layout.push_back(v.get<int>());
  }
  if (!body.contains("measurements"))
    return error_response(req, http::status::bad_request, "validation", "measurements", "is required");
  try {
    const auto arm = measurements_from_json(body["measurements"]);
    return make_response(req, http::status::ok, generate_stencil(layout, *m, arm), "image/svg+xml");
  } catch (const ValidationError& e) {
    return error_response(req, http::status::bad_request, "validation", e.field(), e.what());
  } catch (const json::exception& e) {
    return error_response(req, http::status::bad_request, "validation", "measurements", e.what());
  }
}

Response route(const Shared& shared, const Request& req) {
  const auto parts = split_path(target_of(req));
  const auto method = req.method();

  if (method == http::verb::options) {
    auto res = make_response(req, http::status::no_content, "", "text/plain");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    return res;
  }

  try {
    if (parts.size() == 1 && parts[0] == "datasets") {
      if (method != http::verb::get) return error_response(req, http::status::method_not_allowed, "method", "", "use GET");
      return json_response(req, http::status::ok, shared.registry.summaries());
    }
    if (parts.size() >= 2 && parts[0] == "datasets") {
      if (method != http::verb::get) return error_response(req, http::status::method_not_allowed, "method", "", "use GET");
      const auto* m = shared.registry.find(parts[1]);
      if (!m)
        return error_response(req, http::status::not_found, "not_found", "dataset",
                              fmt::format("unknown dataset '{}'", parts[1]));
      if (parts.size() == 2) return json_response(req, http::status::ok, manifest_to_json(*m));
      if (parts.size() == 3 && parts[2] == "map.svg") {
        const auto selected = parse_id_list(query_param(target_of(req), "selected"));
        return make_response(req, http::status::ok, render_electrode_map(*m, selected), "image/svg+xml");
      }
    }
    if (parts.size() == 1 && parts[0] == "stencil") {
      if (method != http::verb::post) return error_response(req, http::status::method_not_allowed, "method", "", "use POST");
      return stencil_response(shared, req);
    }
    if (parts.size() == 2 && parts[0] == "models") {
      if (method != http::verb::get) return error_response(req, http::status::method_not_allowed, "method", "", "use GET");
      try {
        auto res = make_response(req, http::status::ok, shared.store->get(parts[1]), "application/json");
        res.set(http::field::content_disposition, fmt::format("attachment; filename=\"{}.json\"", parts[1]));
        return res;
      } catch (const NotFoundError& e) {
        return error_response(req, http::status::not_found, "not_found", "model_id", e.what());
      }
    }
  } catch (const ValidationError& e) {
    return error_response(req, http::status::bad_request, "validation", e.field(), e.what());
  } catch (const std::exception& e) {
    return error_response(req, http::status::internal_server_error, "internal", "", e.what());
  }
  return error_response(req, http::status::not_found, "not_found", "",
                        fmt::format("no route for {}", target_of(req)));
}

// One WebSocket connection. All member state is touched only on the socket's
// strand; job threads reach it through net::post.
class WsSession : public Closable, public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Shared& shared) : ws_(std::move(socket)), shared_(shared) {}

  void shutdown() override {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

  void run(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(kBodyLimit);
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      // Connection gone: abandon whatever is running for it.
      if (cancel_) cancel_->store(true);
      return;
    }
    const auto text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    dispatch(text);
    do_read();
  }

  void dispatch(const std::string& text) {
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::parse_error& e) {
      send(error_message("bad_message", "", e.what()));
      return;
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
      send(error_message("bad_message", "type", "message needs a string 'type'"));
      return;
    }
    if (auto v = msg.find("v"); v != msg.end() && *v != kProtocolVersion) {
      send(error_message("unsupported_version", "v", fmt::format("protocol version {} only", kProtocolVersion)));
      return;
    }
    const auto type = msg["type"].get<std::string>();
    if (type == "sweep") {
      start_job(msg.contains("request") ? msg["request"] : msg);
    } else if (type == "cancel") {
      if (cancel_) cancel_->store(true);
    } else {
      send(error_message("bad_message", "type", fmt::format("unknown message type '{}'", type)));
    }
  }

  void start_job(json request) {
    if (cancel_) {
      send(error_message("busy", "", "a sweep is already running on this connection"));
      return;
    }
    cancel_ = std::make_shared<std::atomic<bool>>(false);
    {
      std::lock_guard lock(shared_.live_mutex);
      shared_.live_jobs.insert(cancel_);
    }
    auto self = shared_from_this();
    auto flag = cancel_;
    net::post(*shared_.jobs, [self, flag, request = std::move(request)] {
      // The terminal message frees the connection in the same strand handler
      // that sends it, so a client reacting to it is never told it is busy.
      auto emit = [self, flag](const json& m) {
        const bool terminal = m["type"] != "progress";
        net::post(self->ws_.get_executor(), [self, flag, terminal, text = m.dump()] {
          if (terminal && self->cancel_ == flag) self->cancel_.reset();
          self->send_text(text);
        });
      };
      handle_sweep(request, self->shared_.registry, *self->shared_.store, emit, flag.get(),
                   self->shared_.sweep_workers);
      std::lock_guard lock(self->shared_.live_mutex);
      self->shared_.live_jobs.erase(flag);
    });
  }

  void send(const json& m) { send_text(m.dump()); }

  void send_text(std::string text) {
    outbox_.push_back(std::move(text));
    if (outbox_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      outbox_.clear();
      if (cancel_) cancel_->store(true);
      return;
    }
    outbox_.pop_front();
    if (!outbox_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  std::shared_ptr<std::atomic<bool>> cancel_;
};

class HttpSession : public Closable, public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Shared& shared) : stream_(std::move(socket)), shared_(shared) {}

  void shutdown() override {
    net::post(stream_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      self->stream_.socket().close(ec);
    });
  }

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    parser_.emplace();
    parser_->body_limit(kBodyLimit);
    stream_.expires_after(kHttpTimeout);
    http::async_read(stream_, buffer_, *parser_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return close();
    if (ec) return;
    auto req = parser_->release();
    if (websocket::is_upgrade(req)) {
      if (split_path(target_of(req)) == std::vector<std::string>{"ws"}) {
        stream_.expires_never();
        auto ws = std::make_shared<WsSession>(stream_.release_socket(), shared_);
        shared_.track(ws);
        ws->run(std::move(req));
        return;
      }
      return write(error_response(req, http::status::not_found, "not_found", "", "websocket endpoint is /ws"));
    }
    write(route(shared_, req));
  }

  void write(Response res) {
    auto owned = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *owned,
                      [self = shared_from_this(), owned](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (owned->need_eof()) return self->close();
                        self->do_read();
                      });
  }

  void close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Server::Impl {
  ServiceConfig config;
  Shared shared;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  net::signal_set signals{ioc};
  std::unique_ptr<net::thread_pool> jobs;
  std::thread io_thread;
  unsigned short bound_port = 0;

  std::mutex stop_mutex;  // serializes stop() between signal and owner threads
  std::mutex state_mutex;
  std::condition_variable state_cv;
  bool running = false;

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == net::error::operation_aborted) return;
      } else {
        auto session = std::make_shared<HttpSession>(std::move(socket), shared);
        shared.track(session);
        session->run();
      }
      accept();
    });
  }
};

Server::Server(ServiceConfig config) : Server(config, DatasetRegistry(config.data_dir)) {}

Server::Server(ServiceConfig config, DatasetRegistry registry) : impl_(std::make_unique<Impl>()) {
  if (config.workers < 1) throw ValidationError("workers", "must be at least 1");
  if (!(config.model_ttl_hours >= 0.0)) throw ValidationError("model_ttl_hours", "must be >= 0");
  impl_->config = config;
  impl_->shared.registry = std::move(registry);
  const auto ttl = std::chrono::seconds(std::llround(config.model_ttl_hours * 3600.0));
  impl_->shared.store = std::make_unique<ArtifactStore>(config.resolved_model_dir(), ttl);
  impl_->shared.sweep_workers = config.workers;
}

Server::~Server() { stop(); }

void Server::start() {
  auto& s = *impl_;
  const tcp::endpoint endpoint{net::ip::make_address(s.config.address), s.config.port};
  s.acceptor.open(endpoint.protocol());
  s.acceptor.set_option(net::socket_base::reuse_address(true));
  s.acceptor.bind(endpoint);
  s.acceptor.listen(net::socket_base::max_listen_connections);
  s.bound_port = s.acceptor.local_endpoint().port();

  s.jobs = std::make_unique<net::thread_pool>(s.config.workers);
  s.shared.jobs = s.jobs.get();
  s.shared.store->purge_expired();
  s.accept();
  s.signals.add(SIGINT);
  s.signals.add(SIGTERM);
  s.signals.async_wait([this](beast::error_code ec, int) {
    if (!ec) std::thread([this] { stop(); }).detach();
  });
  {
    std::lock_guard lock(s.state_mutex);
    s.running = true;
  }
  s.io_thread = std::thread([&s] { s.ioc.run(); });
}

void Server::stop() {
  auto& s = *impl_;
  std::lock_guard stop_lock(s.stop_mutex);
  {
    std::lock_guard lock(s.state_mutex);
    if (!s.running) return;
  }
  {
    std::lock_guard lock(s.shared.live_mutex);
    for (const auto& flag : s.shared.live_jobs) flag->store(true);
  }
  if (s.jobs) s.jobs->join();

  // Close the listener and every connection, then let pending handlers drain.
  net::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    s.signals.cancel(ec);
  });
  {
    std::lock_guard lock(s.shared.sessions_mutex);
    for (const auto& w : s.shared.sessions)
      if (auto session = w.lock()) session->shutdown();
    s.shared.sessions.clear();
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
  while (!s.ioc.stopped() && std::chrono::steady_clock::now() < deadline)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  s.ioc.stop();
  if (s.io_thread.joinable()) s.io_thread.join();
  std::lock_guard lock(s.state_mutex);
  s.running = false;
  s.state_cv.notify_all();
}

void Server::wait() {
  auto& s = *impl_;
  std::unique_lock lock(s.state_mutex);
  s.state_cv.wait(lock, [&s] { return !s.running; });
}

unsigned short Server::port() const { return impl_->bound_port; }

const DatasetRegistry& Server::registry() const { return impl_->shared.registry; }

}  // namespace sparseemg
