#include "arcap/server.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <list>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace arcap {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::uint16_t port_from_env(std::uint16_t fallback) {
  const char* env = std::getenv("ARCAP_PORT");
  if (!env || !*env) return fallback;
  unsigned value = 0;
  const char* end = env + std::strlen(env);
  auto [ptr, ec] = std::from_chars(env, end, value);
  if (ec != std::errc() || ptr != end || value == 0 || value > 65535) return fallback;
  return static_cast<std::uint16_t>(value);
}

namespace {

std::string content_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

std::vector<std::uint8_t> encode_all(const std::vector<Message>& msgs) {
  std::vector<std::uint8_t> out;
  for (const auto& m : msgs) {
    auto bytes = encode_message(m);
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

}  // namespace

struct Server::Impl {
  ServerOptions options;
  std::string address;
  std::uint16_t requested_port;
  std::string model_doc;

  asio::io_context io;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::uint16_t bound_port = 0;

  struct Connection {
    std::shared_ptr<tcp::socket> socket;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  std::mutex mu;
  std::condition_variable stopped_cv;
  bool stopping = false;
  std::list<Connection> connections;

  std::atomic<std::uint64_t> connection_count{0};
  std::atomic<std::uint64_t> processed{0};
  std::atomic<std::uint64_t> dropped{0};

  void accept_next() {
    acceptor->async_accept([this](const boost::system::error_code& ec, tcp::socket socket) {
      if (ec) return;
      spawn(std::move(socket));
      accept_next();
    });
  }

  void spawn(tcp::socket socket) {
    std::lock_guard lock(mu);
    if (stopping) return;
    for (auto it = connections.begin(); it != connections.end();) {
      if (it->done->load()) {
        it->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
    ++connection_count;
    Connection c{std::make_shared<tcp::socket>(std::move(socket)), {}, std::make_shared<std::atomic<bool>>(false)};
    c.thread = std::thread([this, sock = c.socket, done = c.done] {
      try {
        serve_connection(*sock);
      } catch (const std::exception&) {
        // connection-level failures only end this connection
      }
      boost::system::error_code ignored;
      sock->shutdown(tcp::socket::shutdown_both, ignored);
      sock->close(ignored);
      done->store(true);
    });
    connections.push_back(std::move(c));
  }

  void serve_connection(tcp::socket& sock) {
    sock.set_option(tcp::no_delay(true));
    std::array<std::uint8_t, 4> head{};
    asio::read(sock, asio::buffer(head));
    if (std::memcmp(head.data(), "GET ", 4) == 0) {
      serve_http(sock, head);
    } else {
      serve_stream(sock, head);
    }
  }

  void account(const ServerSession& session, std::uint64_t& seen_processed, std::uint64_t& seen_dropped) {
    processed += session.processed_frames() - seen_processed;
    dropped += session.dropped_frames() - seen_dropped;
    seen_processed = session.processed_frames();
    seen_dropped = session.dropped_frames();
  }

  void serve_stream(tcp::socket& sock, const std::array<std::uint8_t, 4>& head) {
    ServerSession session(options);
    std::uint64_t seen_processed = 0, seen_dropped = 0;
    FrameReader reader;
    reader.feed(head);
    std::vector<std::uint8_t> buf(1 << 16);

    auto read_into = [&](bool blocking) {
      if (!blocking && sock.available() == 0) return false;
      const std::size_t n = sock.read_some(asio::buffer(buf));
      reader.feed(std::span<const std::uint8_t>(buf.data(), n));
      return true;
    };

    try {
      while (!session.closed()) {
        std::vector<Message> batch, out;
        bool fatal = false;
        // Pull every frame that is already here so the session can coalesce.
        do {
          try {
            while (auto frame = reader.next()) {
              try {
                batch.push_back(decode_message(*frame));
              } catch (const ProtocolError& e) {
                auto replies = session.handle(std::move(batch));
                batch.clear();
                out.insert(out.end(), replies.begin(), replies.end());
                out.push_back(session.protocol_error(e.what()));
              }
            }
          } catch (const ProtocolError& e) {
            // unusable length prefix: the stream cannot be resynchronised
            fatal = true;
            auto replies = session.handle(std::move(batch));
            batch.clear();
            out.insert(out.end(), replies.begin(), replies.end());
            out.push_back(session.protocol_error(e.what()));
            break;
          }
        } while (read_into(false));

        if (!batch.empty()) {
          auto replies = session.handle(std::move(batch));
          out.insert(out.end(), replies.begin(), replies.end());
        }
        account(session, seen_processed, seen_dropped);
        if (!out.empty()) asio::write(sock, asio::buffer(encode_all(out)));
        if (fatal) break;
        if (out.empty() && !session.closed()) read_into(true);
      }
    } catch (const boost::system::system_error&) {
      // peer went away
    }
    session.disconnect();
    account(session, seen_processed, seen_dropped);
  }

  void serve_http(tcp::socket& sock, const std::array<std::uint8_t, 4>& head) {
    beast::flat_buffer buffer;
    auto prepared = buffer.prepare(head.size());
    std::memcpy(prepared.data(), head.data(), head.size());
    buffer.commit(head.size());
    http::request<http::string_body> req;
    http::read(sock, buffer, req);

    if (websocket::is_upgrade(req)) {
      serve_websocket(sock, req);
      return;
    }

    http::response<http::string_body> res;
    res.version(req.version());
    res.keep_alive(false);
    res.set(http::field::server, "arcap");
    std::string target(req.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);

    if (req.method() != http::verb::get) {
      res.result(http::status::method_not_allowed);
    } else if (target == "/model") {
      res.result(http::status::ok);
      res.set(http::field::content_type, "application/json");
      res.body() = model_doc;
    } else if (options.console_dir && target.find("..") == std::string::npos && !target.empty() &&
               target[0] == '/') {
      std::filesystem::path file = *options.console_dir / (target == "/" ? "index.html" : target.substr(1));
      std::ifstream in(file, std::ios::binary);
      if (in && std::filesystem::is_regular_file(file)) {
        std::ostringstream ss;
        ss << in.rdbuf();
        res.result(http::status::ok);
        res.set(http::field::content_type, content_type(file));
        res.body() = ss.str();
      } else {
        res.result(http::status::not_found);
      }
    } else {
      res.result(http::status::not_found);
    }
    res.prepare_payload();
    http::write(sock, res);
  }

  void serve_websocket(tcp::socket& sock, const http::request<http::string_body>& req) {
    websocket::stream<tcp::socket&> ws(sock);
    ws.read_message_max(kMaxFrameBytes + 4);
    ws.accept(req);
    ws.binary(true);
    ServerSession session(options);
    std::uint64_t seen_processed = 0, seen_dropped = 0;
    try {
      while (!session.closed()) {
        beast::flat_buffer msg;
        ws.read(msg);
        const auto data = msg.data();
        std::span<const std::uint8_t> bytes(static_cast<const std::uint8_t*>(data.data()), data.size());
        std::vector<Message> out;
        try {
          out = session.handle({decode_message(bytes)});
        } catch (const ProtocolError& e) {
          out.push_back(session.protocol_error(e.what()));
        }
        account(session, seen_processed, seen_dropped);
        for (const auto& m : out) ws.write(asio::buffer(encode_message(m)));
      }
      ws.close(websocket::close_code::normal);
    } catch (const boost::system::system_error&) {
      // peer went away
    }
    session.disconnect();
    account(session, seen_processed, seen_dropped);
  }
};

Server::Server(ServerOptions options, std::string address, std::uint16_t port) : impl_(std::make_unique<Impl>()) {
  if (!options.model) throw ContractError("server needs a robot model");
  impl_->model_doc = robot_model_to_json(*options.model);
  impl_->options = std::move(options);
  impl_->address = std::move(address);
  impl_->requested_port = port;
}

Server::~Server() { stop(); }

void Server::start() {
  auto& im = *impl_;
  const tcp::endpoint ep(asio::ip::make_address(im.address), im.requested_port);
  im.acceptor = std::make_unique<tcp::acceptor>(im.io);
  im.acceptor->open(ep.protocol());
  im.acceptor->set_option(tcp::acceptor::reuse_address(true));
  im.acceptor->bind(ep);
  im.acceptor->listen();
  im.bound_port = im.acceptor->local_endpoint().port();
  im.accept_next();
  im.accept_thread = std::thread([&im] { im.io.run(); });
}

std::uint16_t Server::port() const { return impl_->bound_port; }

void Server::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopping; });
}

void Server::stop() {
  auto& im = *impl_;
  std::list<Impl::Connection> conns;
  {
    std::lock_guard lock(im.mu);
    if (im.stopping) return;
    im.stopping = true;
    conns.swap(im.connections);
  }
  im.stopped_cv.notify_all();
  if (im.acceptor) {
    asio::post(im.io, [&im] {
      boost::system::error_code ignored;
      im.acceptor->close(ignored);
    });
  }
  im.io.stop();
  if (im.accept_thread.joinable()) im.accept_thread.join();
  for (auto& c : conns) {
    boost::system::error_code ignored;
    c.socket->shutdown(tcp::socket::shutdown_both, ignored);
    if (c.thread.joinable()) c.thread.join();
  }
}

ServerStats Server::stats() const {
  return {impl_->connection_count.load(), impl_->processed.load(), impl_->dropped.load()};
}

// Client ----------------------------------------------------------------------

struct Client::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  FrameReader reader;
  std::uint64_t seq = 0;
  std::vector<std::uint8_t> buf = std::vector<std::uint8_t>(1 << 16);
};

Client::Client(const std::string& host, std::uint16_t port, const std::string& client_kind, int version)
    : impl_(std::make_unique<Impl>()) {
  tcp::resolver resolver(impl_->io);
  try {
    asio::connect(impl_->socket, resolver.resolve(host, std::to_string(port)));
  } catch (const boost::system::system_error& e) {
    throw ProtocolError("cannot connect to " + host + ":" + std::to_string(port) + ": " + e.what());
  }
  impl_->socket.set_option(tcp::no_delay(true));
  const Message reply = request(Hello{version, client_kind});
  if (const auto* err = std::get_if<ErrorMsg>(&reply.body)) throw ProtocolError(err->code + ": " + err->text);
  const auto* hello = std::get_if<Hello>(&reply.body);
  if (!hello) throw ProtocolError("server did not answer the handshake");
  server_hello_ = *hello;
}

Client::~Client() {
  boost::system::error_code ignored;
  impl_->socket.shutdown(tcp::socket::shutdown_both, ignored);
  impl_->socket.close(ignored);
}

std::uint64_t Client::send(MessageBody body) {
  const Message msg{++impl_->seq, std::move(body)};
  send_raw(encode_message(msg));
  return msg.seq;
}

void Client::send_raw(const std::vector<std::uint8_t>& bytes) {
  try {
    asio::write(impl_->socket, asio::buffer(bytes));
  } catch (const boost::system::system_error& e) {
    throw ProtocolError(std::string("connection lost: ") + e.what());
  }
}

Message Client::receive() {
  auto& im = *impl_;
  for (;;) {
    if (auto frame = im.reader.next()) return decode_message(*frame);
    boost::system::error_code ec;
    const std::size_t n = im.socket.read_some(asio::buffer(im.buf), ec);
    if (ec) throw ProtocolError("connection closed by server");
    im.reader.feed(std::span<const std::uint8_t>(im.buf.data(), n));
  }
}

Message Client::request(MessageBody body) {
  send(std::move(body));
  return receive();
}

StreamResult stream_frames(Client& client, const std::vector<HandFrameMsg>& frames, const StreamOptions& options) {
  StreamResult result;
  auto take = [&](const Message& m) {
    if (const auto* out = std::get_if<EngineOutputMsg>(&m.body)) {
      result.dropped += out->dropped;
      result.outputs.push_back(*out);
    } else if (const auto* err = std::get_if<ErrorMsg>(&m.body)) {
      result.errors.push_back(*err);
    } else if (const auto* st = std::get_if<RecordStatus>(&m.body)) {
      result.record = *st;
    }
  };
  auto expect_status = [&](MessageBody body) {
    const Message reply = client.request(std::move(body));
    take(reply);
    if (const auto* err = std::get_if<ErrorMsg>(&reply.body)) throw StateError(err->code + ": " + err->text);
  };

  // Waiting for the scene reply keeps a slow upload from delaying the first
  // paced frames.
  if (options.scene) expect_status(SceneUpload{*options.scene});
  if (options.record) expect_status(RecordStart{*options.record});

  if (!options.realtime) {
    double last_t = -std::numeric_limits<double>::infinity();
    for (const auto& f : frames) {
      // The server would swallow this frame without a reply; skip it here.
      const double t = f.frame.timestamp;
      if (t > last_t && t - last_t < kCoalesceInterval) {
        ++result.dropped;
        continue;
      }
      last_t = t;
      client.send(f);
      Message reply;
      do {
        reply = client.receive();
        take(reply);
      } while (!std::holds_alternative<EngineOutputMsg>(reply.body) && !std::holds_alternative<ErrorMsg>(reply.body));
    }
  } else if (!frames.empty()) {
    std::atomic<bool> send_failed{false};
    std::thread sender([&] {
      const auto start = std::chrono::steady_clock::now();
      const double t0 = frames.front().frame.timestamp;
      try {
        for (const auto& f : frames) {
          std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                    std::chrono::duration<double>(f.frame.timestamp - t0)));
          client.send(f);
        }
      } catch (const std::exception&) {
        send_failed = true;
      }
    });
    std::uint64_t accounted = 0;
    try {
      while (accounted < frames.size()) {
        const Message reply = client.receive();
        take(reply);
        if (const auto* out = std::get_if<EngineOutputMsg>(&reply.body)) accounted += 1 + out->dropped;
        else if (std::holds_alternative<ErrorMsg>(reply.body)) accounted += 1;
        if (send_failed) break;
      }
    } catch (...) {
      sender.join();
      throw;
    }
    sender.join();
  }

  if (options.record) expect_status(RecordStop{options.finalize});
  return result;
}

}  // namespace arcap
