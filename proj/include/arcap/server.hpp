#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "arcap/protocol.hpp"

namespace arcap {

// ARCAP_PORT if set and valid, otherwise `fallback`.
std::uint16_t port_from_env(std::uint16_t fallback = kDefaultPort);

struct ServerStats {
  std::uint64_t connections = 0;
  std::uint64_t processed_frames = 0;
  std::uint64_t dropped_frames = 0;
};

// TCP service. Each connection gets its own thread and ServerSession. A
// connection whose first bytes are "GET " is treated as HTTP: a websocket
// upgrade carries the same frames (one frame per binary message), `/model`
// returns the robot model document and, with a console directory, other paths
// serve static files.
class Server {
 public:
  Server(ServerOptions options, std::string address = "127.0.0.1", std::uint16_t port = kDefaultPort);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts accepting in the background. Port 0 picks a free port.
  void start();
  std::uint16_t port() const;
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  ServerStats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocking client for the raw stream transport. The constructor connects and
// completes the handshake; a refused handshake raises ProtocolError carrying
// the server's error code.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port, const std::string& client_kind = "arcap-cli",
         int version = kProtocolVersion);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  // Sends a message with the next sequence number and returns that number.
  std::uint64_t send(MessageBody body);
  void send_raw(const std::vector<std::uint8_t>& bytes);
  // Next message from the server. Raises ProtocolError when the connection
  // closes.
  Message receive();
  // Sends and waits for the first reply.
  Message request(MessageBody body);

  const Hello& server_hello() const { return server_hello_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Hello server_hello_;
};

struct StreamOptions {
  // Pace sends by frame timestamps and read replies concurrently; otherwise
  // wait for each reply before sending the next frame.
  bool realtime = false;
  std::optional<ColoredPointCloud> scene;  // uploaded before streaming
  std::optional<std::string> record;       // session id to record under
  bool finalize = true;                    // how the recording is closed
};

struct StreamResult {
  std::vector<EngineOutputMsg> outputs;
  std::uint64_t dropped = 0;
  std::optional<RecordStatus> record;
  std::vector<ErrorMsg> errors;
};

// Streams hand frames over an established connection.
StreamResult stream_frames(Client& client, const std::vector<HandFrameMsg>& frames, const StreamOptions& options = {});

}  // namespace arcap
