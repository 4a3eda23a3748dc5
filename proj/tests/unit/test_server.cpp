#include <catch_amalgamated.hpp>

#include <chrono>
#include <fstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "arcap/replay.hpp"
#include "arcap/server.hpp"
#include "../test_support.hpp"

using namespace arcap;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
using tcp = asio::ip::tcp;

namespace {

const Pose kHeadset = look_at(Vec3(-0.6, 0, 1.0), Vec3(0.45, 0, 0.25));

struct Running {
  testing::TempDir tmp;
  std::shared_ptr<const RobotModel> model = std::make_shared<const RobotModel>(testing::model("arm7_dexhand"));
  std::unique_ptr<Server> server;

  explicit Running(const std::string& name, bool console = false) : tmp("srv_" + name) {
    ServerOptions o;
    o.model = model;
    o.session_root = tmp.path / "sessions";
    if (console) {
      std::filesystem::create_directories(tmp.path / "console");
      std::ofstream(tmp.path / "console" / "index.html") << "<html>console</html>";
      o.console_dir = tmp.path / "console";
    }
    server = std::make_unique<Server>(o, "127.0.0.1", 0);
    server->start();
  }

  HandFrameMsg hand(double t) const {
    return HandFrameMsg{synthesize_hand_frame(*model, model->rest, Pose::identity(), kHeadset, t), std::nullopt};
  }
};

http::response<http::string_body> http_get(std::uint16_t port, const std::string& target) {
  asio::io_context io;
  tcp::socket sock(io);
  sock.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
  http::request<http::empty_body> req(http::verb::get, target, 11);
  req.set(http::field::host, "localhost");
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  return res;
}

}  // namespace

TEST_CASE("port comes from ARCAP_PORT when valid", "[server]") {
  setenv("ARCAP_PORT", "9123", 1);
  CHECK(port_from_env() == 9123);
  setenv("ARCAP_PORT", "nope", 1);
  CHECK(port_from_env() == kDefaultPort);
  unsetenv("ARCAP_PORT");
  CHECK(port_from_env(42) == 42);
}

TEST_CASE("loopback session: handshake, ordered outputs, survivable errors", "[server]") {
  Running run("loop");
  Client client("127.0.0.1", run.server->port(), "test");
  CHECK(client.server_hello().version == kProtocolVersion);

  std::uint64_t last = 0;
  for (int i = 0; i < 3; ++i) {
    const std::uint64_t seq = client.send(run.hand(i / 60.0));
    const Message m = client.receive();
    const auto& out = std::get<EngineOutputMsg>(m.body);
    CHECK(out.ack == seq);
    CHECK(m.seq > last);
    last = m.seq;
  }

  // garbage payload with a valid prefix
  const std::string junk = "{{{{ nope";
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(junk.size()));
  w.put_bytes(junk);
  client.send_raw(w.take());
  CHECK(std::get<ErrorMsg>(client.receive().body).code == "protocol");

  const Message after = client.request(run.hand(1.0));
  CHECK(std::holds_alternative<EngineOutputMsg>(after.body));
}

TEST_CASE("version 0 is refused", "[server]") {
  Running run("version");
  try {
    Client client("127.0.0.1", run.server->port(), "old", 0);
    FAIL("handshake accepted");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("version_mismatch") != std::string::npos);
  }
}

TEST_CASE("dropping the connection discards an open recording", "[server]") {
  Running run("discard");
  {
    Client client("127.0.0.1", run.server->port());
    client.request(RecordStart{"gone"});
    client.request(run.hand(0.0));
  }
  const auto dir = session_dir(run.tmp.path / "sessions", "gone");
  SessionStatus status = SessionStatus::Recording;
  for (int i = 0; i < 200 && status == SessionStatus::Recording; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    status = read_manifest(dir).status;
  }
  CHECK(status == SessionStatus::Discarded);
}

TEST_CASE("streaming helper records a finalized session", "[server]") {
  Running run("stream");
  std::vector<HandFrameMsg> frames;
  for (int i = 0; i < 20; ++i) frames.push_back(run.hand(i / 60.0));
  Client client("127.0.0.1", run.server->port());
  StreamOptions opts;
  opts.record = "s";
  const StreamResult r = stream_frames(client, frames, opts);
  CHECK(r.outputs.size() == 20);
  CHECK(r.errors.empty());
  REQUIRE(r.record);
  CHECK(r.record->status == SessionStatus::Finalized);
  CHECK(load_session(r.record->path).frames.size() == 20);
}

TEST_CASE("HTTP side: model document, console assets, websocket frames", "[server]") {
  Running run("http", true);
  const auto model = http_get(run.server->port(), "/model");
  CHECK(model.result() == http::status::ok);
  CHECK(parse_robot_model(model.body()).name == "arm7_dexhand");

  const auto index = http_get(run.server->port(), "/");
  CHECK(index.result() == http::status::ok);
  CHECK(index.body() == "<html>console</html>");
  CHECK(http_get(run.server->port(), "/../secret").result() == http::status::not_found);
  CHECK(http_get(run.server->port(), "/missing.js").result() == http::status::not_found);

  asio::io_context io;
  beast::websocket::stream<tcp::socket> ws(io);
  ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), run.server->port()));
  ws.handshake("localhost", "/");
  ws.binary(true);
  auto roundtrip = [&](const Message& m) {
    ws.write(asio::buffer(encode_message(m)));
    beast::flat_buffer buf;
    ws.read(buf);
    const auto d = buf.data();
    return decode_message(std::span(static_cast<const std::uint8_t*>(d.data()), d.size()));
  };
  CHECK(std::holds_alternative<Hello>(roundtrip(Message{1, Hello{kProtocolVersion, "console"}}).body));
  const Message out = roundtrip(Message{2, run.hand(0.0)});
  CHECK(std::get<EngineOutputMsg>(out.body).ack == 2);
  ws.close(beast::websocket::close_code::normal);
}
