#include <gtest/gtest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <cmath>
#include <fstream>
#include <thread>

#include "ess/config.hpp"
#include "ess/pipeline.hpp"
#include "ess/server.hpp"
#include "ess/walkthrough.hpp"
#include "json.hpp"

using namespace ess;
using namespace ess::app;
using nlohmann::json;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

fs::path fresh_root(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ess_walk_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  ::setenv("ESS_LAB_DATA_DIR", d.c_str(), 1);
  return d;
}

WalkthroughSession box_session(SessionConfig cfg = {}) {
  cfg.width = cfg.height = 16;
  return WalkthroughSession(env::box_room(6, 6, 0.5), env::default_lighting_palette(), cfg);
}

json input(WalkthroughSession& s, const std::string& action) {
  const auto out = s.handle(json{{"type", "input"}, {"action", action}}.dump());
  EXPECT_EQ(out.size(), 1u);
  return json::parse(out.at(0));
}

// Runs the server on a background thread for the lifetime of the fixture.
struct RunningServer {
  WalkthroughServer server;
  std::thread thread;
  RunningServer(WalkthroughSession& s, ServerOptions opts) : server(s, std::move(opts)) {
    thread = std::thread([this] { server.run(); });
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
};

http::response<http::string_body> http_get(unsigned short port, const std::string& target) {
  net::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
  return res;
}

}  // namespace

TEST(Session, HelloFrameCarriesStartPose) {
  auto s = box_session();
  const auto hello = json::parse(s.hello());
  EXPECT_EQ(hello["type"], "frame");
  EXPECT_EQ(hello["step"], 0);
  EXPECT_DOUBLE_EQ(hello["pose"]["x"].get<double>(), env::start_pose(s.plan()).x());
  EXPECT_DOUBLE_EQ(hello["pose"]["yaw"].get<double>(), 0.0);
  EXPECT_EQ(hello["lighting"], 0);
  EXPECT_EQ(hello["recording"], false);
  const auto img = decode_ppm(base64_decode(hello["image_b64"].get<std::string>()));
  EXPECT_EQ(img, env::render(s.plan(), s.pose(), env::default_lighting_palette()[0], 16, 16));
}

TEST(Session, SeventyTwoLeftTurnsReturnToStartYaw) {
  auto s = box_session();
  const double yaw0 = s.pose().yaw();
  for (int i = 0; i < 72; ++i) input(s, "turn_left");
  EXPECT_NEAR(std::fmod(s.pose().yaw() - yaw0 + 360.0, 360.0), 0.0, 1e-9);
  EXPECT_EQ(s.step(), 72);
  input(s, "turn_left");
  EXPECT_NEAR(s.pose().yaw(), 5.0, 1e-9);
  input(s, "turn_right");
  input(s, "turn_right");
  EXPECT_NEAR(s.pose().yaw(), 355.0, 1e-9);
}

TEST(Session, CollisionRejectsMoveButEmitsFrame) {
  auto s = box_session();
  // Start faces +x from the first cell; turn to face the -x wall.
  for (int i = 0; i < 36; ++i) input(s, "turn_left");
  const Pose before = s.pose();
  const auto f = input(s, "forward");
  EXPECT_EQ(f["type"], "frame");
  EXPECT_EQ(s.pose().x(), before.x());
  EXPECT_EQ(s.pose().y(), before.y());
  EXPECT_EQ(f["step"], 37);
  const auto b = input(s, "back");
  EXPECT_NEAR(b["pose"]["x"].get<double>(), before.x() + 0.2, 1e-12);
}

TEST(Session, MalformedMessagesYieldErrorFrames) {
  auto s = box_session();
  for (const char* m : {"not json", "[]", "{\"type\": 3}", "{\"type\": \"input\"}",
                        "{\"type\": \"input\", \"action\": \"jump\"}", "{\"type\": \"warp\"}",
                        "{\"type\": \"lighting\", \"id\": 42}", "{\"type\": \"recording\", \"on\": 1}",
                        "{\"type\": \"save\", \"path\": \"x.csv\"}"}) {
    const auto out = s.handle(m);
    ASSERT_EQ(out.size(), 1u);
    const auto j = json::parse(out[0]);
    EXPECT_EQ(j["type"], "error") << m;
    EXPECT_TRUE(j["msg"].is_string());
  }
  EXPECT_EQ(s.step(), 0);
  EXPECT_EQ(json::parse(input(s, "forward").dump())["type"], "frame");
}

TEST(Session, RecordingAndLighting) {
  auto s = box_session();
  EXPECT_EQ(json::parse(s.handle(R"({"type":"recording","on":true})")[0])["recording"], true);
  input(s, "forward");
  input(s, "turn_left");
  EXPECT_EQ(json::parse(s.handle(R"({"type":"recording","on":false})")[0])["recording"], false);
  input(s, "forward");
  ASSERT_EQ(s.buffer().points.size(), 3u);
  EXPECT_EQ(s.buffer().points[0].step, 0);
  EXPECT_EQ(s.buffer().points[2].step, 2);
  const auto f = json::parse(s.handle(R"({"type":"lighting","id":4})")[0]);
  EXPECT_EQ(f["lighting"], 4);
  EXPECT_EQ(s.step(), 3);
}

TEST(Base64, RoundTrip) {
  EXPECT_EQ(base64_encode("Man"), "TWFu");
  EXPECT_EQ(base64_encode("Ma"), "TWE=");
  std::string bytes;
  for (int i = 0; i < 256; ++i) bytes.push_back(static_cast<char>(i));
  EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
}

TEST(Server, MimeTypes) {
  EXPECT_EQ(mime_type("index.html"), "text/html; charset=utf-8");
  EXPECT_NE(mime_type("app.js").find("javascript"), std::string::npos);
  EXPECT_EQ(mime_type("blob.bin"), "application/octet-stream");
}

TEST(Server, ServesStaticFilesAndPlaceholder) {
  const auto root = fresh_root("static");
  fs::create_directories(root / "ui" / "assets");
  {
    std::ofstream(root / "ui" / "index.html") << "<html>bundle</html>";
    std::ofstream(root / "ui" / "assets" / "app.js") << "console.log(1);";
  }
  auto s = box_session();
  {
    RunningServer srv(s, ServerOptions{"127.0.0.1", 0, root / "ui"});
    const auto idx = http_get(srv.server.port(), "/");
    EXPECT_EQ(idx.result(), http::status::ok);
    EXPECT_EQ(idx.body(), "<html>bundle</html>");
    const auto js = http_get(srv.server.port(), "/assets/app.js");
    EXPECT_EQ(js.result(), http::status::ok);
    EXPECT_NE(std::string(js[http::field::content_type]).find("javascript"), std::string::npos);
    EXPECT_EQ(http_get(srv.server.port(), "/missing.css").result(), http::status::not_found);
    EXPECT_NE(http_get(srv.server.port(), "/../secret").result(), http::status::ok);
  }
  {
    RunningServer srv(s, ServerOptions{});
    const auto idx = http_get(srv.server.port(), "/");
    EXPECT_EQ(idx.result(), http::status::ok);
    EXPECT_NE(idx.body().find("/ws"), std::string::npos);
  }
}

TEST(Server, RecordedWalkReplaysExactly) {
  const auto root = fresh_root("roundtrip");
  auto ov = std::vector<std::string>{
      "env.steps=50",
      "env.resolution=16",
      "train.architecture=\"tinyconv:in=3x16x16,conv=4-8,feature=16,proj=16,embedding=8\"",
      "dataset_dir=\"base\"",
  };
  const auto cfg = config_from_text("{}", ov);
  run_generate(cfg);
  const auto plan = env::load_plan(root / "base" / kPlanFile);
  SessionConfig sc;
  sc.width = sc.height = 32;
  WalkthroughSession session(plan, lighting_palette(cfg), sc);

  std::vector<Pose> received;
  {
    RunningServer srv(session, ServerOptions{});
    net::io_context ioc;
    tcp::socket sock(ioc);
    sock.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), srv.server.port()));
    websocket::stream<tcp::socket> ws(std::move(sock));
    ws.handshake("127.0.0.1", "/ws");
    beast::flat_buffer buf;
    auto next = [&] {
      buf.clear();
      ws.read(buf);
      return json::parse(beast::buffers_to_string(buf.data()));
    };
    const auto hello = next();
    ASSERT_EQ(hello["type"], "frame");
    ws.write(net::buffer(std::string(R"({"type":"recording","on":true})")));
    EXPECT_EQ(next()["recording"], true);
    const char* actions[] = {"forward", "forward", "turn_left", "forward", "turn_right", "back", "forward"};
    for (int i = 0; i < 100; ++i) {
      ws.write(net::buffer(json{{"type", "input"}, {"action", actions[i % 7]}}.dump()));
      const auto f = next();
      ASSERT_EQ(f["type"], "frame");
      ASSERT_EQ(f["step"], i + 1);
      const Pose p(f["pose"]["x"], f["pose"]["y"], f["pose"]["z"], f["pose"]["yaw"]);
      received.push_back(p);
      if (i == 99) {
        const auto img = decode_ppm(base64_decode(f["image_b64"].get<std::string>()));
        EXPECT_EQ(img, env::render(plan, p, lighting_palette(cfg)[0], 32, 32));
      }
    }
    ws.write(net::buffer(std::string(R"({"type":"save","path":"recorded/walk.csv"})")));
    const auto saved = next();
    ASSERT_EQ(saved["type"], "frame") << saved.dump();
    EXPECT_EQ(saved["saved"], (root / "recorded" / "walk.csv").string());
    ws.write(net::buffer(std::string("garbage")));
    EXPECT_EQ(next()["type"], "error");
    ws.close(websocket::close_code::normal);
  }

  const auto& buffer = session.buffer();
  ASSERT_EQ(buffer.points.size(), 101u);
  for (std::size_t i = 0; i < received.size(); ++i) EXPECT_EQ(buffer.points[i + 1].pose, received[i]);

  auto ov2 = ov;
  ov2.push_back("dataset_dir=\"replayed\"");
  ov2.push_back("env.trajectory_file=\"recorded/walk.csv\"");
  ov2.push_back("env.lighting=\"fixed\"");
  const auto g = run_generate(config_from_text("{}", ov2));
  const auto records = env::load_manifest(g.dataset_dir / kManifestFile);
  ASSERT_EQ(records.size(), buffer.points.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].step, buffer.points[i].step);
    EXPECT_EQ(records[i].pose, buffer.points[i].pose);
  }
}
