#include "ess/server.hpp"

#include <sys/socket.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace ess::app {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr const char* kPlaceholder = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>ess walkthrough</title></head>
<body style="font-family:monospace">
<p>UI bundle not found. The walkthrough WebSocket is live at <code>/ws</code>.</p>
<canvas id="c" width="384" height="384" style="image-rendering:pixelated;border:1px solid #888"></canvas>
<pre id="hud"></pre>
<script>
const ws = new WebSocket(`ws://${location.host}/ws`);
const keys = {w:"forward",ArrowUp:"forward",s:"back",ArrowDown:"back",a:"turn_left",ArrowLeft:"turn_left",d:"turn_right",ArrowRight:"turn_right"};
let recording = false;
ws.onmessage = (ev) => {
  const m = JSON.parse(ev.data);
  if (m.type !== "frame") { document.getElementById("hud").textContent = "error: " + m.msg; return; }
  recording = m.recording;
  const bytes = Uint8Array.from(atob(m.image_b64), ch => ch.charCodeAt(0));
  let pos = 0, fields = [];
  while (fields.length < 4) {
    let tok = "";
    while (bytes[pos] <= 32) pos++;
    while (bytes[pos] > 32) tok += String.fromCharCode(bytes[pos++]);
    fields.push(tok);
  }
  pos++;
  const w = +fields[1], h = +fields[2];
  const img = new ImageData(w, h);
  for (let i = 0; i < w * h; i++) {
    img.data[4*i] = bytes[pos+3*i]; img.data[4*i+1] = bytes[pos+3*i+1]; img.data[4*i+2] = bytes[pos+3*i+2]; img.data[4*i+3] = 255;
  }
  const c = document.getElementById("c"), off = new OffscreenCanvas(w, h);
  off.getContext("2d").putImageData(img, 0, 0);
  const ctx = c.getContext("2d"); ctx.imageSmoothingEnabled = false; ctx.drawImage(off, 0, 0, c.width, c.height);
  document.getElementById("hud").textContent =
    `step ${m.step}  x ${m.pose.x.toFixed(2)}  y ${m.pose.y.toFixed(2)}  yaw ${m.pose.yaw.toFixed(1)}  light ${m.lighting}  rec ${m.recording} (${m.buffered})` +
    (m.saved ? `  saved ${m.saved}` : "");
};
document.onkeydown = (e) => {
  if (keys[e.key]) ws.send(JSON.stringify({type:"input", action:keys[e.key]}));
  else if (e.key === "r") ws.send(JSON.stringify({type:"recording", on:!recording}));
  else if (e.key >= "0" && e.key <= "9") ws.send(JSON.stringify({type:"lighting", id:+e.key}));
  else if (e.key === "p") ws.send(JSON.stringify({type:"save", path:prompt("save trajectory to", "walkthrough.csv") || "walkthrough.csv"}));
};
</script></body></html>
)";

}  // namespace

std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

struct WalkthroughServer::Impl {
  WalkthroughSession& session;
  ServerOptions opts;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::atomic<bool> stopping{false};
  std::mutex session_mutex;
  std::mutex conn_mutex;
  std::set<int> open_fds;
  std::list<std::thread> threads;

  Impl(WalkthroughSession& s, ServerOptions o) : session(s), opts(std::move(o)), acceptor(ioc) {
    const tcp::endpoint ep(asio::ip::make_address(opts.address), opts.port);
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  }

  http::response<http::string_body> static_response(const http::request<http::string_body>& req) {
    http::response<http::string_body> res;
    res.version(req.version());
    res.keep_alive(false);
    res.set(http::field::server, "ess_lab");
    std::string target(req.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (req.method() != http::verb::get && req.method() != http::verb::head) {
      res.result(http::status::method_not_allowed);
      res.body() = "method not allowed\n";
    } else if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos) {
      res.result(http::status::bad_request);
      res.body() = "bad request\n";
    } else {
      std::string rel = target.substr(1);
      if (rel.empty() || rel.back() == '/') rel += "index.html";
      const bool have_ui = !opts.ui_dir.empty() && std::filesystem::is_directory(opts.ui_dir);
      const auto path = opts.ui_dir / rel;
      if (have_ui && std::filesystem::is_regular_file(path)) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        res.result(http::status::ok);
        res.set(http::field::content_type, mime_type(path));
        res.body() = ss.str();
      } else if (!have_ui && rel == "index.html") {
        res.result(http::status::ok);
        res.set(http::field::content_type, "text/html; charset=utf-8");
        res.body() = kPlaceholder;
      } else {
        res.result(http::status::not_found);
        res.set(http::field::content_type, "text/plain");
        res.body() = "not found\n";
      }
    }
    res.prepare_payload();
    if (req.method() == http::verb::head) res.body().clear();
    return res;
  }

  void serve_websocket(tcp::socket socket, const http::request<http::string_body>& req) {
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.accept(req);
    ws.text(true);
    {
      std::lock_guard lock(session_mutex);
      const auto hello = session.hello();
      ws.write(asio::buffer(hello));
    }
    beast::flat_buffer buf;
    while (!stopping) {
      buf.clear();
      ws.read(buf);
      const auto text = beast::buffers_to_string(buf.data());
      std::vector<std::string> replies;
      {
        std::lock_guard lock(session_mutex);
        replies = session.handle(text);
      }
      for (const auto& r : replies) ws.write(asio::buffer(r));
    }
  }

  void handle_connection(tcp::socket socket) {
    const int fd = socket.native_handle();
    {
      std::lock_guard lock(conn_mutex);
      open_fds.insert(fd);
    }
    try {
      beast::flat_buffer buf;
      http::request<http::string_body> req;
      http::read(socket, buf, req);
      if (websocket::is_upgrade(req)) {
        std::string target(req.target());
        if (target == "/ws") {
          serve_websocket(std::move(socket), req);
        } else {
          http::response<http::string_body> res{http::status::not_found, req.version()};
          res.body() = "websocket endpoint is /ws\n";
          res.prepare_payload();
          http::write(socket, res);
        }
      } else {
        auto res = static_response(req);
        http::write(socket, res);
        beast::error_code ec;
        socket.shutdown(tcp::socket::shutdown_send, ec);
      }
    } catch (const beast::system_error& e) {
      if (e.code() != websocket::error::closed && e.code() != http::error::end_of_stream && !stopping) {
        std::cerr << "serve: connection error: " << e.code().message() << "\n";
      }
    } catch (const std::exception& e) {
      if (!stopping) std::cerr << "serve: connection error: " << e.what() << "\n";
    }
    std::lock_guard lock(conn_mutex);
    open_fds.erase(fd);
  }
};

WalkthroughServer::WalkthroughServer(WalkthroughSession& session, ServerOptions opts)
    : impl_(std::make_unique<Impl>(session, std::move(opts))) {}

WalkthroughServer::~WalkthroughServer() {
  stop();
  for (auto& t : impl_->threads) {
    if (t.joinable()) t.join();
  }
}

unsigned short WalkthroughServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WalkthroughServer::run() {
  auto& im = *impl_;
  while (!im.stopping) {
    tcp::socket socket(im.ioc);
    beast::error_code ec;
    im.acceptor.accept(socket, ec);
    if (im.stopping) break;
    if (ec) continue;
    im.threads.emplace_back([&im, s = std::move(socket)]() mutable { im.handle_connection(std::move(s)); });
  }
  {
    std::lock_guard lock(im.conn_mutex);
    for (int fd : im.open_fds) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& t : im.threads) {
    if (t.joinable()) t.join();
  }
  im.threads.clear();
}

void WalkthroughServer::stop() {
  auto& im = *impl_;
  if (im.stopping.exchange(true)) return;
  try {
    asio::io_context ioc;
    tcp::socket s(ioc);
    auto addr = im.acceptor.local_endpoint().address();
    if (addr.is_unspecified()) addr = asio::ip::make_address("127.0.0.1");
    s.connect(tcp::endpoint(addr, im.acceptor.local_endpoint().port()));
  } catch (const std::exception&) {
  }
}

}  // namespace ess::app
