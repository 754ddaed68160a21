#pragma once

#include <atomic>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "ess/walkthrough.hpp"

namespace ess::app {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  std::filesystem::path ui_dir;  // empty or missing: built-in placeholder page
};

// HTTP static files plus the walkthrough WebSocket at /ws. Each connection
// runs on its own thread; messages touch the shared session under one lock,
// so they are applied strictly in arrival order.
class WalkthroughServer {
 public:
  WalkthroughServer(WalkthroughSession& session, ServerOptions opts);
  ~WalkthroughServer();
  WalkthroughServer(const WalkthroughServer&) = delete;
  WalkthroughServer& operator=(const WalkthroughServer&) = delete;

  unsigned short port() const;
  // Blocks until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Content type for a static file name.
std::string mime_type(const std::filesystem::path& p);

}  // namespace ess::app
