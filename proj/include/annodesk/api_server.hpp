#pragma once

// HTTP front: JSON API under /api, static pages under /, /healthz.
// Every API call carries the magic-link token as `?token=`.

#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>

#include "annodesk/static_assets.hpp"
#include "annodesk/store.hpp"

#ifndef ANNODESK_VERSION
#define ANNODESK_VERSION "dev"
#endif

namespace annodesk {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8000;  // 0 picks a free port
  std::size_t threads = 64;
  std::string static_dir;  // optional directory overriding the built-in pages
};

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse:
    case ErrorKind::input:
    case ErrorKind::unsupported_mode: return 400;
    case ErrorKind::authorization: return 403;
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict:
    case ErrorKind::state: return 409;
    case ErrorKind::validation:
    case ErrorKind::evaluation: return 422;
    case ErrorKind::configuration:
    case ErrorKind::io: return 500;
  }
  return 500;
}

class ApiServer {
 public:
  ApiServer(Registry& registry, ServerOptions opts = {})
      : registry_(registry), opts_(std::move(opts)) {
    const std::size_t threads = opts_.threads;
    http_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    http_.set_keep_alive_max_count(100);
    routes();
  }

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the listening socket; returns the bound port or throws.
  int bind() {
    if (opts_.port == 0) {
      port_ = http_.bind_to_any_port(opts_.host);
    } else {
      port_ = http_.bind_to_port(opts_.host, opts_.port) ? opts_.port : -1;
    }
    if (port_ < 0)
      throw Error(ErrorKind::configuration,
                  "cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
    return port_;
  }

  /// Serves until stop(). Call bind() first.
  void serve() { http_.listen_after_bind(); }

  /// bind() plus serve() on a background thread.
  int start() {
    const int port = bind();
    thread_ = std::thread([this] { serve(); });
    http_.wait_until_ready();
    return port;
  }

  void stop() {
    http_.stop();
    if (thread_.joinable()) thread_.join();
  }

  ~ApiServer() { stop(); }

  int port() const { return port_; }
  std::string base_url() const { return "http://" + opts_.host + ":" + std::to_string(port_); }
  httplib::Server& http() { return http_; }

 private:
  static void no_cache(httplib::Response& res) {
    res.set_header("Cache-Control", "no-store, no-cache, must-revalidate");
    res.set_header("Pragma", "no-cache");
    res.set_header("Expires", "0");
  }

  static void send_json(httplib::Response& res, const Json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json; charset=utf-8");
  }

  static void send_error(httplib::Response& res, ErrorKind kind, const std::string& message,
                         int status) {
    Json j;
    j["error"]["kind"] = to_string(kind);
    j["error"]["message"] = message;
    send_json(res, j, status);
  }

  /// Token lookup; unknown tokens trigger at most one directory rescan per second.
  Registry::Resolved authenticate(const httplib::Request& req) {
    const std::string token = req.get_param_value("token");
    if (token.empty()) throw Error(ErrorKind::authorization, "missing token");
    if (auto r = registry_.resolve(token)) return *r;
    {
      std::lock_guard lock(refresh_mutex_);
      const auto now = std::chrono::steady_clock::now();
      if (now - last_refresh_ >= std::chrono::seconds(1)) {
        last_refresh_ = now;
        try {
          registry_.refresh();
        } catch (const std::exception&) {
        }
      }
    }
    if (auto r = registry_.resolve(token)) return *r;
    throw Error(ErrorKind::authorization, "unknown token");
  }

  static void require_role(const Registry::Resolved& who, Role role) {
    if (who.role != role)
      throw Error(ErrorKind::authorization, std::string("this endpoint needs ") +
                                                (role == Role::manager ? "a manager" : "an annotator") +
                                                " token");
  }

  static Json body_json(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    try {
      return Json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::parse, std::string("request body is not valid JSON: ") + e.what());
    }
  }

  template <typename F>
  httplib::Server::Handler api(F&& f) {
    return [this, f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
      no_cache(res);
      try {
        f(req, res);
      } catch (const Error& e) {
        int status = http_status(e.kind());
        if (e.kind() == ErrorKind::authorization &&
            (req.get_param_value("token").empty() || !registry_.resolve(req.get_param_value("token"))))
          status = 401;
        send_error(res, e.kind(), e.what(), status);
      } catch (const std::exception& e) {
        send_error(res, ErrorKind::io, e.what(), 500);
      }
    };
  }

  void page(const std::string& path, std::string_view html) {
    http_.Get(path, [html](const httplib::Request&, httplib::Response& res) {
      no_cache(res);
      res.set_content(std::string(html), "text/html; charset=utf-8");
    });
  }

  static std::size_t index_param(const Json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_number_unsigned())
      throw Error(ErrorKind::validation, std::string("'") + key + "' must be a non-negative integer");
    return body[key].get<std::size_t>();
  }

  static std::string string_param(const Json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string())
      throw Error(ErrorKind::validation, std::string("'") + key + "' must be a string");
    return body[key].get<std::string>();
  }

  void routes() {
    if (!opts_.static_dir.empty()) http_.set_mount_point("/", opts_.static_dir);
    page("/", assets::kIndexHtml);
    page("/index.html", assets::kIndexHtml);
    page("/annotate.html", assets::kAnnotateHtml);
    page("/dashboard.html", assets::kDashboardHtml);

    http_.Get("/healthz", api([this](const httplib::Request&, httplib::Response& res) {
      Json j;
      j["status"] = "ok";
      j["version"] = ANNODESK_VERSION;
      j["campaigns"] = registry_.campaigns().size();
      send_json(res, j);
    }));

    http_.Get("/api/whoami", api([this](const httplib::Request& req, httplib::Response& res) {
      const auto who = authenticate(req);
      Json j;
      j["campaign_id"] = who.campaign->id();
      j["user_id"] = who.user_id;
      j["role"] = to_string(who.role);
      send_json(res, j);
    }));

    http_.Get("/api/next-item", api([this](const httplib::Request& req, httplib::Response& res) {
      const auto who = authenticate(req);
      require_role(who, Role::annotator);
      if (req.has_param("document_index")) {
        std::size_t doc = 0;
        try {
          doc = std::stoul(req.get_param_value("document_index"));
        } catch (const std::exception&) {
          throw Error(ErrorKind::validation, "document_index must be a number");
        }
        send_json(res, who.campaign->redo_item(who.user_id, doc));
        return;
      }
      send_json(res, who.campaign->next_item(who.user_id));
    }));

    http_.Post("/api/submit", api([this](const httplib::Request& req, httplib::Response& res) {
      const auto who = authenticate(req);
      require_role(who, Role::annotator);
      send_json(res, who.campaign->submit(who.user_id, body_json(req)));
    }));

    http_.Get("/api/dashboard", api([this](const httplib::Request& req, httplib::Response& res) {
      const auto who = authenticate(req);
      require_role(who, Role::manager);
      send_json(res, who.campaign->dashboard());
    }));

    http_.Post("/api/reveal-results", api([this](const httplib::Request& req, httplib::Response& res) {
      const auto who = authenticate(req);
      require_role(who, Role::manager);
      double alpha = kDefaultAlpha;
      const Json body = body_json(req);
      if (body.contains("alpha")) {
        if (!body["alpha"].is_number()) throw Error(ErrorKind::validation, "alpha must be a number");
        alpha = body["alpha"].get<double>();
        if (!(alpha > 0 && alpha < 1)) throw Error(ErrorKind::validation, "alpha must lie in (0, 1)");
      }
      send_json(res, who.campaign->reveal(who.user_id, alpha));
    }));

    http_.Post("/api/redistribute", api([this](const httplib::Request& req, httplib::Response& res) {
      const auto who = authenticate(req);
      require_role(who, Role::manager);
      const Json body = body_json(req);
      send_json(res, who.campaign->redistribute(who.user_id, string_param(body, "from_user"),
                                                string_param(body, "to_user"),
                                                index_param(body, "first"),
                                                index_param(body, "last")));
    }));

    http_.Get("/api/export", api([this](const httplib::Request& req, httplib::Response& res) {
      const auto who = authenticate(req);
      require_role(who, Role::manager);
      res.status = 200;
      res.set_content(who.campaign->export_annotations().dump(2) + "\n",
                      "application/json; charset=utf-8");
      res.set_header("Content-Disposition",
                     "attachment; filename=\"" + who.campaign->id() + ".json\"");
    }));
  }

  Registry& registry_;
  ServerOptions opts_;
  httplib::Server http_;
  std::thread thread_;
  int port_ = -1;
  std::mutex refresh_mutex_;
  std::chrono::steady_clock::time_point last_refresh_{};
};

}  // namespace annodesk
