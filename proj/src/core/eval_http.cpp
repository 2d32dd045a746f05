// Copyright 2026 The CXR Agent Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "core/eval_http.hpp"

#include <random>

#include "core/error.hpp"
#include "core/util.hpp"
#include "httplib.h"

namespace cxr {

using nlohmann::json;

namespace {

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (h.rfind(kPrefix, 0) != 0) return {};
  return trim(h.substr(kPrefix.size()));
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& msg) {
  send_json(res, status, json{{"error", kind}, {"message", msg}});
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, http_status_for(e.code()), error_code_name(e.code()), e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, "format", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

std::string require_rater(const httplib::Request& req, httplib::Response& res) {
  auto token = bearer(req);
  if (token.empty()) send_error(res, 401, "unauthorized", "missing rater token");
  return token;
}

std::size_t parse_index(const std::string& s) {
  try {
    return static_cast<std::size_t>(std::stoul(s));
  } catch (const std::exception&) {
    fail(ErrorCode::kNotFound, "bad case index '" + s + "'");
  }
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kFormat:
      return 400;
    case ErrorCode::kValidation: return 422;
    default: return 500;
  }
}

EvalHttpServer::EvalHttpServer(EvalService& service, EvalServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

EvalHttpServer::~EvalHttpServer() { stop(); }

void EvalHttpServer::install_routes() {
  auto& srv = *server_;

  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto rater = require_rater(req, res);
    if (rater.empty()) return;
    guarded(res, [&] {
      const json body = req.body.empty() ? json::object() : json::parse(req.body);
      const auto ids = body.value("case_ids", std::vector<std::string>{});
      const std::uint64_t seed =
          body.contains("seed") ? body["seed"].get<std::uint64_t>() : std::random_device{}();
      const auto s = service_.create_session(ids, rater, seed);
      send_json(res, 201,
                json{{"session_id", s.session_id}, {"total", s.assignments.size()}});
    });
  });

  srv.Get(R"(/sessions/([^/]+)/cases/(\d+))",
          [this](const httplib::Request& req, httplib::Response& res) {
            const auto rater = require_rater(req, res);
            if (rater.empty()) return;
            guarded(res, [&] {
              const auto id = req.matches[1].str();
              if (service_.session(id).rater_id != rater) {
                send_error(res, 403, "forbidden", "session belongs to another rater");
                return;
              }
              send_json(res, 200, to_json(service_.case_view(id, parse_index(req.matches[2]))));
            });
          });

  srv.Post(R"(/sessions/([^/]+)/cases/(\d+)/submission)",
           [this](const httplib::Request& req, httplib::Response& res) {
             const auto rater = require_rater(req, res);
             if (rater.empty()) return;
             guarded(res, [&] {
               const auto id = req.matches[1].str();
               const auto session = service_.session(id);
               if (session.rater_id != rater) {
                 send_error(res, 403, "forbidden", "session belongs to another rater");
                 return;
               }
               const auto index = parse_index(req.matches[2]);
               if (index < 1 || index > session.assignments.size())
                 fail(ErrorCode::kNotFound, "session has no case " + std::to_string(index));
               Submission sub = submission_from_json(json::parse(req.body));
               sub.session_id = id;
               sub.case_id = session.assignments[index - 1].case_id;
               sub.rater_id = rater;
               const auto ack = service_.submit(std::move(sub));
               send_json(res, 200,
                         json{{"session_id", ack.session_id},
                              {"index", index},
                              {"submitted_at", ack.submitted_at},
                              {"replaced", ack.replaced}});
             });
           });

  srv.Get("/results", [this](const httplib::Request& req, httplib::Response& res) {
    if (options_.admin_token.empty() || bearer(req) != options_.admin_token) {
      send_error(res, 401, "unauthorized", "results need the admin token");
      return;
    }
    guarded(res, [&] {
      ResultsFilter f;
      if (req.has_param("dataset")) f.dataset = parse_dataset_tag(req.get_param_value("dataset"));
      if (req.has_param("abnormal")) {
        const auto v = req.get_param_value("abnormal");
        if (v != "true" && v != "false")
          fail(ErrorCode::kInvalidArgument, "abnormal must be true or false");
        f.abnormal = v == "true";
      }
      if (req.has_param("rater")) f.rater_id = req.get_param_value("rater");
      if (req.has_param("session")) f.session_id = req.get_param_value("session");
      const auto r = service_.export_results(f);
      if (req.get_param_value("format") == "text") {
        res.status = 200;
        res.set_content(results_table(r), "text/plain");
      } else {
        send_json(res, 200, to_json(r));
      }
    });
  });

  if (!options_.image_root.empty() && !srv.set_mount_point("/images", options_.image_root.string()))
    fail(ErrorCode::kIo, "image root '" + options_.image_root.string() + "' is not a directory");
}

int EvalHttpServer::bind() {
  if (options_.port == 0) port_ = server_->bind_to_any_port(options_.host);
  else port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
  if (port_ <= 0)
    fail(ErrorCode::kIo, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  return port_;
}

void EvalHttpServer::serve() {
  if (!server_->listen_after_bind()) fail(ErrorCode::kIo, "eval server stopped unexpectedly");
}

void EvalHttpServer::stop() {
  if (server_) server_->stop();
}

}  // namespace cxr
