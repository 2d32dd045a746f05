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

// HTTP JSON API over EvalService.
//
//   POST /sessions                          {"case_ids"?, "seed"?} -> session summary
//   GET  /sessions/{id}/cases/{n}           -> case view (n from 1)
//   POST /sessions/{id}/cases/{n}/submission {"abnormal", "slots": [...]} -> ack
//   GET  /results?dataset=&abnormal=&rater=&session=&format=json|text
//   GET  /images/...                        static scan images
//
// Raters authenticate with "Authorization: Bearer <rater token>"; the token is
// the rater id. /results needs the admin token. Errors are
// {"error": <class>, "message"}.

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "core/error.hpp"
#include "core/eval_service.hpp"

namespace httplib {
class Server;
}

namespace cxr {

struct EvalServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::string admin_token;
  std::filesystem::path image_root;  // served under /images when set
};

class EvalHttpServer {
 public:
  EvalHttpServer(EvalService& service, EvalServerOptions options);
  ~EvalHttpServer();
  EvalHttpServer(const EvalHttpServer&) = delete;
  EvalHttpServer& operator=(const EvalHttpServer&) = delete;

  // Binds the socket and returns the bound port; throws kIo on failure.
  int bind();
  // Serves until stop(); bind() must have been called.
  void serve();
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  EvalService& service_;
  EvalServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  int port_ = 0;
};

int http_status_for(ErrorCode code);

}  // namespace cxr
