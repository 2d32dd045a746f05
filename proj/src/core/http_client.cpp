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

#include "core/http_client.hpp"

#include "core/error.hpp"
#include "httplib.h"

namespace cxr {

HttpResponse post_json(const std::string& base_url, const std::string& path,
                       const nlohmann::json& body, std::chrono::milliseconds timeout,
                       const std::map<std::string, std::string>& headers) {
  httplib::Client client(base_url);
  if (!client.is_valid()) fail(ErrorCode::kBackend, "invalid backend URL '" + base_url + "'");
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(path, h, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = base_url + path + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
      fail(ErrorCode::kTimeout, what);
    fail(ErrorCode::kBackend, what);
  }
  return HttpResponse{res->status, res->body};
}

}  // namespace cxr
