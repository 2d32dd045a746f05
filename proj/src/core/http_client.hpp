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

#pragma once

#include <chrono>
#include <map>
#include <string>

#include "json.hpp"

namespace cxr {

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POSTs a JSON body. Transport failures throw kTimeout (connect/read
// timeout) or kBackend (anything else); HTTP error statuses are returned to
// the caller.
HttpResponse post_json(const std::string& base_url, const std::string& path,
                       const nlohmann::json& body, std::chrono::milliseconds timeout,
                       const std::map<std::string, std::string>& headers = {});

}  // namespace cxr
