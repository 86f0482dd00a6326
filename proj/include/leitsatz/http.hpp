#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace leitsatz {

/// Where a remote JSON service lives and how to authenticate against it.
struct Endpoint {
  std::string base_url;     // scheme://host[:port][/prefix]
  std::string auth_header;  // header name, empty for none
  std::string auth_env;     // environment variable holding the header value
  double timeout_seconds = 60.0;
};

/// POSTs `body` as JSON to base_url + path and parses the JSON reply.
/// Connection failures, 429 and 5xx raise a retryable ServiceError; other
/// non-2xx statuses and unparseable replies raise a non-retryable one.
nlohmann::json post_json(const Endpoint& endpoint, std::string_view path,
                         const nlohmann::json& body);

}  // namespace leitsatz
