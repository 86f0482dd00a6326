#include "leitsatz/http.hpp"

#include <httplib.h>

#include <cstdlib>

#include "leitsatz/error.hpp"

namespace leitsatz {

namespace {

struct SplitUrl {
  std::string origin;
  std::string prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

nlohmann::json post_json(const Endpoint& endpoint, std::string_view path,
                         const nlohmann::json& body) {
  if (endpoint.base_url.empty()) throw ConfigError("endpoint base_url is not configured");
  const auto url = split_url(endpoint.base_url);
  httplib::Client client(url.origin);
  const auto timeout = static_cast<time_t>(endpoint.timeout_seconds);
  const auto timeout_usec =
      static_cast<time_t>((endpoint.timeout_seconds - static_cast<double>(timeout)) * 1e6);
  client.set_connection_timeout(timeout, timeout_usec);
  client.set_read_timeout(timeout, timeout_usec);
  client.set_write_timeout(timeout, timeout_usec);

  httplib::Headers headers;
  if (!endpoint.auth_header.empty() && !endpoint.auth_env.empty()) {
    if (const char* value = std::getenv(endpoint.auth_env.c_str())) {
      headers.emplace(endpoint.auth_header, value);
    }
  }

  const std::string target = url.prefix + std::string(path);
  auto res = client.Post(target, headers, body.dump(), "application/json");
  if (!res) {
    throw ServiceError("POST " + endpoint.base_url + std::string(path) +
                           " failed: " + httplib::to_string(res.error()),
                       true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw ServiceError("POST " + target + " returned HTTP " + std::to_string(res->status), true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw ServiceError("POST " + target + " returned HTTP " + std::to_string(res->status) +
                           ": " + res->body,
                       false);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError("POST " + target + " returned invalid JSON: " + e.what(), false);
  }
}

}  // namespace leitsatz
