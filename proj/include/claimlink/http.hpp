#pragma once

// Minimal JSON-over-HTTP client used by the remote embedding, scorer and
// generation adapters.

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "error.hpp"
#include "retry.hpp"
#include "url.hpp"

namespace claimlink {

class JsonHttpClient {
public:
  explicit JsonHttpClient(const std::string& url, int timeout_seconds = 60)
      : url_(parse_url(url)), timeout_seconds_(timeout_seconds) {}

  const Url& url() const { return url_; }

  // One POST; throws RemoteError on transport failure, non-2xx status or a
  // body that is not JSON.
  nlohmann::json post(const nlohmann::json& body) const {
    httplib::Client client(url_.host, url_.port);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    client.set_write_timeout(timeout_seconds_, 0);
    auto res = client.Post(url_.path, body.dump(), "application/json");
    if (!res) {
      throw RemoteError("POST " + url_.host + ":" + std::to_string(url_.port) + url_.path +
                        " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw RemoteError("POST " + url_.path + " returned HTTP " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw RemoteError(std::string("response is not JSON: ") + e.what());
    }
  }

private:
  Url url_;
  int timeout_seconds_;
};

}  // namespace claimlink
