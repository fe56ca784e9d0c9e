#pragma once

#include <string>

#include "error.hpp"

namespace claimlink {

struct Url {
  std::string scheme;
  std::string host;
  int port = 80;
  std::string path = "/";
};

inline Url parse_url(const std::string& text) {
  Url u;
  auto scheme_end = text.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("invalid URL '" + text + "'");
  u.scheme = text.substr(0, scheme_end);
  if (u.scheme != "http") {
    throw ValidationError("unsupported URL scheme '" + u.scheme + "' (only http is built in)");
  }
  auto rest = text.substr(scheme_end + 3);
  auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  if (slash != std::string::npos) u.path = rest.substr(slash);
  auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    u.host = authority.substr(0, colon);
    try {
      u.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("invalid port in URL '" + text + "'");
    }
  } else {
    u.host = authority;
  }
  if (u.host.empty()) throw ValidationError("invalid URL '" + text + "'");
  return u;
}

}  // namespace claimlink
