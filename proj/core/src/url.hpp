#pragma once

#include <string>

#include "rox/error.hpp"

namespace rox::detail {

struct UrlTarget {
  std::string origin;  // scheme://host[:port]
  std::string path;    // always starts with '/'
};

inline UrlTarget parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::kConfiguration, "endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace rox::detail
