#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace skillprobe {

std::string base64_encode(std::string_view data);
// Strict decode: length must be a multiple of 4 with standard padding.
std::optional<std::string> base64_decode(std::string_view text);

struct ParsedUrl {
  std::string scheme;
  std::string host;
  int port = 0;  // resolved from scheme default when absent
  std::string path;  // always starts with '/'
};

std::optional<ParsedUrl> parse_url(std::string_view url);

}  // namespace skillprobe
