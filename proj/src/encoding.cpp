#include "skillprobe/encoding.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <charconv>
#include <vector>

namespace skillprobe {

std::string base64_encode(std::string_view data) {
  if (data.empty()) return {};
  std::string out;
  out.resize(((data.size() + 2) / 3) * 4);
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(data.data()),
                                static_cast<int>(data.size()));
  out.resize(static_cast<size_t>(n));
  return out;
}

std::optional<std::string> base64_decode(std::string_view text) {
  if (text.empty()) return std::string{};
  if (text.size() % 4 != 0) return std::nullopt;
  for (char c : text) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/' || c == '=')) {
      return std::nullopt;
    }
  }
  // '=' is only legal as one or two trailing pad characters.
  const size_t first_pad = text.find('=');
  const size_t padding = first_pad == std::string_view::npos ? 0 : text.size() - first_pad;
  if (padding > 2) return std::nullopt;
  for (size_t i = first_pad; i < text.size() && first_pad != std::string_view::npos; ++i) {
    if (text[i] != '=') return std::nullopt;
  }
  std::vector<unsigned char> buf(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(buf.data(),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0 || static_cast<size_t>(n) < padding) return std::nullopt;
  return std::string(reinterpret_cast<char*>(buf.data()),
                     static_cast<size_t>(n) - padding);
}

std::optional<ParsedUrl> parse_url(std::string_view url) {
  ParsedUrl out;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) return std::nullopt;
  out.scheme = std::string(url.substr(0, scheme_end));
  for (char& c : out.scheme) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  std::string_view rest = url.substr(scheme_end + 3);
  const auto path_start = rest.find('/');
  std::string_view authority = rest.substr(0, path_start);
  out.path = path_start == std::string_view::npos ? "/" : std::string(rest.substr(path_start));

  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    std::string_view port_text = authority.substr(colon + 1);
    int port = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    // Port 0 is legal syntax here: testbed locators carry it as a
    // placeholder until the chain server binds.
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 ||
        port > 65535) {
      return std::nullopt;
    }
    out.port = port;
    authority = authority.substr(0, colon);
  } else {
    if (out.scheme == "https") out.port = 443;
    else if (out.scheme == "http") out.port = 80;
  }
  if (authority.empty()) return std::nullopt;
  out.host = std::string(authority);
  return out;
}

}  // namespace skillprobe
