#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace skillprobe {

// A UTC instant at second resolution. Wire form is RFC 3339
// ("2019-09-27T10:00:00Z"); sub-second precision is never carried.
struct Instant {
  std::int64_t epoch_seconds = 0;

  friend auto operator<=>(const Instant&, const Instant&) = default;

  Instant operator+(std::int64_t seconds) const { return {epoch_seconds + seconds}; }
  Instant operator-(std::int64_t seconds) const { return {epoch_seconds - seconds}; }
  std::int64_t operator-(Instant other) const { return epoch_seconds - other.epoch_seconds; }
};

// Strict: exactly "YYYY-MM-DDThh:mm:ssZ" with a real calendar date.
// Anything else (lowercase separators, offsets, fractional seconds,
// non-normalized dates) is rejected so that distinct wire strings never
// alias to the same instant.
std::optional<Instant> parse_rfc3339(std::string_view text);
std::string format_rfc3339(Instant t);

Instant now_utc();

using Clock = std::function<Instant()>;

}  // namespace skillprobe
