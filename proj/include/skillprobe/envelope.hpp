#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "skillprobe/clock.hpp"

namespace skillprobe {

// The identifier of the skill a request is intended for. Inserted by the
// cloud before signing, so an attacker can replay it but never rewrite it.
struct ApplicationId {
  std::string value;

  friend bool operator==(const ApplicationId&, const ApplicationId&) = default;
};

struct Slot {
  std::string name;
  std::string value;

  friend bool operator==(const Slot&, const Slot&) = default;
};

struct RequestEnvelope {
  std::string version = "1.0";
  ApplicationId application_id;
  std::string request_id;
  Instant timestamp;
  std::string intent;
  std::vector<Slot> slots;

  friend bool operator==(const RequestEnvelope&, const RequestEnvelope&) = default;
};

struct ResponseEnvelope {
  std::string version = "1.0";
  std::string speech_text;
  bool should_end_session = false;
  // Set only by the injection demo handler: the query string the endpoint
  // composed from the slot value, exposed so delivery of an unescaped
  // payload is observable.
  std::string debug_query;

  friend bool operator==(const ResponseEnvelope&, const ResponseEnvelope&) = default;
};

class InvalidIntentName : public std::invalid_argument {
 public:
  explicit InvalidIntentName(const std::string& name)
      : std::invalid_argument("invalid intent name: " + name) {}
};

class InvalidSlot : public std::invalid_argument {
 public:
  explicit InvalidSlot(const std::string& what) : std::invalid_argument(what) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// The six built-in intents every skill must handle, in fixed order.
const std::array<std::string, 6>& default_intents();
bool is_default_intent(std::string_view name);
// Default name or custom identifier: [A-Za-z][A-Za-z0-9_]*
bool is_valid_intent_name(std::string_view name);

// Throws InvalidIntentName / InvalidSlot. Version is always "1.0".
RequestEnvelope build_request(ApplicationId app_id, std::string intent,
                              std::vector<Slot> slots, Instant timestamp,
                              std::string request_id);

// Canonical bytes: sorted keys, no insignificant whitespace. The signature
// covers exactly these bytes, so serialization must be byte-deterministic.
std::string serialize(const RequestEnvelope& env);
std::string serialize(const ResponseEnvelope& env);

// Throws ParseError (with byte position where known).
RequestEnvelope parse_request(std::string_view bytes);
ResponseEnvelope parse_response(std::string_view bytes);

// The scanner's sole positive-detection criterion: body is a JSON object
// with top-level "version" and "response" keys.
bool is_valid_skill_response(std::string_view body);

}  // namespace skillprobe
