#include "skillprobe/envelope.hpp"

#include <cctype>

#include <json.hpp>

namespace skillprobe {

using nlohmann::json;

const std::array<std::string, 6>& default_intents() {
  static const std::array<std::string, 6> kIntents = {
      "LaunchRequest",   "StopIntent", "CancelIntent",
      "FallbackIntent",  "HelpIntent", "NavigateHomeIntent",
  };
  return kIntents;
}

bool is_default_intent(std::string_view name) {
  for (const auto& intent : default_intents()) {
    if (intent == name) return true;
  }
  return false;
}

bool is_valid_intent_name(std::string_view name) {
  if (name.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(name[0]))) return false;
  for (char c : name.substr(1)) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

RequestEnvelope build_request(ApplicationId app_id, std::string intent,
                              std::vector<Slot> slots, Instant timestamp,
                              std::string request_id) {
  if (!is_valid_intent_name(intent)) throw InvalidIntentName(intent);
  for (const auto& slot : slots) {
    if (slot.name.empty()) throw InvalidSlot("slot name must be non-empty");
  }
  RequestEnvelope env;
  env.version = "1.0";
  env.application_id = std::move(app_id);
  env.request_id = std::move(request_id);
  env.timestamp = timestamp;
  env.intent = std::move(intent);
  env.slots = std::move(slots);
  return env;
}

std::string serialize(const RequestEnvelope& env) {
  json slots = json::array();
  for (const auto& slot : env.slots) {
    slots.push_back({{"name", slot.name}, {"value", slot.value}});
  }
  // nlohmann objects keep keys sorted, so dump() is canonical.
  json body = {
      {"applicationId", env.application_id.value},
      {"intent", env.intent},
      {"requestId", env.request_id},
      {"slots", std::move(slots)},
      {"timestamp", format_rfc3339(env.timestamp)},
      {"version", env.version},
  };
  return body.dump();
}

std::string serialize(const ResponseEnvelope& env) {
  json response = {
      {"shouldEndSession", env.should_end_session},
      {"speechText", env.speech_text},
  };
  if (!env.debug_query.empty()) response["debugQuery"] = env.debug_query;
  json body = {
      {"response", std::move(response)},
      {"version", env.version},
  };
  return body.dump();
}

namespace {

json parse_object(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("body is not an object", 0);
  return doc;
}

const json& require_key(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ParseError(std::string("missing key: ") + key, 0);
  return *it;
}

std::string require_string(const json& doc, const char* key) {
  const json& v = require_key(doc, key);
  if (!v.is_string()) throw ParseError(std::string(key) + " is not a string", 0);
  return v.get<std::string>();
}

}  // namespace

RequestEnvelope parse_request(std::string_view bytes) {
  json doc = parse_object(bytes);
  static constexpr const char* kKeys[] = {"applicationId", "intent", "requestId",
                                          "slots", "timestamp", "version"};
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw ParseError("unknown key: " + key, 0);
  }

  RequestEnvelope env;
  env.version = require_string(doc, "version");
  env.application_id.value = require_string(doc, "applicationId");
  if (env.application_id.value.empty()) throw ParseError("applicationId is empty", 0);
  env.request_id = require_string(doc, "requestId");
  env.intent = require_string(doc, "intent");
  if (!is_valid_intent_name(env.intent)) throw ParseError("invalid intent name", 0);

  const std::string ts = require_string(doc, "timestamp");
  auto parsed = parse_rfc3339(ts);
  if (!parsed) throw ParseError("timestamp is not RFC 3339 UTC: " + ts, 0);
  env.timestamp = *parsed;

  const json& slots = require_key(doc, "slots");
  if (!slots.is_array()) throw ParseError("slots is not an array", 0);
  for (const json& s : slots) {
    if (!s.is_object()) throw ParseError("slot is not an object", 0);
    Slot slot;
    slot.name = require_string(s, "name");
    if (slot.name.empty()) throw ParseError("slot name is empty", 0);
    slot.value = require_string(s, "value");
    env.slots.push_back(std::move(slot));
  }
  return env;
}

ResponseEnvelope parse_response(std::string_view bytes) {
  json doc = parse_object(bytes);
  ResponseEnvelope env;
  env.version = require_string(doc, "version");
  const json& response = require_key(doc, "response");
  if (!response.is_object()) throw ParseError("response is not an object", 0);
  auto end = response.find("shouldEndSession");
  if (end == response.end() || !end->is_boolean()) {
    throw ParseError("response.shouldEndSession missing", 0);
  }
  env.should_end_session = end->get<bool>();
  env.speech_text = require_string(response, "speechText");
  if (auto it = response.find("debugQuery"); it != response.end() && it->is_string()) {
    env.debug_query = it->get<std::string>();
  }
  return env;
}

bool is_valid_skill_response(std::string_view body) {
  json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  return doc.is_object() && doc.contains("version") && doc.contains("response");
}

}  // namespace skillprobe
