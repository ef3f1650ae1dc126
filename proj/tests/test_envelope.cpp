#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "skillprobe/envelope.hpp"
#include "test_support.hpp"

using namespace skillprobe;

TEST_CASE("default intents are the six built-ins in fixed order") {
  const auto& intents = default_intents();
  REQUIRE(intents.size() == 6);
  CHECK(intents[0] == "LaunchRequest");
  CHECK(intents[1] == "StopIntent");
  CHECK(intents[2] == "CancelIntent");
  CHECK(intents[3] == "FallbackIntent");
  CHECK(intents[4] == "HelpIntent");
  CHECK(intents[5] == "NavigateHomeIntent");

  std::set<std::string> unique(intents.begin(), intents.end());
  CHECK(unique.size() == 6);

  // Constant across calls.
  CHECK(default_intents() == intents);
}

TEST_CASE("build_request copies fields and pins version 1.0") {
  const Instant t0 = *parse_rfc3339("2019-09-27T10:00:00Z");
  RequestEnvelope env =
      build_request(ApplicationId{"appA"}, "LaunchRequest", {}, t0, "r1");
  CHECK(env.version == "1.0");
  CHECK(env.application_id.value == "appA");
  CHECK(env.intent == "LaunchRequest");
  CHECK(env.request_id == "r1");
  CHECK(env.timestamp == t0);
  CHECK(env.slots.empty());

  RequestEnvelope custom = build_request(ApplicationId{"appA"}, "MyCountIntent",
                                         {{"num", "7"}}, t0, "r2");
  REQUIRE(custom.slots.size() == 1);
  CHECK(custom.slots[0].name == "num");
  CHECK(custom.slots[0].value == "7");
}

TEST_CASE("build_request rejects bad intent names and empty slot names") {
  const Instant t0 = *parse_rfc3339("2019-09-27T10:00:00Z");
  CHECK_THROWS_AS(build_request(ApplicationId{"appA"}, "9bad", {}, t0, "r3"),
                  InvalidIntentName);
  CHECK_THROWS_AS(build_request(ApplicationId{"appA"}, "", {}, t0, "r3"), InvalidIntentName);
  CHECK_THROWS_AS(build_request(ApplicationId{"appA"}, "has space", {}, t0, "r3"),
                  InvalidIntentName);
  CHECK_THROWS_AS(
      build_request(ApplicationId{"appA"}, "LaunchRequest", {{"", "x"}}, t0, "r3"),
      InvalidSlot);
}

TEST_CASE("golden wire fixtures are byte-exact") {
  // Frozen copies of the fixtures in docs/wire-format.md.
  RequestEnvelope env = test::sample_envelope();
  CHECK(serialize(env) ==
        R"({"applicationId":"amzn1.ask.skill.11111111-2222-3333-4444-555555555555",)"
        R"("intent":"LaunchRequest","requestId":"req-000001","slots":[],)"
        R"("timestamp":"2019-09-27T10:00:00Z","version":"1.0"})");

  ResponseEnvelope res;
  res.speech_text = "Welcome to the test skill.";
  res.should_end_session = false;
  CHECK(serialize(res) ==
        R"({"response":{"shouldEndSession":false,"speechText":"Welcome to the test skill."},)"
        R"("version":"1.0"})");
}

namespace {

RequestEnvelope random_envelope(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  std::string app = "amzn1.ask.skill.";
  for (int i = 0; i < 8; ++i) app += static_cast<char>('a' + pick(0, 25));
  std::string intent;
  if (pick(0, 1) == 0) {
    intent = default_intents()[static_cast<std::size_t>(pick(0, 5))];
  } else {
    intent = "Custom";
    for (int i = 0; i < 5; ++i) intent += static_cast<char>('A' + pick(0, 25));
  }
  std::vector<Slot> slots;
  const int n_slots = pick(0, 3);
  for (int s = 0; s < n_slots; ++s) {
    std::string value;
    const int len = pick(0, 12);
    for (int i = 0; i < len; ++i) value += static_cast<char>(pick(32, 126));
    slots.push_back({"slot" + std::to_string(s), value});
  }
  const Instant ts{1569578400 + pick(0, 2000000)};
  return build_request(ApplicationId{app}, intent, std::move(slots), ts,
                       "req-" + std::to_string(pick(0, 999999)));
}

}  // namespace

TEST_CASE("serialize/parse round-trips and is canonical") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 250; ++i) {
    RequestEnvelope env = random_envelope(rng);
    const std::string bytes = serialize(env);
    CHECK(serialize(env) == bytes);  // deterministic
    RequestEnvelope back = parse_request(bytes);
    CHECK(back == env);
    CHECK(serialize(back) == bytes);  // canonical
  }
}

TEST_CASE("parse rejects degenerate and malformed input") {
  CHECK_THROWS_AS(parse_request(""), ParseError);
  CHECK_THROWS_AS(parse_request("{"), ParseError);
  CHECK_THROWS_AS(parse_request("[]"), ParseError);
  CHECK_THROWS_AS(parse_request("{\"version\":\"1.0\"}"), ParseError);
  // unknown key
  std::string bytes = serialize(test::sample_envelope());
  bytes.insert(1, "\"extra\":1,");
  CHECK_THROWS_AS(parse_request(bytes), ParseError);
  // empty application id
  CHECK_THROWS_AS(
      parse_request(
          R"({"applicationId":"","intent":"LaunchRequest","requestId":"r",)"
          R"("slots":[],"timestamp":"2019-09-27T10:00:00Z","version":"1.0"})"),
      ParseError);
}

TEST_CASE("no single-byte flip inside the timestamp parses back equal") {
  RequestEnvelope env = test::sample_envelope();
  const std::string bytes = serialize(env);
  const std::string ts = format_rfc3339(env.timestamp);
  const std::size_t ts_pos = bytes.find(ts);
  REQUIRE(ts_pos != std::string::npos);

  int parse_errors = 0, changed = 0;
  for (std::size_t offset = 0; offset < ts.size(); ++offset) {
    for (int value = 0; value < 256; ++value) {
      const char flipped = static_cast<char>(value);
      if (bytes[ts_pos + offset] == flipped) continue;
      std::string mutated = bytes;
      mutated[ts_pos + offset] = flipped;
      try {
        RequestEnvelope back = parse_request(mutated);
        // A flip that still parses must never alias to the original time.
        CHECK(back.timestamp != env.timestamp);
        ++changed;
      } catch (const ParseError&) {
        ++parse_errors;
      }
    }
  }
  CHECK(parse_errors + changed == static_cast<int>(ts.size()) * 255);
}

TEST_CASE("rfc3339 parsing is strict") {
  CHECK(parse_rfc3339("2019-09-27T10:00:00Z"));
  CHECK(!parse_rfc3339("2019-09-27t10:00:00Z"));  // lowercase separator
  CHECK(!parse_rfc3339("2019-09-27T10:00:00z"));
  CHECK(!parse_rfc3339("2019-09-27 10:00:00Z"));
  CHECK(!parse_rfc3339("2019-09-27T10:00:00+00:00"));
  CHECK(!parse_rfc3339("2019-09-27T10:00:00.5Z"));
  CHECK(!parse_rfc3339("2019-13-01T10:00:00Z"));  // month 13
  CHECK(!parse_rfc3339("2019-02-29T10:00:00Z"));  // not a leap year
  CHECK(parse_rfc3339("2020-02-29T10:00:00Z"));   // leap year
  CHECK(!parse_rfc3339("2019-09-27T10:00:60Z"));  // second 60
  CHECK(!parse_rfc3339("2019-09-27T24:00:00Z"));

  // Lossless round-trip at second resolution.
  const Instant t = *parse_rfc3339("2020-02-29T23:59:59Z");
  CHECK(format_rfc3339(t) == "2020-02-29T23:59:59Z");
}

TEST_CASE("is_valid_skill_response requires exactly the version and response keys") {
  ResponseEnvelope res;
  res.speech_text = "hi";
  CHECK(is_valid_skill_response(serialize(res)));

  CHECK(!is_valid_skill_response("<html>404</html>"));
  CHECK(!is_valid_skill_response(""));
  CHECK(!is_valid_skill_response("null"));
  CHECK(!is_valid_skill_response("[1,2]"));

  // Enumerate key subsets of {version, response}: only the full set passes.
  CHECK(!is_valid_skill_response("{}"));
  CHECK(!is_valid_skill_response(R"({"version":"1.0"})"));
  CHECK(!is_valid_skill_response(R"({"response":{}})"));
  CHECK(is_valid_skill_response(R"({"response":{},"version":"1.0"})"));
}

TEST_CASE("response with debug query round-trips") {
  ResponseEnvelope res;
  res.speech_text = "Rows: bravo";
  res.debug_query = "SELECT val FROM t WHERE id = 2";
  ResponseEnvelope back = parse_response(serialize(res));
  CHECK(back == res);
  CHECK(is_valid_skill_response(serialize(res)));
}
