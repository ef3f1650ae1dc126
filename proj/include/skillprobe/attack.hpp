#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "skillprobe/cloudsim.hpp"

namespace skillprobe {

// A signed request captured from the cloud's text interface. The bytes are
// immutable after capture; resends are byte-identical.
struct RecordedRequest {
  SignedMessage message;
  Instant captured_at;
  ApplicationId source_application_id;
};

struct ReplayResult {
  std::string victim_url;
  bool accepted = false;
  int status = 0;
  std::string response_body;
  std::chrono::milliseconds latency{0};
  TransportError transport = TransportError::None;
};

class DemoPreconditionFailed : public std::runtime_error {
 public:
  explicit DemoPreconditionFailed(const std::string& what) : std::runtime_error(what) {}
};

// Step 1: a fresh skill whose intent schema mimics the victim's, under a
// new application-ID.
const SkillRegistration& register_mock_skill(
    CloudSim& cloud,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& victim_schema,
    const std::string& collector_url = "https://attacker-collector.invalid/alexa");

// Steps 2-4: type the command line into the text interface and record the
// signed request it produces.
RecordedRequest capture(CloudSim& cloud, const SkillRegistration& attacker,
                        const std::string& intent, std::vector<Slot> slots, Instant now);

// Step 5: send the identical bytes `times` times. Transport failures are
// recorded per attempt, never thrown.
std::vector<ReplayResult> replay(const RecordedRequest& recorded, const std::string& victim_url,
                                 const TlsTrust& trust, int times);

struct InjectionDemoReport {
  std::string payload;
  ReplayResult replay;
  std::string composed_query;  // from the victim's debug field
  std::string speech_text;
};

// Captures a custom-intent request carrying the payload as its slot value,
// replays it at the victim, and reports what came back. Throws
// DemoPreconditionFailed when the victim rejects the replay.
InjectionDemoReport run_injection_demo(CloudSim& cloud, const SkillRegistration& attacker,
                                       const std::string& victim_url, const TlsTrust& trust,
                                       const std::string& payload, Instant now);

// Binary-safe container for recorded requests (see docs).
std::string serialize_recorded_request(const RecordedRequest& recorded);
RecordedRequest parse_recorded_request(std::string_view bytes);  // throws ParseError

}  // namespace skillprobe
