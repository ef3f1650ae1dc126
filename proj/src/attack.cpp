#include "skillprobe/attack.hpp"

#include <cstring>

namespace skillprobe {

const SkillRegistration& register_mock_skill(
    CloudSim& cloud,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& victim_schema,
    const std::string& collector_url) {
  if (victim_schema.empty()) throw std::invalid_argument("victim schema is empty");
  return cloud.register_skill(cloud.fresh_application_id("mock"), collector_url,
                              victim_schema);
}

RecordedRequest capture(CloudSim& cloud, const SkillRegistration& attacker,
                        const std::string& intent, std::vector<Slot> slots, Instant now) {
  RecordedRequest recorded;
  recorded.message = cloud.text_interface(attacker, intent, std::move(slots), now);
  recorded.captured_at = now;
  recorded.source_application_id = attacker.application_id;
  return recorded;
}

std::vector<ReplayResult> replay(const RecordedRequest& recorded, const std::string& victim_url,
                                 const TlsTrust& trust, int times) {
  if (times < 1) throw std::invalid_argument("times must be >= 1");
  std::vector<ReplayResult> results;
  results.reserve(static_cast<std::size_t>(times));
  for (int i = 0; i < times; ++i) {
    const auto started = std::chrono::steady_clock::now();
    DispatchResult res = dispatch(recorded.message, victim_url, trust);
    ReplayResult out;
    out.victim_url = victim_url;
    out.status = res.status;
    out.response_body = res.body;
    out.transport = res.error;
    out.accepted = res.ok() && res.status == 200 && is_valid_skill_response(res.body);
    out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    results.push_back(std::move(out));
  }
  return results;
}

InjectionDemoReport run_injection_demo(CloudSim& cloud, const SkillRegistration& attacker,
                                       const std::string& victim_url, const TlsTrust& trust,
                                       const std::string& payload, Instant now) {
  auto custom = attacker.custom_intent();
  if (!custom || custom->second.empty()) {
    throw std::invalid_argument("attacker schema has no custom intent with a slot");
  }
  RecordedRequest recorded =
      capture(cloud, attacker, custom->first, {{custom->second.front(), payload}}, now);
  ReplayResult result = replay(recorded, victim_url, trust, 1).front();
  if (!result.accepted) {
    throw DemoPreconditionFailed("victim rejected the replayed payload (status " +
                                 std::to_string(result.status) + ", body " +
                                 result.response_body + ")");
  }

  InjectionDemoReport report;
  report.payload = payload;
  ResponseEnvelope response = parse_response(result.response_body);
  report.composed_query = response.debug_query;
  report.speech_text = response.speech_text;
  report.replay = std::move(result);
  return report;
}

namespace {

constexpr char kMagic[4] = {'S', 'P', 'R', 'R'};
constexpr unsigned char kVersion = 1;

void append_field(std::string& out, std::string_view field) {
  const std::uint32_t len = static_cast<std::uint32_t>(field.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out.append(field.data(), field.size());
}

std::string_view read_field(std::string_view& rest) {
  if (rest.size() < 4) throw ParseError("recorded request truncated", 0);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) {
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(rest[i])) << (8 * i);
  }
  rest.remove_prefix(4);
  if (rest.size() < len) throw ParseError("recorded request field overruns buffer", 0);
  std::string_view field = rest.substr(0, len);
  rest.remove_prefix(len);
  return field;
}

}  // namespace

std::string serialize_recorded_request(const RecordedRequest& recorded) {
  std::string out(kMagic, sizeof(kMagic));
  out.push_back(static_cast<char>(kVersion));
  append_field(out, recorded.message.body);
  append_field(out, recorded.message.signature);
  append_field(out, recorded.message.chain_locator);
  append_field(out, recorded.source_application_id.value);
  append_field(out, format_rfc3339(recorded.captured_at));
  return out;
}

RecordedRequest parse_recorded_request(std::string_view bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a recorded request container", 0);
  }
  if (static_cast<unsigned char>(bytes[4]) != kVersion) {
    throw ParseError("unsupported recorded request version", 4);
  }
  std::string_view rest = bytes.substr(5);
  RecordedRequest recorded;
  recorded.message.body = std::string(read_field(rest));
  recorded.message.signature = std::string(read_field(rest));
  recorded.message.chain_locator = std::string(read_field(rest));
  recorded.source_application_id.value = std::string(read_field(rest));
  auto captured = parse_rfc3339(read_field(rest));
  if (!captured) throw ParseError("recorded request has a bad capture time", 0);
  recorded.captured_at = *captured;
  if (!rest.empty()) throw ParseError("trailing bytes after recorded request", 0);
  return recorded;
}

}  // namespace skillprobe
