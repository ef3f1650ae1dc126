#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include "skillprobe/attack.hpp"
#include "skillprobe/endpoint.hpp"
#include "test_support.hpp"

using namespace skillprobe;

namespace {

struct AttackFixture {
  CloudIdentity id;
  std::unique_ptr<ChainServer> chain;
  std::unique_ptr<CloudSim> cloud;
  const SkillRegistration* victim = nullptr;
  const TlsAuthority& authority = test::shared_tls_authority();
  std::string host = "victim.zoo.test";
  TlsTrust trust;

  AttackFixture() {
    CloudIdentityParams params;
    params.seed = 20190927;
    params.key_bits = 1024;
    id = generate_identity(params);
    chain = std::make_unique<ChainServer>(id, "127.0.0.1");
    cloud = std::make_unique<CloudSim>(id);
    victim = &cloud->register_skill(ApplicationId{"amzn1.ask.skill.victim"},
                                    "https://victim.zoo.test/alexa",
                                    {{"LookupIntent", {"num"}}});
    trust = TlsTrust::strict(authority.cert_pem, {{host, "127.0.0.1"}});
  }

  EndpointServer start_victim(EndpointMode mode, bool injection_demo = false,
                              std::optional<ApplicationId> expected = std::nullopt) {
    EndpointConfig config;
    config.mode = mode;
    config.expected_app_id = expected.value_or(victim->application_id);
    config.trust_root_pem = id.root_pem();
    config.state.injection_demo = injection_demo;
    return EndpointServer(std::move(config),
                          make_tls_material(TlsProfileKind::Standard, host, &authority),
                          "127.0.0.1");
  }
};

}  // namespace

TEST_CASE("mock skill mimics the victim schema under a fresh application-ID") {
  AttackFixture fx;
  const auto schema = fx.victim->intent_schema;

  const SkillRegistration& mock_a = register_mock_skill(*fx.cloud, schema);
  CHECK(mock_a.intent_schema == schema);
  CHECK(mock_a.application_id.value != fx.victim->application_id.value);

  const SkillRegistration& mock_b = register_mock_skill(*fx.cloud, schema);
  CHECK(mock_b.application_id.value != mock_a.application_id.value);

  CHECK_THROWS_AS(register_mock_skill(*fx.cloud, {}), std::invalid_argument);
}

TEST_CASE("capture wraps the text interface output") {
  AttackFixture fx;
  const SkillRegistration& attacker = register_mock_skill(*fx.cloud, fx.victim->intent_schema);
  const Instant now = now_utc();

  RecordedRequest rec = capture(*fx.cloud, attacker, "LaunchRequest", {}, now);
  CHECK(verify_sha256(fx.cloud->identity().leaf_public_key(), rec.message.body,
                      rec.message.signature));
  CHECK(parse_request(rec.message.body).application_id == attacker.application_id);
  CHECK(rec.source_application_id == attacker.application_id);
  CHECK(rec.captured_at == now);

  // Injection payloads pass through as literal slot values.
  RecordedRequest payload =
      capture(*fx.cloud, attacker, "LookupIntent", {{"num", "1 OR 1=1"}}, now);
  CHECK(rec.message.body.find("1 OR 1=1") == std::string::npos);
  CHECK(payload.message.body.find("1 OR 1=1") != std::string::npos);

  CHECK_THROWS_AS(capture(*fx.cloud, attacker, "NotInSchema", {}, now), UnknownIntent);
}

TEST_CASE("replay against the ignore-app-id victim succeeds; the valid one detects it") {
  AttackFixture fx;
  const SkillRegistration& attacker = register_mock_skill(*fx.cloud, fx.victim->intent_schema);
  RecordedRequest rec = capture(*fx.cloud, attacker, "LaunchRequest", {}, now_utc());

  SUBCASE("ignore-app-id accepts the cross-skill replay") {
    EndpointServer victim = fx.start_victim(EndpointMode::IgnoreAppId);
    auto results = replay(rec, victim.url(fx.host), fx.trust, 1);
    REQUIRE(results.size() == 1);
    CHECK(results[0].accepted);
    CHECK(results[0].status == 200);
  }

  SUBCASE("valid mode rejects with AppIdMismatch") {
    EndpointServer victim = fx.start_victim(EndpointMode::Valid);
    auto results = replay(rec, victim.url(fx.host), fx.trust, 1);
    REQUIRE(results.size() == 1);
    CHECK(!results[0].accepted);
    CHECK(results[0].status == 400);
    CHECK(results[0].response_body.find("AppIdMismatch") != std::string::npos);
  }

  SUBCASE("transport failures are recorded, not thrown") {
    auto results = replay(rec, "https://" + fx.host + ":9/alexa", fx.trust, 2);
    REQUIRE(results.size() == 2);
    CHECK(!results[0].accepted);
    CHECK(results[0].transport == TransportError::Connect);
  }

  CHECK_THROWS_AS(replay(rec, "https://x.test/", fx.trust, 0), std::invalid_argument);
}

TEST_CASE("all transmissions of a recorded request are byte-identical on the wire") {
  AttackFixture fx;
  const SkillRegistration& attacker = register_mock_skill(*fx.cloud, fx.victim->intent_schema);
  RecordedRequest rec = capture(*fx.cloud, attacker, "LaunchRequest", {}, now_utc());

  // Capturing server: records raw bodies and signature headers verbatim.
  TlsMaterial material = make_tls_material(TlsProfileKind::Standard, fx.host, &fx.authority);
  auto cert = pem_decode_chain(material.cert_pem).front();
  auto key = pem_decode_private_key(material.key_pem);
  httplib::SSLServer server(cert.get(), key.get());
  std::vector<std::pair<std::string, std::string>> seen;
  std::mutex seen_mutex;
  server.Post("/alexa", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(seen_mutex);
    seen.emplace_back(req.body, req.get_header_value("Signature"));
    res.status = 200;
    ResponseEnvelope ok;
    ok.speech_text = "ok";
    res.set_content(serialize(ok), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto results =
      replay(rec, "https://" + fx.host + ":" + std::to_string(port) + "/alexa", fx.trust, 5);
  server.stop();
  listener.join();

  REQUIRE(results.size() == 5);
  REQUIRE(seen.size() == 5);
  for (const auto& [body, signature] : seen) {
    CHECK(body == rec.message.body);
    CHECK(signature == seen.front().second);
  }
  for (const auto& result : results) CHECK(result.accepted);
}

TEST_CASE("attack success is exactly characterized by the victim policy") {
  AttackFixture fx;
  const SkillRegistration& attacker = register_mock_skill(*fx.cloud, fx.victim->intent_schema);

  const Instant now = now_utc();
  RecordedRequest fresh = capture(*fx.cloud, attacker, "LaunchRequest", {}, now);
  RecordedRequest stale = capture(*fx.cloud, attacker, "LaunchRequest", {}, now - 3600);

  struct Case {
    EndpointMode mode;
    bool fresh_accepted;
    bool stale_accepted;
  };
  // accepted <=> (skips app-ID) && (skips timestamp || capture fresh)
  const Case cases[] = {
      {EndpointMode::Valid, false, false},
      {EndpointMode::IgnoreAppId, true, false},
      {EndpointMode::IgnoreTimestamp, false, false},
      {EndpointMode::AcceptAll, true, true},
      {EndpointMode::RejectAll, false, false},
  };
  for (const Case& c : cases) {
    CAPTURE(to_string(c.mode));
    EndpointServer victim = fx.start_victim(c.mode);
    const std::string url = victim.url(fx.host);
    CHECK(replay(fresh, url, fx.trust, 1)[0].accepted == c.fresh_accepted);
    CHECK(replay(stale, url, fx.trust, 1)[0].accepted == c.stale_accepted);
  }

  // An ignore-timestamp victim that happens to expect the attacker's own
  // app-ID shows the staleness bypass in isolation.
  EndpointServer misconfigured =
      fx.start_victim(EndpointMode::IgnoreTimestamp, false, attacker.application_id);
  CHECK(replay(stale, misconfigured.url(fx.host), fx.trust, 1)[0].accepted);

  // Same setup with the timestamp check on: stale replays are caught.
  EndpointServer checking = fx.start_victim(EndpointMode::IgnoreAppId);
  auto rejected = replay(stale, checking.url(fx.host), fx.trust, 1);
  CHECK(rejected[0].status == 400);
  CHECK(rejected[0].response_body.find("StaleTimestamp") != std::string::npos);
}

TEST_CASE("injection demo delivers the unescaped payload") {
  AttackFixture fx;
  const SkillRegistration& attacker = register_mock_skill(*fx.cloud, fx.victim->intent_schema);

  SUBCASE("tautology payload dumps every fixture row") {
    EndpointServer victim = fx.start_victim(EndpointMode::IgnoreAppId, true);
    InjectionDemoReport report = run_injection_demo(*fx.cloud, attacker, victim.url(fx.host),
                                                    fx.trust, "0 OR 1=1", now_utc());
    CHECK(report.speech_text == "Rows: alpha bravo charlie");
    CHECK(report.composed_query == "SELECT val FROM t WHERE id = 0 OR 1=1");
    CHECK(report.replay.accepted);
  }

  SUBCASE("benign payload returns exactly its row") {
    EndpointServer victim = fx.start_victim(EndpointMode::IgnoreAppId, true);
    InjectionDemoReport report = run_injection_demo(*fx.cloud, attacker, victim.url(fx.host),
                                                    fx.trust, "2", now_utc());
    CHECK(report.speech_text == "Rows: bravo");
  }

  SUBCASE("a valid victim blocks the demo") {
    EndpointServer victim = fx.start_victim(EndpointMode::Valid, true);
    CHECK_THROWS_AS(run_injection_demo(*fx.cloud, attacker, victim.url(fx.host), fx.trust,
                                       "0 OR 1=1", now_utc()),
                    DemoPreconditionFailed);
  }
}

TEST_CASE("recorded request container round-trips byte-exactly") {
  AttackFixture fx;
  const SkillRegistration& attacker = register_mock_skill(*fx.cloud, fx.victim->intent_schema);
  RecordedRequest rec =
      capture(*fx.cloud, attacker, "LookupIntent", {{"num", "0 OR 1=1"}},
              *parse_rfc3339("2019-09-27T10:00:00Z"));

  const std::string container = serialize_recorded_request(rec);
  CHECK(container.substr(0, 4) == "SPRR");
  RecordedRequest back = parse_recorded_request(container);
  CHECK(back.message.body == rec.message.body);
  CHECK(back.message.signature == rec.message.signature);
  CHECK(back.message.chain_locator == rec.message.chain_locator);
  CHECK(back.source_application_id == rec.source_application_id);
  CHECK(back.captured_at == rec.captured_at);
  CHECK(serialize_recorded_request(back) == container);

  CHECK_THROWS_AS(parse_recorded_request(""), ParseError);
  CHECK_THROWS_AS(parse_recorded_request("NOPE"), ParseError);
  CHECK_THROWS_AS(parse_recorded_request(container.substr(0, container.size() / 2)), ParseError);
  CHECK_THROWS_AS(parse_recorded_request(container + "x"), ParseError);
}
