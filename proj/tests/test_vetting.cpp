#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "skillprobe/encoding.hpp"
#include "skillprobe/vetting.hpp"
#include "test_support.hpp"

using namespace skillprobe;

namespace {

struct ZooFixture {
  CloudIdentity id;
  std::unique_ptr<ChainServer> chain;
  std::unique_ptr<CloudSim> cloud;
  const SkillRegistration* target = nullptr;
  const TlsAuthority& authority = test::shared_tls_authority();
  std::string host = "endpoint.zoo.test";
  TlsTrust trust;

  ZooFixture() {
    CloudIdentityParams params;
    params.seed = 20190927;
    params.key_bits = 1024;
    id = generate_identity(params);
    chain = std::make_unique<ChainServer>(id, "127.0.0.1");
    cloud = std::make_unique<CloudSim>(id);
    target = &cloud->register_skill(ApplicationId{"amzn1.ask.skill.victim"},
                                    "https://endpoint.zoo.test/alexa",
                                    {{"LookupIntent", {"num"}}});
    trust = TlsTrust::strict(authority.cert_pem, {{host, "127.0.0.1"}});
  }

  EndpointServer start(EndpointMode mode, TlsProfileKind tls = TlsProfileKind::Standard) {
    EndpointConfig config;
    config.mode = mode;
    config.expected_app_id = target->application_id;
    config.trust_root_pem = id.root_pem();
    return EndpointServer(
        std::move(config),
        make_tls_material(tls, host, tls == TlsProfileKind::SelfSigned ? nullptr : &authority),
        "127.0.0.1");
  }
};

}  // namespace

TEST_CASE("suite composition: sizes, order and probe contents") {
  ZooFixture fx;
  const Instant now = now_utc();

  std::vector<Probe> baseline =
      build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now);
  CHECK(baseline.size() == 10);  // 7 functional + 3 security

  std::vector<Probe> strict =
      build_probe_suite(VettingProfileName::Strict, *fx.cloud, *fx.target, now);
  REQUIRE(strict.size() == 14);  // 10 + 4 extended

  // Functional probes come first: six defaults then the custom intent.
  for (int i = 0; i < 7; ++i) CHECK(strict[i].kind == ProbeKind::FunctionalIntent);
  CHECK(strict[6].intent == "LookupIntent");
  for (int i = 0; i < 6; ++i) CHECK(strict[i].intent == default_intents()[i]);

  EVP_PKEY* leaf = fx.cloud->identity().leaf_public_key();

  const Probe& empty_sig = strict[7];
  CHECK(empty_sig.kind == ProbeKind::EmptySignature);
  CHECK(empty_sig.message.signature.empty());
  CHECK_NOTHROW(parse_request(empty_sig.message.body));

  const Probe& invalid_sig = strict[8];
  CHECK(invalid_sig.kind == ProbeKind::InvalidSignature);
  CHECK(!verify_sha256(leaf, invalid_sig.message.body, invalid_sig.message.signature));

  const Probe& foreign = strict[9];
  CHECK(foreign.kind == ProbeKind::ForeignChainLocator);
  CHECK(verify_sha256(leaf, foreign.message.body, foreign.message.signature));
  CHECK(foreign.message.chain_locator.find("chains.invalid") != std::string::npos);

  // The wrong-app-ID probe is the single-key property weaponized: signed by
  // the same cloud, carrying another skill's identity.
  const Probe& wrong_app = strict[10];
  CHECK(wrong_app.kind == ProbeKind::WrongAppId);
  CHECK(verify_sha256(leaf, wrong_app.message.body, wrong_app.message.signature));
  CHECK(parse_request(wrong_app.message.body).application_id.value !=
        fx.target->application_id.value);

  const Probe& stale = strict[11];
  CHECK(stale.kind == ProbeKind::StaleTimestamp);
  CHECK(verify_sha256(leaf, stale.message.body, stale.message.signature));
  CHECK(now - parse_request(stale.message.body).timestamp == 210);  // tolerance + 60

  const Probe& replayed = strict[12];
  CHECK(replayed.kind == ProbeKind::ReplayedRequest);
  CHECK(replayed.message.body == strict[0].message.body);  // byte-identical resend
  CHECK(replayed.message.signature == strict[0].message.signature);

  const Probe& malformed = strict[13];
  CHECK(malformed.kind == ProbeKind::MalformedBody);
  CHECK(verify_sha256(leaf, malformed.message.body, malformed.message.signature));
  CHECK_THROWS_AS(parse_request(malformed.message.body), ParseError);
}

TEST_CASE("suite building is deterministic apart from request ids") {
  ZooFixture fx;
  const Instant now = *parse_rfc3339("2019-09-27T10:00:00Z");
  auto a = build_probe_suite(VettingProfileName::Strict, *fx.cloud, *fx.target, now);
  auto b = build_probe_suite(VettingProfileName::Strict, *fx.cloud, *fx.target, now);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].kind == b[i].kind);
    if (a[i].kind == ProbeKind::MalformedBody) continue;
    RequestEnvelope ea = parse_request(a[i].message.body);
    RequestEnvelope eb = parse_request(b[i].message.body);
    CHECK(ea.timestamp == eb.timestamp);
    CHECK(ea.intent == eb.intent);
  }
}

TEST_CASE("verdicts against the zoo") {
  ZooFixture fx;

  SUBCASE("valid endpoint passes both profiles") {
    EndpointServer server = fx.start(EndpointMode::Valid);
    const std::string url = server.url(fx.host);
    for (VettingProfileName profile :
         {VettingProfileName::AlexaBaseline, VettingProfileName::Strict}) {
      auto suite = build_probe_suite(profile, *fx.cloud, *fx.target, now_utc());
      VettingVerdict verdict = run_vetting(suite, url, fx.trust, profile);
      CAPTURE(verdict.findings);
      CHECK(verdict.passed);
      CHECK(verdict.findings.empty());

      // Two runs of one suite against one endpoint: identical verdicts.
      VettingVerdict again = run_vetting(suite, url, fx.trust, profile);
      CHECK(again.passed == verdict.passed);
      REQUIRE(again.outcomes.size() == verdict.outcomes.size());
      for (std::size_t i = 0; i < again.outcomes.size(); ++i) {
        CHECK(again.outcomes[i].conforming == verdict.outcomes[i].conforming);
        CHECK(again.outcomes[i].status == verdict.outcomes[i].status);
      }
    }
  }

  SUBCASE("ignore-app-id passes the baseline but fails strict naming the application-ID") {
    EndpointServer server = fx.start(EndpointMode::IgnoreAppId);
    const std::string url = server.url(fx.host);

    auto baseline =
        build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
    VettingVerdict pass = run_vetting(baseline, url, fx.trust, VettingProfileName::AlexaBaseline);
    CAPTURE(pass.findings);
    CHECK(pass.passed);  // the gap the attack walks through

    auto strict = build_probe_suite(VettingProfileName::Strict, *fx.cloud, *fx.target, now_utc());
    VettingVerdict fail = run_vetting(strict, url, fx.trust, VettingProfileName::Strict);
    CHECK(!fail.passed);
    bool names_app_id = false;
    for (const auto& finding : fail.findings) {
      names_app_id = names_app_id || finding.find("application-ID") != std::string::npos;
    }
    CHECK(names_app_id);
  }

  SUBCASE("ignore-timestamp passes the baseline but fails strict") {
    EndpointServer server = fx.start(EndpointMode::IgnoreTimestamp);
    const std::string url = server.url(fx.host);
    auto baseline =
        build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
    CHECK(run_vetting(baseline, url, fx.trust, VettingProfileName::AlexaBaseline).passed);
    auto strict = build_probe_suite(VettingProfileName::Strict, *fx.cloud, *fx.target, now_utc());
    VettingVerdict fail = run_vetting(strict, url, fx.trust, VettingProfileName::Strict);
    CHECK(!fail.passed);
    bool names_timestamp = false;
    for (const auto& finding : fail.findings) {
      names_timestamp = names_timestamp || finding.find("timestamp") != std::string::npos;
    }
    CHECK(names_timestamp);
  }

  SUBCASE("accept-all fails the baseline") {
    EndpointServer server = fx.start(EndpointMode::AcceptAll);
    auto suite =
        build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
    VettingVerdict verdict =
        run_vetting(suite, server.url(fx.host), fx.trust, VettingProfileName::AlexaBaseline);
    CHECK(!verdict.passed);
    // Functional probes still conform; the security probes are what fail.
    for (const auto& outcome : verdict.outcomes) {
      if (outcome.kind == ProbeKind::FunctionalIntent) CHECK(outcome.conforming);
    }
  }

  SUBCASE("reject-all fails the baseline on its functional probes") {
    EndpointServer server = fx.start(EndpointMode::RejectAll);
    auto suite =
        build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
    VettingVerdict verdict =
        run_vetting(suite, server.url(fx.host), fx.trust, VettingProfileName::AlexaBaseline);
    CHECK(!verdict.passed);
    for (const auto& outcome : verdict.outcomes) {
      if (outcome.kind == ProbeKind::FunctionalIntent) CHECK(!outcome.conforming);
      if (outcome.kind != ProbeKind::FunctionalIntent &&
          outcome.kind != ProbeKind::ReplayedRequest) {
        CHECK(outcome.conforming);  // it does reject the bad ones, after all
      }
    }
  }

  SUBCASE("self-signed certificate short-circuits with a single TLS finding") {
    EndpointServer server = fx.start(EndpointMode::Valid, TlsProfileKind::SelfSigned);
    auto suite =
        build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
    VettingVerdict verdict =
        run_vetting(suite, server.url(fx.host), fx.trust, VettingProfileName::AlexaBaseline);
    CHECK(!verdict.passed);
    REQUIRE(verdict.findings.size() == 1);
    CHECK(verdict.findings[0].find("TlsCertificate") != std::string::npos);
    CHECK(verdict.outcomes.size() == 1);  // terminated immediately
  }

  SUBCASE("offline endpoint fails with an unreachable finding") {
    auto suite =
        build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
    VettingVerdict verdict = run_vetting(
        suite, "https://" + fx.host + ":9/alexa", fx.trust, VettingProfileName::AlexaBaseline, 1500);
    CHECK(!verdict.passed);
    REQUIRE(verdict.findings.size() == 1);
    CHECK(verdict.findings[0].find("EndpointUnreachable") != std::string::npos);
    CHECK(verdict.outcomes.size() == 1);
  }

  SUBCASE("request-id tracking endpoints reject the replay and still pass strict") {
    EndpointConfig config;
    config.mode = EndpointMode::Valid;
    config.expected_app_id = fx.target->application_id;
    config.trust_root_pem = fx.id.root_pem();
    config.track_request_ids = true;
    EndpointServer server(std::move(config),
                          make_tls_material(TlsProfileKind::Standard, fx.host, &fx.authority),
                          "127.0.0.1");
    auto suite = build_probe_suite(VettingProfileName::Strict, *fx.cloud, *fx.target, now_utc());
    VettingVerdict verdict =
        run_vetting(suite, server.url(fx.host), fx.trust, VettingProfileName::Strict);
    CAPTURE(verdict.findings);
    CHECK(verdict.passed);
    for (const auto& outcome : verdict.outcomes) {
      if (outcome.kind == ProbeKind::ReplayedRequest) CHECK(outcome.status == 400);
    }
  }
}

TEST_CASE("verdict json is well-formed") {
  ZooFixture fx;
  EndpointServer server = fx.start(EndpointMode::Valid);
  auto suite =
      build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
  VettingVerdict verdict =
      run_vetting(suite, server.url(fx.host), fx.trust, VettingProfileName::AlexaBaseline);
  const std::string json = verdict_to_json(verdict);
  CHECK(json.find("\"skillprobe-verdict/1\"") != std::string::npos);
  CHECK(json.find("\"passed\": true") != std::string::npos);
}

TEST_CASE("expected matrix pattern matches the published table") {
  using M = EndpointMode;
  using T = TlsProfileKind;
  const auto baseline = VettingProfileName::AlexaBaseline;
  const auto strict = VettingProfileName::Strict;

  // Standard and wildcard columns behave identically.
  for (T tls : {T::Standard, T::Wildcard}) {
    CHECK(expected_matrix_pass(baseline, M::Valid, tls));
    CHECK(expected_matrix_pass(baseline, M::IgnoreAppId, tls));
    CHECK(expected_matrix_pass(baseline, M::IgnoreTimestamp, tls));
    CHECK(!expected_matrix_pass(baseline, M::AcceptAll, tls));
    CHECK(!expected_matrix_pass(baseline, M::RejectAll, tls));
    CHECK(!expected_matrix_pass(baseline, M::Offline, tls));

    CHECK(expected_matrix_pass(strict, M::Valid, tls));
    CHECK(!expected_matrix_pass(strict, M::IgnoreAppId, tls));
    CHECK(!expected_matrix_pass(strict, M::IgnoreTimestamp, tls));
  }
  // The invalid-certificate column fails across the board.
  for (M mode : {M::Valid, M::IgnoreAppId, M::IgnoreTimestamp, M::AcceptAll, M::RejectAll,
                 M::Offline}) {
    CHECK(!expected_matrix_pass(baseline, mode, T::SelfSigned));
    CHECK(!expected_matrix_pass(strict, mode, T::SelfSigned));
  }
}

TEST_CASE("profile monotonicity on a shared endpoint") {
  ZooFixture fx;
  EndpointServer server = fx.start(EndpointMode::Valid);
  const std::string url = server.url(fx.host);
  auto strict_suite = build_probe_suite(VettingProfileName::Strict, *fx.cloud, *fx.target, now_utc());
  auto base_suite =
      build_probe_suite(VettingProfileName::AlexaBaseline, *fx.cloud, *fx.target, now_utc());
  VettingVerdict strict = run_vetting(strict_suite, url, fx.trust, VettingProfileName::Strict);
  VettingVerdict base = run_vetting(base_suite, url, fx.trust, VettingProfileName::AlexaBaseline);
  if (strict.passed) CHECK(base.passed);
}
