#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "skillprobe/cloudsim.hpp"
#include "skillprobe/encoding.hpp"
#include "test_support.hpp"

using namespace skillprobe;

TEST_CASE("sign_request covers the canonical body bytes") {
  CloudIdentity& id = test::shared_identity();
  RequestEnvelope env = test::sample_envelope();
  SignedMessage msg = sign_request(id, env);

  CHECK(msg.body == serialize(env));
  CHECK(msg.chain_locator == id.chain_locator);
  CHECK(verify_sha256(id.leaf_public_key(), msg.body, msg.signature));

  // Any body mutation after signing must fail verification.
  std::string mutated = msg.body;
  mutated[mutated.size() / 2] ^= 0x01;
  CHECK(!verify_sha256(id.leaf_public_key(), mutated, msg.signature));
}

TEST_CASE("text interface signs for whichever skill asked (single-key property)") {
  CloudSim cloud(test::shared_identity());
  const Instant now = now_utc();

  const SkillRegistration& skill_a = cloud.register_skill(
      ApplicationId{"amzn1.ask.skill.aaaa"}, "https://a.test/alexa", {{"LookupIntent", {"num"}}});
  const SkillRegistration& skill_b = cloud.register_skill(
      ApplicationId{"amzn1.ask.skill.bbbb"}, "https://b.test/alexa", {});

  SignedMessage for_a = cloud.text_interface(skill_a, "LookupIntent", {{"num", "7"}}, now);
  SignedMessage for_b = cloud.text_interface(skill_b, "LaunchRequest", {}, now);

  // Both verify under the same leaf key.
  EVP_PKEY* leaf = cloud.identity().leaf_public_key();
  CHECK(verify_sha256(leaf, for_a.body, for_a.signature));
  CHECK(verify_sha256(leaf, for_b.body, for_b.signature));

  // The body carries the registration's application-ID.
  CHECK(parse_request(for_a.body).application_id.value == "amzn1.ask.skill.aaaa");
  CHECK(parse_request(for_b.body).application_id.value == "amzn1.ask.skill.bbbb");

  // Unknown intent is refused; default intents always pass.
  CHECK_THROWS_AS(cloud.text_interface(skill_b, "LookupIntent", {}, now), UnknownIntent);
  CHECK_NOTHROW(cloud.text_interface(skill_b, "HelpIntent", {}, now));

  // Freshness: request ids never repeat.
  std::set<std::string> ids;
  for (int i = 0; i < 10; ++i) {
    ids.insert(parse_request(cloud.text_interface(skill_b, "LaunchRequest", {}, now).body)
                   .request_id);
  }
  CHECK(ids.size() == 10);

  CHECK_THROWS_AS(
      cloud.register_skill(ApplicationId{"amzn1.ask.skill.aaaa"}, "https://c.test", {}),
      DuplicateApplicationId);
}

TEST_CASE("chain server serves the PEM chain at its locator") {
  CloudIdentityParams params;
  params.seed = 20190927;
  params.key_bits = 1024;
  CloudIdentity id = generate_identity(params);
  ChainServer server(id, "127.0.0.1");

  CHECK(id.chain_locator == server.locator());

  DispatchResult res = http_get(server.locator());
  REQUIRE(res.ok());
  CHECK(res.status == 200);
  auto chain = pem_decode_chain(res.body);
  REQUIRE(chain.size() == 2);

  DispatchResult missing = http_get(server.locator() + "/nope");
  REQUIRE(missing.ok());
  CHECK(missing.status == 404);

  // End to end: the fetched leaf verifies a fresh signed message.
  SignedMessage msg = sign_request(id, test::sample_envelope());
  PKeyPtr fetched_leaf = certificate_public_key(chain.front().get());
  CHECK(verify_sha256(fetched_leaf.get(), msg.body, msg.signature));

  server.stop();
  server.stop();  // idempotent
}

TEST_CASE("dispatch reports connect errors for closed ports") {
  SignedMessage msg = sign_request(test::shared_identity(), test::sample_envelope());
  DispatchResult res = dispatch(msg, "https://127.0.0.1:9/alexa", TlsTrust::insecure(), 1500);
  CHECK(!res.ok());
  CHECK(res.error == TransportError::Connect);

  DispatchResult bad = dispatch(msg, "ftp://127.0.0.1/alexa", TlsTrust::insecure());
  CHECK(bad.error == TransportError::Other);
}

TEST_CASE("base64 encoding round-trips and rejects junk") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("foob") == "Zm9vYg==");
  for (const std::string& sample : {std::string("hello"), std::string("\x00\xff\x10", 3)}) {
    auto decoded = base64_decode(base64_encode(sample));
    REQUIRE(decoded);
    CHECK(*decoded == sample);
  }
  CHECK(!base64_decode("a"));
  CHECK(!base64_decode("!!!!"));
  CHECK(base64_decode(""));
  // Degenerate padding must not crash or alias to valid input.
  CHECK(!base64_decode("===="));
  CHECK(!base64_decode("A==="));
  CHECK(!base64_decode("AB=C"));
  CHECK(!base64_decode("ABC=ABC="));
  CHECK(base64_decode("AB=="));
}

TEST_CASE("url parsing handles ports, defaults and malformed input") {
  auto url = parse_url("https://endpoint.zoo.test:8443/alexa");
  REQUIRE(url);
  CHECK(url->scheme == "https");
  CHECK(url->host == "endpoint.zoo.test");
  CHECK(url->port == 8443);
  CHECK(url->path == "/alexa");

  auto defaulted = parse_url("https://h.test/x/y");
  REQUIRE(defaulted);
  CHECK(defaulted->port == 443);
  CHECK(defaulted->path == "/x/y");

  auto rootless = parse_url("http://h.test");
  REQUIRE(rootless);
  CHECK(rootless->port == 80);
  CHECK(rootless->path == "/");

  CHECK(!parse_url("not a url"));
  CHECK(!parse_url("https://"));
  CHECK(!parse_url("https://h.test:notaport/"));
}
