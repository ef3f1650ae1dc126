#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <openssl/evp.h>

#include <cstring>

#include "skillprobe/crypto.hpp"
#include "skillprobe/cloudsim.hpp"
#include "test_support.hpp"

using namespace skillprobe;

TEST_CASE("deterministic rng reproduces and diverges by seed") {
  DeterministicRng a(42), b(42), c(43);
  CHECK(a.next_u64() == b.next_u64());
  unsigned char block_a[48], block_b[48];
  a.fill(block_a, sizeof(block_a));
  b.fill(block_b, sizeof(block_b));
  CHECK(std::memcmp(block_a, block_b, sizeof(block_a)) == 0);
  DeterministicRng a2(42);
  CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("seeded identity generation is reproducible") {
  CloudIdentityParams params;
  params.seed = 42;
  params.key_bits = 1024;
  CloudIdentity first = generate_identity(params);
  CloudIdentity second = generate_identity(params);

  CHECK(EVP_PKEY_eq(first.leaf_public_key(), second.leaf_public_key()) == 1);
  CHECK(pem_encode_chain(first.cert_chain) == pem_encode_chain(second.cert_chain));

  params.seed = 43;
  CloudIdentity third = generate_identity(params);
  CHECK(EVP_PKEY_eq(first.leaf_public_key(), third.leaf_public_key()) != 1);
}

TEST_CASE("identity chain has two certificates and validates to its root") {
  CloudIdentity& id = test::shared_identity();
  REQUIRE(id.cert_chain.size() == 2);
  CHECK(chain_validates(id.cert_chain, id.root()));

  // Leaf alone does not validate against an unrelated root.
  CloudIdentityParams params;
  params.seed = 99;
  params.key_bits = 1024;
  CloudIdentity other = generate_identity(params);
  CHECK(!chain_validates(id.cert_chain, other.root()));
}

TEST_CASE("sign/verify round-trip and key mismatch") {
  CloudIdentity& id = test::shared_identity();
  const std::string sig = sign_sha256(id.private_key.get(), "x");
  CHECK(verify_sha256(id.leaf_public_key(), "x", sig));
  CHECK(!verify_sha256(id.leaf_public_key(), "y", sig));

  CloudIdentityParams params;
  params.seed = 7;
  params.key_bits = 1024;
  CloudIdentity other = generate_identity(params);
  CHECK(!verify_sha256(other.leaf_public_key(), "x", sig));
}

TEST_CASE("every single-byte flip of a signed body fails verification") {
  CloudIdentity& id = test::shared_identity();
  const std::string body = R"({"intent":"LaunchRequest","version":"1.0"})";
  const std::string sig = sign_sha256(id.private_key.get(), body);
  REQUIRE(verify_sha256(id.leaf_public_key(), body, sig));

  for (std::size_t pos = 0; pos < body.size(); ++pos) {
    for (int value = 0; value < 256; ++value) {
      if (body[pos] == static_cast<char>(value)) continue;
      std::string mutated = body;
      mutated[pos] = static_cast<char>(value);
      if (verify_sha256(id.leaf_public_key(), mutated, sig)) {
        FAIL("flip at ", pos, " to ", value, " still verified");
      }
    }
  }
}

TEST_CASE("pem round-trips for keys and chains") {
  CloudIdentity& id = test::shared_identity();
  const std::string key_pem = pem_encode_private_key(id.private_key.get());
  PKeyPtr key = pem_decode_private_key(key_pem);
  CHECK(EVP_PKEY_eq(key.get(), id.private_key.get()) == 1);

  const std::string chain_pem = pem_encode_chain(id.cert_chain);
  auto chain = pem_decode_chain(chain_pem);
  REQUIRE(chain.size() == 2);
  CHECK(pem_encode_chain(chain) == chain_pem);

  CHECK(pem_decode_chain("not pem at all").empty());
  CHECK_THROWS_AS(pem_decode_private_key("garbage"), CryptoError);
}

TEST_CASE("tls material chains to the authority except when self-signed") {
  const TlsAuthority& authority = test::shared_tls_authority();
  auto authority_cert = pem_decode_chain(authority.cert_pem).front();

  TlsMaterial standard =
      make_tls_material(TlsProfileKind::Standard, "endpoint.zoo.test", &authority);
  CHECK(chain_validates(pem_decode_chain(standard.cert_pem), authority_cert.get()));

  TlsMaterial wildcard =
      make_tls_material(TlsProfileKind::Wildcard, "endpoint.zoo.test", &authority);
  CHECK(chain_validates(pem_decode_chain(wildcard.cert_pem), authority_cert.get()));

  TlsMaterial selfsigned =
      make_tls_material(TlsProfileKind::SelfSigned, "endpoint.zoo.test", nullptr);
  CHECK(!chain_validates(pem_decode_chain(selfsigned.cert_pem), authority_cert.get()));

  CHECK_THROWS_AS(make_tls_material(TlsProfileKind::Wildcard, "singlelabel", &authority),
                  TlsConfigError);
  CHECK_THROWS_AS(make_tls_material(TlsProfileKind::Standard, "h.test", nullptr),
                  TlsConfigError);
}
