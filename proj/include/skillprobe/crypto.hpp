#pragma once

#include <openssl/types.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skillprobe/clock.hpp"

namespace skillprobe {

using PKeyPtr = std::shared_ptr<EVP_PKEY>;
using X509Ptr = std::shared_ptr<X509>;

PKeyPtr adopt_pkey(EVP_PKEY* key);
X509Ptr adopt_x509(X509* cert);

class CryptoError : public std::runtime_error {
 public:
  explicit CryptoError(const std::string& what);
};

// SHA-256 counter DRBG. Not a general-purpose CSPRNG; exists so seeded
// identities reproduce bit-for-bit across runs and processes.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed);
  void fill(unsigned char* out, std::size_t n);
  std::uint64_t next_u64();

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  unsigned char block_[32];
  std::size_t block_used_ = 32;
};

PKeyPtr generate_rsa_key(int bits);
// Same key for the same (seed position, bits); primes are drawn from the
// caller's DRBG stream instead of the process RNG.
PKeyPtr generate_rsa_key_deterministic(int bits, DeterministicRng& rng);

// RSA PKCS#1 v1.5 with SHA-256, detached signature over exact bytes.
std::string sign_sha256(EVP_PKEY* key, std::string_view data);
bool verify_sha256(EVP_PKEY* public_key, std::string_view data, std::string_view signature);

struct CertSpec {
  std::string common_name;
  std::vector<std::string> dns_sans;
  std::vector<std::string> ip_sans;
  bool is_ca = false;
  bool tls_server = false;
  std::uint64_t serial = 1;
  Instant not_before;
  Instant not_after;
};

// issuer_cert == nullptr makes the certificate self-signed (issuer_key must
// then be the subject key).
X509Ptr make_certificate(const CertSpec& spec, EVP_PKEY* subject_key,
                         X509* issuer_cert, EVP_PKEY* issuer_key);

std::string pem_encode_certificate(X509* cert);
std::string pem_encode_chain(const std::vector<X509Ptr>& chain);
std::vector<X509Ptr> pem_decode_chain(std::string_view pem);

std::string pem_encode_private_key(EVP_PKEY* key);
PKeyPtr pem_decode_private_key(std::string_view pem);

PKeyPtr certificate_public_key(X509* cert);

// chain is leaf-first; validates to the given root at the current time.
bool chain_validates(const std::vector<X509Ptr>& chain, X509* trust_root);

// Sensible validity window for testbed certificates (already valid, far
// from expiry), fixed when a DRBG is supplied so seeded chains reproduce.
void default_validity(Instant& not_before, Instant& not_after, bool deterministic);

}  // namespace skillprobe
