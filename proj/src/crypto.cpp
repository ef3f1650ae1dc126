#include "skillprobe/crypto.hpp"

#include <openssl/asn1.h>
#include <openssl/bio.h>
#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/param_build.h>
#include <openssl/pem.h>
#include <openssl/rsa.h>
#include <openssl/sha.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <cstring>


namespace skillprobe {

namespace {

std::string openssl_error_text(const std::string& context) {
  char buf[256];
  ERR_error_string_n(ERR_peek_last_error(), buf, sizeof(buf));
  ERR_clear_error();
  return context + ": " + buf;
}

using BnPtr = std::unique_ptr<BIGNUM, decltype(&BN_free)>;
using BnCtxPtr = std::unique_ptr<BN_CTX, decltype(&BN_CTX_free)>;
using BioPtr = std::unique_ptr<BIO, decltype(&BIO_free)>;

BnPtr new_bn() { return BnPtr(BN_new(), &BN_free); }

}  // namespace

CryptoError::CryptoError(const std::string& what) : std::runtime_error(what) {}

PKeyPtr adopt_pkey(EVP_PKEY* key) { return PKeyPtr(key, &EVP_PKEY_free); }
X509Ptr adopt_x509(X509* cert) { return X509Ptr(cert, &X509_free); }

DeterministicRng::DeterministicRng(std::uint64_t seed) : seed_(seed) {}

void DeterministicRng::fill(unsigned char* out, std::size_t n) {
  while (n > 0) {
    if (block_used_ == 32) {
      unsigned char input[16];
      for (int i = 0; i < 8; ++i) input[i] = static_cast<unsigned char>(seed_ >> (56 - 8 * i));
      for (int i = 0; i < 8; ++i) input[8 + i] = static_cast<unsigned char>(counter_ >> (56 - 8 * i));
      SHA256(input, sizeof(input), block_);
      ++counter_;
      block_used_ = 0;
    }
    const std::size_t take = std::min(n, 32 - block_used_);
    std::memcpy(out, block_ + block_used_, take);
    block_used_ += take;
    out += take;
    n -= take;
  }
}

std::uint64_t DeterministicRng::next_u64() {
  unsigned char buf[8];
  fill(buf, sizeof(buf));
  std::uint64_t v = 0;
  for (unsigned char b : buf) v = (v << 8) | b;
  return v;
}

PKeyPtr generate_rsa_key(int bits) {
  EVP_PKEY* key = EVP_RSA_gen(static_cast<unsigned int>(bits));
  if (!key) throw CryptoError(openssl_error_text("RSA keygen failed"));
  return adopt_pkey(key);
}

namespace {

// Draws odd candidates with the top two bits set from the DRBG and advances
// by 2 until primality holds and gcd(e, p-1) == 1 (e = 65537 is prime, so it
// suffices that p mod e != 1).
BnPtr deterministic_prime(int bits, DeterministicRng& rng, BN_CTX* ctx) {
  const std::size_t nbytes = static_cast<std::size_t>(bits) / 8;
  std::vector<unsigned char> buf(nbytes);
  rng.fill(buf.data(), nbytes);
  buf[0] |= 0xC0;
  buf[nbytes - 1] |= 0x01;

  BnPtr candidate(BN_bin2bn(buf.data(), static_cast<int>(nbytes), nullptr), &BN_free);
  if (!candidate) throw CryptoError("BN_bin2bn failed");
  BnPtr two = new_bn();
  BN_set_word(two.get(), 2);
  BnPtr remainder = new_bn();

  for (;;) {
    const int is_prime = BN_check_prime(candidate.get(), ctx, nullptr);
    if (is_prime < 0) throw CryptoError(openssl_error_text("primality test failed"));
    if (is_prime == 1) {
      // p mod 65537 != 1  <=>  65537 does not divide p-1
      BnPtr e = new_bn();
      BN_set_word(e.get(), RSA_F4);
      if (!BN_mod(remainder.get(), candidate.get(), e.get(), ctx)) {
        throw CryptoError("BN_mod failed");
      }
      if (!BN_is_one(remainder.get())) return candidate;
    }
    if (!BN_add(candidate.get(), candidate.get(), two.get())) {
      throw CryptoError("BN_add failed");
    }
  }
}

}  // namespace

PKeyPtr generate_rsa_key_deterministic(int bits, DeterministicRng& rng) {
  if (bits < 512 || bits % 128 != 0) {
    throw CryptoError("deterministic RSA keygen requires bits >= 512, multiple of 128");
  }
  BnCtxPtr ctx(BN_CTX_new(), &BN_CTX_free);
  BnPtr p = deterministic_prime(bits / 2, rng, ctx.get());
  BnPtr q = deterministic_prime(bits / 2, rng, ctx.get());
  while (BN_cmp(p.get(), q.get()) == 0) {
    q = deterministic_prime(bits / 2, rng, ctx.get());
  }
  if (BN_cmp(p.get(), q.get()) < 0) std::swap(p, q);  // CRT expects p > q

  BnPtr e = new_bn();
  BN_set_word(e.get(), RSA_F4);
  BnPtr n = new_bn(), p1 = new_bn(), q1 = new_bn(), lambda = new_bn(), gcd = new_bn();
  BnPtr d = new_bn(), dp = new_bn(), dq = new_bn(), qinv = new_bn(), tmp = new_bn();
  BnPtr one = new_bn();
  BN_one(one.get());

  if (!BN_mul(n.get(), p.get(), q.get(), ctx.get()) ||
      !BN_sub(p1.get(), p.get(), one.get()) || !BN_sub(q1.get(), q.get(), one.get()) ||
      !BN_gcd(gcd.get(), p1.get(), q1.get(), ctx.get()) ||
      !BN_mul(tmp.get(), p1.get(), q1.get(), ctx.get()) ||
      !BN_div(lambda.get(), nullptr, tmp.get(), gcd.get(), ctx.get())) {
    throw CryptoError("RSA parameter arithmetic failed");
  }
  if (!BN_mod_inverse(d.get(), e.get(), lambda.get(), ctx.get()) ||
      !BN_mod(dp.get(), d.get(), p1.get(), ctx.get()) ||
      !BN_mod(dq.get(), d.get(), q1.get(), ctx.get()) ||
      !BN_mod_inverse(qinv.get(), q.get(), p.get(), ctx.get())) {
    throw CryptoError("RSA CRT parameter computation failed");
  }

  std::unique_ptr<OSSL_PARAM_BLD, decltype(&OSSL_PARAM_BLD_free)> bld(
      OSSL_PARAM_BLD_new(), &OSSL_PARAM_BLD_free);
  if (!bld || !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_N, n.get()) ||
      !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_E, e.get()) ||
      !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_D, d.get()) ||
      !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_FACTOR1, p.get()) ||
      !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_FACTOR2, q.get()) ||
      !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_EXPONENT1, dp.get()) ||
      !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_EXPONENT2, dq.get()) ||
      !OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_COEFFICIENT1, qinv.get())) {
    throw CryptoError("OSSL_PARAM_BLD failed");
  }
  std::unique_ptr<OSSL_PARAM, decltype(&OSSL_PARAM_free)> params(
      OSSL_PARAM_BLD_to_param(bld.get()), &OSSL_PARAM_free);

  std::unique_ptr<EVP_PKEY_CTX, decltype(&EVP_PKEY_CTX_free)> pctx(
      EVP_PKEY_CTX_new_from_name(nullptr, "RSA", nullptr), &EVP_PKEY_CTX_free);
  EVP_PKEY* key = nullptr;
  if (!pctx || EVP_PKEY_fromdata_init(pctx.get()) <= 0 ||
      EVP_PKEY_fromdata(pctx.get(), &key, EVP_PKEY_KEYPAIR, params.get()) <= 0) {
    throw CryptoError(openssl_error_text("EVP_PKEY_fromdata failed"));
  }
  return adopt_pkey(key);
}

std::string sign_sha256(EVP_PKEY* key, std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, EVP_sha256(), nullptr, key) <= 0) {
    throw CryptoError(openssl_error_text("DigestSignInit failed"));
  }
  std::size_t sig_len = 0;
  if (EVP_DigestSign(ctx.get(), nullptr, &sig_len,
                     reinterpret_cast<const unsigned char*>(data.data()),
                     data.size()) <= 0) {
    throw CryptoError(openssl_error_text("DigestSign sizing failed"));
  }
  std::string sig(sig_len, '\0');
  if (EVP_DigestSign(ctx.get(), reinterpret_cast<unsigned char*>(sig.data()), &sig_len,
                     reinterpret_cast<const unsigned char*>(data.data()),
                     data.size()) <= 0) {
    throw CryptoError(openssl_error_text("DigestSign failed"));
  }
  sig.resize(sig_len);
  return sig;
}

bool verify_sha256(EVP_PKEY* public_key, std::string_view data, std::string_view signature) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  if (!ctx ||
      EVP_DigestVerifyInit(ctx.get(), nullptr, EVP_sha256(), nullptr, public_key) <= 0) {
    ERR_clear_error();
    return false;
  }
  const int rc = EVP_DigestVerify(
      ctx.get(), reinterpret_cast<const unsigned char*>(signature.data()),
      signature.size(), reinterpret_cast<const unsigned char*>(data.data()), data.size());
  ERR_clear_error();
  return rc == 1;
}

namespace {

void add_extension(X509* cert, X509* issuer, int nid, const char* value) {
  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, issuer ? issuer : cert, cert, nullptr, nullptr, 0);
  X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value);
  if (!ext) throw CryptoError(openssl_error_text("extension creation failed"));
  X509_add_ext(cert, ext, -1);
  X509_EXTENSION_free(ext);
}

}  // namespace

X509Ptr make_certificate(const CertSpec& spec, EVP_PKEY* subject_key,
                         X509* issuer_cert, EVP_PKEY* issuer_key) {
  X509Ptr cert = adopt_x509(X509_new());
  if (!cert) throw CryptoError("X509_new failed");
  X509_set_version(cert.get(), 2);

  BnPtr serial = new_bn();
  BN_set_word(serial.get(), spec.serial);
  ASN1_INTEGER* serial_asn1 = X509_get_serialNumber(cert.get());
  BN_to_ASN1_INTEGER(serial.get(), serial_asn1);

  ASN1_TIME_set(X509_getm_notBefore(cert.get()),
                static_cast<time_t>(spec.not_before.epoch_seconds));
  ASN1_TIME_set(X509_getm_notAfter(cert.get()),
                static_cast<time_t>(spec.not_after.epoch_seconds));

  X509_NAME* name = X509_get_subject_name(cert.get());
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                             reinterpret_cast<const unsigned char*>(spec.common_name.c_str()),
                             -1, -1, 0);
  X509_set_issuer_name(cert.get(),
                       issuer_cert ? X509_get_subject_name(issuer_cert) : name);
  if (X509_set_pubkey(cert.get(), subject_key) != 1) {
    throw CryptoError("X509_set_pubkey failed");
  }

  add_extension(cert.get(), issuer_cert, NID_basic_constraints,
                spec.is_ca ? "critical,CA:TRUE" : "critical,CA:FALSE");
  add_extension(cert.get(), issuer_cert, NID_key_usage,
                spec.is_ca ? "critical,keyCertSign,cRLSign" : "critical,digitalSignature,keyEncipherment");
  if (spec.tls_server) {
    add_extension(cert.get(), issuer_cert, NID_ext_key_usage, "serverAuth");
  }
  if (!spec.dns_sans.empty() || !spec.ip_sans.empty()) {
    std::string san;
    for (const auto& dns : spec.dns_sans) {
      if (!san.empty()) san += ",";
      san += "DNS:" + dns;
    }
    for (const auto& ip : spec.ip_sans) {
      if (!san.empty()) san += ",";
      san += "IP:" + ip;
    }
    add_extension(cert.get(), issuer_cert, NID_subject_alt_name, san.c_str());
  }
  add_extension(cert.get(), issuer_cert, NID_subject_key_identifier, "hash");
  if (issuer_cert) {
    add_extension(cert.get(), issuer_cert, NID_authority_key_identifier, "keyid");
  }

  if (X509_sign(cert.get(), issuer_key, EVP_sha256()) == 0) {
    throw CryptoError(openssl_error_text("X509_sign failed"));
  }
  return cert;
}

std::string pem_encode_certificate(X509* cert) {
  BioPtr bio(BIO_new(BIO_s_mem()), &BIO_free);
  if (!bio || PEM_write_bio_X509(bio.get(), cert) != 1) {
    throw CryptoError("PEM encode failed");
  }
  char* data = nullptr;
  const long len = BIO_get_mem_data(bio.get(), &data);
  return std::string(data, static_cast<std::size_t>(len));
}

std::string pem_encode_chain(const std::vector<X509Ptr>& chain) {
  std::string out;
  for (const auto& cert : chain) out += pem_encode_certificate(cert.get());
  return out;
}

std::vector<X509Ptr> pem_decode_chain(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())), &BIO_free);
  std::vector<X509Ptr> chain;
  for (;;) {
    X509* cert = PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr);
    if (!cert) break;
    chain.push_back(adopt_x509(cert));
  }
  ERR_clear_error();
  return chain;
}

std::string pem_encode_private_key(EVP_PKEY* key) {
  BioPtr bio(BIO_new(BIO_s_mem()), &BIO_free);
  if (!bio ||
      PEM_write_bio_PrivateKey(bio.get(), key, nullptr, nullptr, 0, nullptr, nullptr) != 1) {
    throw CryptoError("PEM key encode failed");
  }
  char* data = nullptr;
  const long len = BIO_get_mem_data(bio.get(), &data);
  return std::string(data, static_cast<std::size_t>(len));
}

PKeyPtr pem_decode_private_key(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())), &BIO_free);
  EVP_PKEY* key = PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr);
  if (!key) throw CryptoError(openssl_error_text("PEM key decode failed"));
  return adopt_pkey(key);
}

PKeyPtr certificate_public_key(X509* cert) {
  EVP_PKEY* key = X509_get_pubkey(cert);
  if (!key) throw CryptoError("certificate has no public key");
  return adopt_pkey(key);
}

bool chain_validates(const std::vector<X509Ptr>& chain, X509* trust_root) {
  if (chain.empty() || !trust_root) return false;
  std::unique_ptr<X509_STORE, decltype(&X509_STORE_free)> store(X509_STORE_new(),
                                                                &X509_STORE_free);
  if (!store || X509_STORE_add_cert(store.get(), trust_root) != 1) return false;

  std::unique_ptr<STACK_OF(X509), void (*)(STACK_OF(X509)*)> untrusted(
      sk_X509_new_null(), [](STACK_OF(X509)* sk) { sk_X509_free(sk); });
  for (std::size_t i = 1; i < chain.size(); ++i) {
    sk_X509_push(untrusted.get(), chain[i].get());
  }

  std::unique_ptr<X509_STORE_CTX, decltype(&X509_STORE_CTX_free)> ctx(
      X509_STORE_CTX_new(), &X509_STORE_CTX_free);
  if (!ctx ||
      X509_STORE_CTX_init(ctx.get(), store.get(), chain[0].get(), untrusted.get()) != 1) {
    return false;
  }
  const bool ok = X509_verify_cert(ctx.get()) == 1;
  ERR_clear_error();
  return ok;
}

void default_validity(Instant& not_before, Instant& not_after, bool deterministic) {
  if (deterministic) {
    not_before = *parse_rfc3339("2020-01-01T00:00:00Z");
    not_after = *parse_rfc3339("2045-01-01T00:00:00Z");
  } else {
    const Instant now = now_utc();
    not_before = now - 24 * 3600;
    not_after = now + static_cast<std::int64_t>(10) * 365 * 24 * 3600;
  }
}

}  // namespace skillprobe
