#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "skillprobe/clock.hpp"
#include "skillprobe/crypto.hpp"
#include "skillprobe/envelope.hpp"

namespace skillprobe {

struct CloudIdentityParams {
  std::optional<std::uint64_t> seed;  // reproducible fixtures
  int key_bits = 2048;
  std::string locator_host = "127.0.0.1";
  int locator_port = 0;  // 0 = patched when the chain is served
  std::string locator_path = "/chain/cloud.pem";
};

// One identity signs all requests for all skills. That single-key property
// is exactly what makes the cross-skill replay work.
struct CloudIdentity {
  PKeyPtr private_key;
  std::vector<X509Ptr> cert_chain;  // leaf first, root last
  std::string chain_locator;

  EVP_PKEY* leaf_public_key() const { return leaf_public.get(); }
  X509* root() const { return cert_chain.back().get(); }
  std::string root_pem() const { return pem_encode_certificate(cert_chain.back().get()); }

  PKeyPtr leaf_public;
};

CloudIdentity generate_identity(const CloudIdentityParams& params = {});

// Detached signature over the canonical body bytes plus the URL the
// verifier should fetch the certificate chain from.
struct SignedMessage {
  std::string body;
  std::string signature;
  std::string chain_locator;
};

struct SkillRegistration {
  ApplicationId application_id;
  std::string endpoint_url;
  // (intent name, slot names); default intents are always accepted.
  std::vector<std::pair<std::string, std::vector<std::string>>> intent_schema;

  bool knows_intent(std::string_view name) const;
  // First non-default intent in the schema, if any.
  std::optional<std::pair<std::string, std::vector<std::string>>> custom_intent() const;
};

class UnknownIntent : public std::runtime_error {
 public:
  explicit UnknownIntent(const std::string& name)
      : std::runtime_error("intent not in skill schema: " + name) {}
};

class DuplicateApplicationId : public std::runtime_error {
 public:
  explicit DuplicateApplicationId(const std::string& id)
      : std::runtime_error("application-ID already registered: " + id) {}
};

SignedMessage sign_request(const CloudIdentity& identity, const RequestEnvelope& env);

// Serves the identity's PEM chain at its locator path over plain HTTP.
class ChainServer {
 public:
  // port 0 binds any free port and patches the identity's locator.
  ChainServer(CloudIdentity& identity, const std::string& bind_addr, int port = 0);
  ~ChainServer();
  ChainServer(const ChainServer&) = delete;
  ChainServer& operator=(const ChainServer&) = delete;

  int port() const;
  const std::string& locator() const;
  void stop();  // idempotent

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// The assistant cloud: registrations plus the developer text interface
// (the attacker's signing oracle).
class CloudSim {
 public:
  explicit CloudSim(CloudIdentity identity);

  const CloudIdentity& identity() const { return identity_; }

  const SkillRegistration& register_skill(
      ApplicationId app_id, std::string endpoint_url,
      std::vector<std::pair<std::string, std::vector<std::string>>> intent_schema);

  ApplicationId fresh_application_id(const std::string& label);

  // Builds, signs and returns the request the cloud would send for a typed
  // command line. Throws UnknownIntent when the intent is neither default
  // nor declared in the registration's schema.
  SignedMessage text_interface(const SkillRegistration& reg, const std::string& intent,
                               std::vector<Slot> slots, Instant now);

  // Signs arbitrary bytes under the cloud key. Test/vetting hook: the
  // vetting engine operates the cloud, so it can mint probes (for example
  // a signed-but-truncated body) a third party could not.
  SignedMessage sign_raw_body(std::string body) const;

  std::string fresh_request_id();

 private:
  CloudIdentity identity_;
  std::map<std::string, SkillRegistration> registrations_;
  std::uint64_t request_counter_ = 0;
  std::uint64_t app_counter_ = 0;
  mutable std::mutex mutex_;
};

enum class TransportError { None, Tls, Connect, Timeout, Other };
std::string_view to_string(TransportError e);

struct DispatchResult {
  int status = 0;
  std::string body;
  TransportError error = TransportError::None;
  std::string error_detail;

  bool ok() const { return error == TransportError::None; }
};

// Trust posture of an HTTPS client. Vetting validates strictly against a
// root; the scanner accepts any server certificate.
struct TlsTrust {
  std::string root_pem;    // ignored when accept_any
  bool accept_any = false;
  std::map<std::string, std::string> addr_map;  // hostname -> address override

  static TlsTrust strict(std::string root_pem,
                         std::map<std::string, std::string> addr_map = {}) {
    return TlsTrust{std::move(root_pem), false, std::move(addr_map)};
  }
  static TlsTrust insecure() { return TlsTrust{{}, true, {}}; }
};

// POST body bytes verbatim with Signature / SignatureCertChainUrl headers.
DispatchResult dispatch(const SignedMessage& msg, const std::string& endpoint_url,
                        const TlsTrust& trust, int timeout_ms = 5000);

// Plain GET, used for chain fetching.
DispatchResult http_get(const std::string& url, int timeout_ms = 5000);

}  // namespace skillprobe
