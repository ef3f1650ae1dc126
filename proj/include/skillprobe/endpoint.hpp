#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skillprobe/cloudsim.hpp"
#include "skillprobe/envelope.hpp"

namespace skillprobe {

struct ChainLocatorRules {
  std::vector<std::string> allowed_schemes = {"https", "http"};  // http: testbed chain server
  std::vector<std::string> allowed_hosts = {"127.0.0.1", "localhost"};
  std::string required_path_prefix = "/chain/";
};

struct ValidationPolicy {
  bool verify_signature = true;
  bool verify_app_id = true;
  bool verify_timestamp = true;
  std::int64_t timestamp_tolerance_s = 150;
  ChainLocatorRules locator_rules;
  // Optional extension, not part of the zoo: remember request ids and
  // reject byte-identical replays.
  bool track_request_ids = false;
};

// The six implementations of the vulnerable zoo.
enum class EndpointMode { Valid, IgnoreAppId, IgnoreTimestamp, AcceptAll, RejectAll, Offline };

std::string_view to_string(EndpointMode mode);
std::optional<EndpointMode> endpoint_mode_from_string(std::string_view name);

// Defined for the four verifying/accepting modes; RejectAll drops
// everything before verification and Offline never listens.
ValidationPolicy policy_for(EndpointMode mode);

enum class RejectReason {
  BadSignature,
  ChainFetchFailed,
  BadChainLocator,
  UntrustedChain,
  AppIdMismatch,
  StaleTimestamp,
  FutureTimestamp,
  MalformedBody,
  DuplicateRequestId,  // only with track_request_ids
};

std::string_view to_string(RejectReason reason);
std::optional<RejectReason> reject_reason_from_string(std::string_view name);

struct VerificationOutcome {
  bool accepted = false;
  RejectReason reason = RejectReason::BadSignature;  // meaningful only when rejected

  static VerificationOutcome accept() { return {true, RejectReason::BadSignature}; }
  static VerificationOutcome reject(RejectReason r) { return {false, r}; }
};

struct RequestHeaders {
  std::string signature_b64;   // empty when the header is absent
  std::string chain_locator;
};

// Fetches and memoizes certificate chains per locator string (successes
// only). The fetcher is injectable for tests.
class ChainCache {
 public:
  using Fetcher = std::function<std::optional<std::string>(const std::string& url)>;

  ChainCache();
  explicit ChainCache(Fetcher fetcher);

  std::optional<std::string> fetch_pem(const std::string& locator);

 private:
  Fetcher fetcher_;
  std::map<std::string, std::string> cache_;
  std::mutex mutex_;
};

// Tracks seen request ids for the optional replay-rejection extension.
class RequestIdLog {
 public:
  // Returns false if the id was already present.
  bool insert(const std::string& request_id);

 private:
  std::set<std::string> seen_;
  std::mutex mutex_;
};

// The full cloud-authentication check. Total over arbitrary bytes and
// headers; every failure is a Reject outcome carrying the first failed
// check in fixed order: locator -> chain -> signature -> body parse ->
// app-ID -> timestamp.
VerificationOutcome verify_request(const ValidationPolicy& policy,
                                   const RequestHeaders& headers, std::string_view body,
                                   const ApplicationId& expected_app_id, Instant now,
                                   X509* trust_root, ChainCache& chains,
                                   RequestIdLog* request_ids = nullptr);

// --- Skill business logic -------------------------------------------------

struct EndpointState {
  std::string custom_intent = "LookupIntent";
  bool injection_demo = false;
};

ResponseEnvelope handle_intent(const EndpointState& state, const RequestEnvelope& env);

struct InjectionRow {
  std::string id;
  std::string value;
};

const std::vector<InjectionRow>& injection_fixture_table();

struct InjectionResult {
  std::string composed_query;
  std::string speech;
  bool ok = false;
};

// Deliberately naive: concatenates the raw slot value into the query and
// evaluates " OR "-separated clauses against the fixture table.
InjectionResult injection_lookup(std::string_view slot_value);

// --- TLS profiles and the HTTPS server -------------------------------------

enum class TlsProfileKind { Standard, Wildcard, SelfSigned };

std::string_view to_string(TlsProfileKind kind);
std::optional<TlsProfileKind> tls_profile_from_string(std::string_view name);

struct TlsMaterial {
  TlsProfileKind kind = TlsProfileKind::SelfSigned;
  std::string cert_pem;
  std::string key_pem;
};

struct TlsAuthority {
  std::string cert_pem;
  std::string key_pem;
};

class TlsConfigError : public std::runtime_error {
 public:
  explicit TlsConfigError(const std::string& what) : std::runtime_error(what) {}
};

class BindError : public std::runtime_error {
 public:
  explicit BindError(const std::string& what) : std::runtime_error(what) {}
};

TlsAuthority make_tls_authority(const std::string& common_name);

// Standard: SAN is exactly `host`; Wildcard: SAN is `*.<parent of host>`
// (host must have at least two labels); SelfSigned: exact SAN but chains to
// no trusted root. IPv4 hosts get IP SANs.
TlsMaterial make_tls_material(TlsProfileKind kind, const std::string& host,
                              const TlsAuthority* authority);

struct EndpointConfig {
  EndpointMode mode = EndpointMode::Valid;
  ApplicationId expected_app_id;
  std::string path = "/alexa";
  std::string trust_root_pem;  // signing root the endpoint trusts
  ChainLocatorRules locator_rules;
  std::int64_t timestamp_tolerance_s = 150;
  EndpointState state;
  bool track_request_ids = false;
  Clock clock;  // defaults to now_utc
};

// One listener of the zoo: HTTPS POST at `path`, verify per mode policy,
// then answer the intent. Rejections are status 400 with
// {"rejected":"<reason>"}; RejectAll is status 403 to everything.
class EndpointServer {
 public:
  EndpointServer(EndpointConfig config, TlsMaterial tls, const std::string& bind_ip,
                 int port = 0);
  ~EndpointServer();
  EndpointServer(const EndpointServer&) = delete;
  EndpointServer& operator=(const EndpointServer&) = delete;

  int port() const;
  // URL under the given public host name (which tests map back to the bind
  // address via TlsTrust::addr_map).
  std::string url(const std::string& host) const;
  std::size_t request_count() const;
  void stop();  // idempotent

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace skillprobe
