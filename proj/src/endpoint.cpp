#include "skillprobe/endpoint.hpp"

#include <httplib.h>
#include <openssl/x509.h>

#include <atomic>
#include <cctype>
#include <charconv>
#include <random>
#include <thread>

#include "skillprobe/encoding.hpp"

namespace skillprobe {

std::string_view to_string(EndpointMode mode) {
  switch (mode) {
    case EndpointMode::Valid: return "valid";
    case EndpointMode::IgnoreAppId: return "ignore-app-id";
    case EndpointMode::IgnoreTimestamp: return "ignore-timestamp";
    case EndpointMode::AcceptAll: return "accept-all";
    case EndpointMode::RejectAll: return "reject-all";
    case EndpointMode::Offline: return "offline";
  }
  return "valid";
}

std::optional<EndpointMode> endpoint_mode_from_string(std::string_view name) {
  static const std::pair<std::string_view, EndpointMode> kModes[] = {
      {"valid", EndpointMode::Valid},
      {"ignore-app-id", EndpointMode::IgnoreAppId},
      {"ignore-timestamp", EndpointMode::IgnoreTimestamp},
      {"accept-all", EndpointMode::AcceptAll},
      {"reject-all", EndpointMode::RejectAll},
      {"offline", EndpointMode::Offline},
  };
  for (const auto& [text, mode] : kModes) {
    if (text == name) return mode;
  }
  return std::nullopt;
}

ValidationPolicy policy_for(EndpointMode mode) {
  ValidationPolicy policy;
  switch (mode) {
    case EndpointMode::Valid:
      break;
    case EndpointMode::IgnoreAppId:
      policy.verify_app_id = false;
      break;
    case EndpointMode::IgnoreTimestamp:
      policy.verify_timestamp = false;
      break;
    case EndpointMode::AcceptAll:
      policy.verify_signature = false;
      policy.verify_app_id = false;
      policy.verify_timestamp = false;
      break;
    case EndpointMode::RejectAll:
    case EndpointMode::Offline:
      throw std::invalid_argument("mode has no validation policy");
  }
  return policy;
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::BadSignature: return "BadSignature";
    case RejectReason::ChainFetchFailed: return "ChainFetchFailed";
    case RejectReason::BadChainLocator: return "BadChainLocator";
    case RejectReason::UntrustedChain: return "UntrustedChain";
    case RejectReason::AppIdMismatch: return "AppIdMismatch";
    case RejectReason::StaleTimestamp: return "StaleTimestamp";
    case RejectReason::FutureTimestamp: return "FutureTimestamp";
    case RejectReason::MalformedBody: return "MalformedBody";
    case RejectReason::DuplicateRequestId: return "DuplicateRequestId";
  }
  return "BadSignature";
}

std::optional<RejectReason> reject_reason_from_string(std::string_view name) {
  static constexpr RejectReason kAll[] = {
      RejectReason::BadSignature,    RejectReason::ChainFetchFailed,
      RejectReason::BadChainLocator, RejectReason::UntrustedChain,
      RejectReason::AppIdMismatch,   RejectReason::StaleTimestamp,
      RejectReason::FutureTimestamp, RejectReason::MalformedBody,
      RejectReason::DuplicateRequestId,
  };
  for (RejectReason r : kAll) {
    if (to_string(r) == name) return r;
  }
  return std::nullopt;
}

ChainCache::ChainCache()
    : fetcher_([](const std::string& url) -> std::optional<std::string> {
        DispatchResult res = http_get(url, 3000);
        if (!res.ok() || res.status != 200 || res.body.empty()) return std::nullopt;
        return res.body;
      }) {}

ChainCache::ChainCache(Fetcher fetcher) : fetcher_(std::move(fetcher)) {}

std::optional<std::string> ChainCache::fetch_pem(const std::string& locator) {
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(locator);
    if (it != cache_.end()) return it->second;
  }
  auto fetched = fetcher_(locator);
  if (!fetched) return std::nullopt;
  std::lock_guard lock(mutex_);
  cache_.emplace(locator, *fetched);
  return fetched;
}

bool RequestIdLog::insert(const std::string& request_id) {
  std::lock_guard lock(mutex_);
  return seen_.insert(request_id).second;
}

namespace {

bool locator_satisfies(const ChainLocatorRules& rules, const std::string& locator) {
  const auto parsed = parse_url(locator);
  if (!parsed) return false;
  bool scheme_ok = false;
  for (const auto& scheme : rules.allowed_schemes) scheme_ok = scheme_ok || scheme == parsed->scheme;
  if (!scheme_ok) return false;
  bool host_ok = false;
  for (const auto& host : rules.allowed_hosts) host_ok = host_ok || host == parsed->host;
  if (!host_ok) return false;
  return parsed->path.rfind(rules.required_path_prefix, 0) == 0;
}

}  // namespace

VerificationOutcome verify_request(const ValidationPolicy& policy,
                                   const RequestHeaders& headers, std::string_view body,
                                   const ApplicationId& expected_app_id, Instant now,
                                   X509* trust_root, ChainCache& chains,
                                   RequestIdLog* request_ids) {
  if (policy.verify_signature) {
    if (!locator_satisfies(policy.locator_rules, headers.chain_locator)) {
      return VerificationOutcome::reject(RejectReason::BadChainLocator);
    }
    auto chain_pem = chains.fetch_pem(headers.chain_locator);
    if (!chain_pem) return VerificationOutcome::reject(RejectReason::ChainFetchFailed);
    auto chain = pem_decode_chain(*chain_pem);
    if (chain.empty()) return VerificationOutcome::reject(RejectReason::ChainFetchFailed);
    if (!chain_validates(chain, trust_root)) {
      return VerificationOutcome::reject(RejectReason::UntrustedChain);
    }
    auto signature = base64_decode(headers.signature_b64);
    if (!signature || signature->empty()) {
      return VerificationOutcome::reject(RejectReason::BadSignature);
    }
    PKeyPtr leaf_key = certificate_public_key(chain.front().get());
    if (!verify_sha256(leaf_key.get(), body, *signature)) {
      return VerificationOutcome::reject(RejectReason::BadSignature);
    }
  }

  RequestEnvelope env;
  try {
    env = parse_request(body);
  } catch (const ParseError&) {
    return VerificationOutcome::reject(RejectReason::MalformedBody);
  }

  if (policy.verify_app_id && !(env.application_id == expected_app_id)) {
    return VerificationOutcome::reject(RejectReason::AppIdMismatch);
  }

  if (policy.verify_timestamp) {
    const std::int64_t age = now - env.timestamp;
    if (age > policy.timestamp_tolerance_s) {
      return VerificationOutcome::reject(RejectReason::StaleTimestamp);
    }
    if (-age > policy.timestamp_tolerance_s) {
      return VerificationOutcome::reject(RejectReason::FutureTimestamp);
    }
  }

  if (policy.track_request_ids && request_ids && !request_ids->insert(env.request_id)) {
    return VerificationOutcome::reject(RejectReason::DuplicateRequestId);
  }

  return VerificationOutcome::accept();
}

ResponseEnvelope handle_intent(const EndpointState& state, const RequestEnvelope& env) {
  ResponseEnvelope res;
  if (env.intent == "LaunchRequest") {
    res.speech_text = "Welcome to the test skill.";
  } else if (env.intent == "StopIntent") {
    res.speech_text = "Goodbye.";
    res.should_end_session = true;
  } else if (env.intent == "CancelIntent") {
    res.speech_text = "Cancelled.";
    res.should_end_session = true;
  } else if (env.intent == "FallbackIntent") {
    res.speech_text = "Sorry, I did not understand that.";
  } else if (env.intent == "HelpIntent") {
    res.speech_text = "You can ask me to look up a number.";
  } else if (env.intent == "NavigateHomeIntent") {
    res.speech_text = "Taking you home.";
  } else if (env.intent == state.custom_intent) {
    std::string value;
    for (const auto& slot : env.slots) {
      if (slot.name == "num") value = slot.value;
    }
    if (value.empty() && !env.slots.empty()) value = env.slots.front().value;
    if (state.injection_demo) {
      InjectionResult lookup = injection_lookup(value);
      res.speech_text = lookup.speech;
      res.debug_query = lookup.composed_query;
    } else {
      res.speech_text = "You asked for " + value + ".";
    }
  } else {
    res.speech_text = "Sorry, I cannot do that yet.";
  }
  return res;
}

const std::vector<InjectionRow>& injection_fixture_table() {
  static const std::vector<InjectionRow> kTable = {
      {"1", "alpha"},
      {"2", "bravo"},
      {"7", "charlie"},
  };
  return kTable;
}

namespace {

std::optional<long> parse_int(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

// Clause forms: "<int>" (matches rows whose id equals it) or "<int>=<int>"
// (a literal comparison, true for every row when both sides are equal).
struct Clause {
  bool tautology = false;
  long id_equals = 0;
};

std::optional<std::vector<Clause>> parse_clauses(std::string_view expr) {
  std::vector<Clause> clauses;
  std::size_t start = 0;
  while (start <= expr.size()) {
    std::size_t split = expr.find(" OR ", start);
    std::string_view token =
        split == std::string_view::npos ? expr.substr(start) : expr.substr(start, split - start);
    const std::size_t eq = token.find('=');
    Clause clause;
    if (eq != std::string_view::npos) {
      auto lhs = parse_int(token.substr(0, eq));
      auto rhs = parse_int(token.substr(eq + 1));
      if (!lhs || !rhs) return std::nullopt;
      if (*lhs != *rhs) {
        clause.tautology = false;
        clause.id_equals = -1;  // matches nothing
      } else {
        clause.tautology = true;
      }
    } else {
      auto value = parse_int(token);
      if (!value) return std::nullopt;
      clause.id_equals = *value;
    }
    clauses.push_back(clause);
    if (split == std::string_view::npos) break;
    start = split + 4;
  }
  return clauses;
}

}  // namespace

InjectionResult injection_lookup(std::string_view slot_value) {
  InjectionResult out;
  out.composed_query = "SELECT val FROM t WHERE id = " + std::string(slot_value);

  auto clauses = parse_clauses(slot_value);
  if (!clauses || clauses->empty()) {
    out.speech = "Lookup failed: could not evaluate the query.";
    return out;
  }

  std::vector<std::string> hits;
  for (const auto& row : injection_fixture_table()) {
    const long row_id = *parse_int(row.id);
    for (const auto& clause : *clauses) {
      if (clause.tautology || clause.id_equals == row_id) {
        hits.push_back(row.value);
        break;
      }
    }
  }
  if (hits.empty()) {
    out.speech = "No rows matched.";
    out.ok = true;
    return out;
  }
  out.speech = "Rows:";
  for (const auto& hit : hits) out.speech += " " + hit;
  out.ok = true;
  return out;
}

std::string_view to_string(TlsProfileKind kind) {
  switch (kind) {
    case TlsProfileKind::Standard: return "standard";
    case TlsProfileKind::Wildcard: return "wildcard";
    case TlsProfileKind::SelfSigned: return "self-signed";
  }
  return "standard";
}

std::optional<TlsProfileKind> tls_profile_from_string(std::string_view name) {
  if (name == "standard") return TlsProfileKind::Standard;
  if (name == "wildcard") return TlsProfileKind::Wildcard;
  if (name == "self-signed" || name == "selfsigned") return TlsProfileKind::SelfSigned;
  return std::nullopt;
}

TlsAuthority make_tls_authority(const std::string& common_name) {
  PKeyPtr key = generate_rsa_key(2048);
  CertSpec spec;
  spec.common_name = common_name;
  spec.is_ca = true;
  std::random_device rd;
  spec.serial = (static_cast<std::uint64_t>(rd()) << 32 | rd()) >> 1;
  default_validity(spec.not_before, spec.not_after, false);
  X509Ptr cert = make_certificate(spec, key.get(), nullptr, key.get());
  return {pem_encode_certificate(cert.get()), pem_encode_private_key(key.get())};
}

namespace {

bool looks_like_ipv4(const std::string& host) {
  int dots = 0;
  for (char c : host) {
    if (c == '.') ++dots;
    else if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return dots == 3;
}

}  // namespace

TlsMaterial make_tls_material(TlsProfileKind kind, const std::string& host,
                              const TlsAuthority* authority) {
  PKeyPtr key = generate_rsa_key(2048);
  CertSpec spec;
  spec.common_name = host;
  spec.tls_server = true;
  std::random_device rd;
  spec.serial = (static_cast<std::uint64_t>(rd()) << 32 | rd()) >> 1;
  default_validity(spec.not_before, spec.not_after, false);

  if (looks_like_ipv4(host)) {
    if (kind == TlsProfileKind::Wildcard) {
      throw TlsConfigError("wildcard profile needs a DNS host, got " + host);
    }
    spec.ip_sans = {host};
  } else if (kind == TlsProfileKind::Wildcard) {
    const auto dot = host.find('.');
    if (dot == std::string::npos || dot + 1 >= host.size()) {
      throw TlsConfigError("wildcard profile needs a multi-label host, got " + host);
    }
    spec.dns_sans = {"*." + host.substr(dot + 1)};
  } else {
    spec.dns_sans = {host};
  }

  TlsMaterial out;
  out.kind = kind;
  out.key_pem = pem_encode_private_key(key.get());
  if (kind == TlsProfileKind::SelfSigned) {
    X509Ptr cert = make_certificate(spec, key.get(), nullptr, key.get());
    out.cert_pem = pem_encode_certificate(cert.get());
    return out;
  }
  if (!authority) throw TlsConfigError("standard/wildcard profile needs a TLS authority");
  PKeyPtr ca_key = pem_decode_private_key(authority->key_pem);
  auto ca_chain = pem_decode_chain(authority->cert_pem);
  if (ca_chain.empty()) throw TlsConfigError("TLS authority certificate is unreadable");
  X509Ptr cert = make_certificate(spec, key.get(), ca_chain.front().get(), ca_key.get());
  out.cert_pem = pem_encode_certificate(cert.get());
  return out;
}

struct EndpointServer::Impl {
  EndpointConfig config;
  std::vector<X509Ptr> trust_chain;  // pinned root
  std::unique_ptr<httplib::SSLServer> server;
  std::thread thread;
  std::atomic<bool> stopped{false};
  std::atomic<std::size_t> requests{0};
  ChainCache chains;
  RequestIdLog request_ids;
  int port = 0;
  X509Ptr cert;
  PKeyPtr key;
};

EndpointServer::EndpointServer(EndpointConfig config, TlsMaterial tls,
                               const std::string& bind_ip, int port)
    : impl_(std::make_unique<Impl>()) {
  if (config.mode == EndpointMode::Offline) {
    throw std::invalid_argument("offline mode is represented by not starting a server");
  }
  if (!config.clock) config.clock = now_utc;
  impl_->config = std::move(config);

  auto certs = pem_decode_chain(tls.cert_pem);
  if (certs.empty()) throw TlsConfigError("endpoint certificate is unreadable");
  impl_->cert = certs.front();
  impl_->key = pem_decode_private_key(tls.key_pem);
  impl_->server =
      std::make_unique<httplib::SSLServer>(impl_->cert.get(), impl_->key.get());
  if (!impl_->server->is_valid()) throw TlsConfigError("TLS server setup failed");

  if (!impl_->config.trust_root_pem.empty()) {
    impl_->trust_chain = pem_decode_chain(impl_->config.trust_root_pem);
  }

  Impl* impl = impl_.get();
  impl_->server->Post(impl_->config.path, [impl](const httplib::Request& req,
                                                 httplib::Response& res) {
    impl->requests.fetch_add(1);
    const EndpointConfig& cfg = impl->config;

    if (cfg.mode == EndpointMode::RejectAll) {
      res.status = 403;
      res.set_content("{\"rejected\":\"RejectAll\"}", "application/json");
      return;
    }

    if (cfg.mode != EndpointMode::AcceptAll) {
      ValidationPolicy policy = policy_for(cfg.mode);
      policy.timestamp_tolerance_s = cfg.timestamp_tolerance_s;
      policy.locator_rules = cfg.locator_rules;
      policy.track_request_ids = cfg.track_request_ids;
      RequestHeaders headers;
      headers.signature_b64 = req.get_header_value("Signature");
      headers.chain_locator = req.get_header_value("SignatureCertChainUrl");
      X509* root = impl->trust_chain.empty() ? nullptr : impl->trust_chain.front().get();
      VerificationOutcome outcome =
          verify_request(policy, headers, req.body, cfg.expected_app_id, cfg.clock(), root,
                         impl->chains, &impl->request_ids);
      if (!outcome.accepted) {
        res.status = 400;
        res.set_content(
            "{\"rejected\":\"" + std::string(to_string(outcome.reason)) + "\"}",
            "application/json");
        return;
      }
    }

    ResponseEnvelope response;
    try {
      response = handle_intent(cfg.state, parse_request(req.body));
    } catch (const ParseError&) {
      // Accept-all endpoints answer even garbage with a legitimate response.
      response.speech_text = "Welcome to the test skill.";
    }
    res.status = 200;
    res.set_content(serialize(response), "application/json");
  });

  if (port == 0) {
    impl_->port = impl_->server->bind_to_any_port(bind_ip);
    if (impl_->port <= 0) throw BindError("endpoint bind failed on " + bind_ip);
  } else {
    if (!impl_->server->bind_to_port(bind_ip, port)) {
      throw BindError("endpoint bind failed on " + bind_ip + ":" + std::to_string(port));
    }
    impl_->port = port;
  }
  impl_->thread = std::thread([impl] { impl->server->listen_after_bind(); });
  impl_->server->wait_until_ready();
}

EndpointServer::~EndpointServer() { stop(); }

int EndpointServer::port() const { return impl_->port; }

std::string EndpointServer::url(const std::string& host) const {
  return "https://" + host + ":" + std::to_string(impl_->port) + impl_->config.path;
}

std::size_t EndpointServer::request_count() const { return impl_->requests.load(); }

void EndpointServer::stop() {
  if (impl_->stopped.exchange(true)) return;
  impl_->server->stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace skillprobe
