#include "skillprobe/cloudsim.hpp"

#include <httplib.h>

#include <atomic>
#include <random>
#include <thread>

#include "skillprobe/encoding.hpp"

namespace skillprobe {

CloudIdentity generate_identity(const CloudIdentityParams& params) {
  CloudIdentity id;
  PKeyPtr root_key, leaf_key;
  std::uint64_t root_serial = 1, leaf_serial = 2;
  if (params.seed) {
    DeterministicRng rng(*params.seed);
    root_key = generate_rsa_key_deterministic(params.key_bits, rng);
    leaf_key = generate_rsa_key_deterministic(params.key_bits, rng);
    root_serial = rng.next_u64() >> 1;
    leaf_serial = rng.next_u64() >> 1;
  } else {
    root_key = generate_rsa_key(params.key_bits);
    leaf_key = generate_rsa_key(params.key_bits);
    std::random_device rd;
    root_serial = (static_cast<std::uint64_t>(rd()) << 32 | rd()) >> 1;
    leaf_serial = (static_cast<std::uint64_t>(rd()) << 32 | rd()) >> 1;
  }

  CertSpec root_spec;
  root_spec.common_name = "Skillprobe Testbed Signing Root";
  root_spec.is_ca = true;
  root_spec.serial = root_serial;
  default_validity(root_spec.not_before, root_spec.not_after, params.seed.has_value());
  X509Ptr root_cert = make_certificate(root_spec, root_key.get(), nullptr, root_key.get());

  CertSpec leaf_spec;
  leaf_spec.common_name = "Skillprobe Cloud Request Signer";
  leaf_spec.serial = leaf_serial;
  leaf_spec.not_before = root_spec.not_before;
  leaf_spec.not_after = root_spec.not_after;
  X509Ptr leaf_cert =
      make_certificate(leaf_spec, leaf_key.get(), root_cert.get(), root_key.get());

  id.private_key = std::move(leaf_key);
  id.cert_chain = {std::move(leaf_cert), std::move(root_cert)};
  id.leaf_public = certificate_public_key(id.cert_chain.front().get());
  id.chain_locator = "http://" + params.locator_host + ":" +
                     std::to_string(params.locator_port) + params.locator_path;
  return id;
}

bool SkillRegistration::knows_intent(std::string_view name) const {
  if (is_default_intent(name)) return true;
  for (const auto& [intent, slots] : intent_schema) {
    (void)slots;
    if (intent == name) return true;
  }
  return false;
}

std::optional<std::pair<std::string, std::vector<std::string>>>
SkillRegistration::custom_intent() const {
  for (const auto& entry : intent_schema) {
    if (!is_default_intent(entry.first)) return entry;
  }
  return std::nullopt;
}

SignedMessage sign_request(const CloudIdentity& identity, const RequestEnvelope& env) {
  SignedMessage msg;
  msg.body = serialize(env);
  msg.signature = sign_sha256(identity.private_key.get(), msg.body);
  msg.chain_locator = identity.chain_locator;
  return msg;
}

struct ChainServer::Impl {
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> stopped{false};
  int port = 0;
  std::string locator;
};

ChainServer::ChainServer(CloudIdentity& identity, const std::string& bind_addr, int port)
    : impl_(std::make_unique<Impl>()) {
  const auto parsed = parse_url(identity.chain_locator);
  if (!parsed) throw std::invalid_argument("bad chain locator: " + identity.chain_locator);
  const std::string chain_pem = pem_encode_chain(identity.cert_chain);
  impl_->server.Get(parsed->path, [chain_pem](const httplib::Request&, httplib::Response& res) {
    res.set_content(chain_pem, "application/x-pem-file");
  });

  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(bind_addr);
    if (impl_->port <= 0) throw std::runtime_error("chain server bind failed on " + bind_addr);
  } else {
    if (!impl_->server.bind_to_port(bind_addr, port)) {
      throw std::runtime_error("chain server bind failed on " + bind_addr + ":" +
                               std::to_string(port));
    }
    impl_->port = port;
  }
  identity.chain_locator =
      parsed->scheme + "://" + bind_addr + ":" + std::to_string(impl_->port) + parsed->path;
  impl_->locator = identity.chain_locator;

  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

ChainServer::~ChainServer() { stop(); }

int ChainServer::port() const { return impl_->port; }
const std::string& ChainServer::locator() const { return impl_->locator; }

void ChainServer::stop() {
  if (impl_->stopped.exchange(true)) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

CloudSim::CloudSim(CloudIdentity identity) : identity_(std::move(identity)) {}

const SkillRegistration& CloudSim::register_skill(
    ApplicationId app_id, std::string endpoint_url,
    std::vector<std::pair<std::string, std::vector<std::string>>> intent_schema) {
  std::lock_guard lock(mutex_);
  std::string key = app_id.value;
  auto [it, inserted] = registrations_.try_emplace(
      std::move(key),
      SkillRegistration{std::move(app_id), std::move(endpoint_url), std::move(intent_schema)});
  if (!inserted) throw DuplicateApplicationId(it->first);
  return it->second;
}

ApplicationId CloudSim::fresh_application_id(const std::string& label) {
  std::lock_guard lock(mutex_);
  return ApplicationId{"amzn1.ask.skill." + label + "-" + std::to_string(++app_counter_)};
}

std::string CloudSim::fresh_request_id() {
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "req-%06llu",
                static_cast<unsigned long long>(++request_counter_));
  return buf;
}

SignedMessage CloudSim::text_interface(const SkillRegistration& reg, const std::string& intent,
                                       std::vector<Slot> slots, Instant now) {
  if (!reg.knows_intent(intent)) throw UnknownIntent(intent);
  RequestEnvelope env = build_request(reg.application_id, intent, std::move(slots), now,
                                      fresh_request_id());
  return sign_request(identity_, env);
}

SignedMessage CloudSim::sign_raw_body(std::string body) const {
  SignedMessage msg;
  msg.signature = sign_sha256(identity_.private_key.get(), body);
  msg.body = std::move(body);
  msg.chain_locator = identity_.chain_locator;
  return msg;
}

std::string_view to_string(TransportError e) {
  switch (e) {
    case TransportError::None: return "none";
    case TransportError::Tls: return "tls";
    case TransportError::Connect: return "connect";
    case TransportError::Timeout: return "timeout";
    case TransportError::Other: return "other";
  }
  return "other";
}

namespace {

TransportError map_httplib_error(httplib::Error err) {
  switch (err) {
    case httplib::Error::SSLConnection:
    case httplib::Error::SSLLoadingCerts:
    case httplib::Error::SSLServerVerification:
    case httplib::Error::SSLPeerCouldBeClosed_:
      return TransportError::Tls;
    case httplib::Error::Connection:
    case httplib::Error::BindIPAddress:
      return TransportError::Connect;
    case httplib::Error::ConnectionTimeout:
    case httplib::Error::Read:
    case httplib::Error::Write:
      return TransportError::Timeout;
    default:
      return TransportError::Other;
  }
}

DispatchResult from_httplib(const httplib::Result& result) {
  DispatchResult out;
  if (result) {
    out.status = result->status;
    out.body = result->body;
  } else {
    out.error = map_httplib_error(result.error());
    out.error_detail = httplib::to_string(result.error());
  }
  return out;
}

}  // namespace

DispatchResult dispatch(const SignedMessage& msg, const std::string& endpoint_url,
                        const TlsTrust& trust, int timeout_ms) {
  const auto parsed = parse_url(endpoint_url);
  if (!parsed || (parsed->scheme != "https" && parsed->scheme != "http")) {
    DispatchResult bad;
    bad.error = TransportError::Other;
    bad.error_detail = "malformed endpoint url";
    return bad;
  }

  const std::string base = parsed->scheme + "://" + parsed->host + ":" +
                           std::to_string(parsed->port);
  httplib::Client client(base);
  client.set_connection_timeout(0, timeout_ms * 1000);
  client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  if (!trust.addr_map.empty()) client.set_hostname_addr_map(trust.addr_map);
  if (parsed->scheme == "https") {
    if (trust.accept_any) {
      client.enable_server_certificate_verification(false);
    } else {
      client.load_ca_cert_store(trust.root_pem.data(), trust.root_pem.size());
      client.enable_server_certificate_verification(true);
    }
  }

  httplib::Headers headers = {
      {"Signature", base64_encode(msg.signature)},
      {"SignatureCertChainUrl", msg.chain_locator},
  };
  return from_httplib(client.Post(parsed->path, headers, msg.body, "application/json"));
}

DispatchResult http_get(const std::string& url, int timeout_ms) {
  const auto parsed = parse_url(url);
  if (!parsed) {
    DispatchResult bad;
    bad.error = TransportError::Other;
    bad.error_detail = "malformed url";
    return bad;
  }
  httplib::Client client(parsed->scheme + "://" + parsed->host + ":" +
                         std::to_string(parsed->port));
  client.set_connection_timeout(0, timeout_ms * 1000);
  client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  if (parsed->scheme == "https") client.enable_server_certificate_verification(false);
  return from_httplib(client.Get(parsed->path));
}

}  // namespace skillprobe
