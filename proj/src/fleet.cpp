#include "skillprobe/fleet.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

namespace skillprobe {

using nlohmann::json;

namespace {

std::string_view to_string(DecoyBehavior behavior) {
  return behavior == DecoyBehavior::Html ? "html" : "not-found";
}

std::optional<DecoyBehavior> decoy_behavior_from_string(std::string_view name) {
  if (name == "html") return DecoyBehavior::Html;
  if (name == "not-found" || name == "notfound") return DecoyBehavior::NotFound;
  return std::nullopt;
}

std::string next_loopback_ip(std::string& cursor) {
  int a = 0, b = 0, c = 0, d = 0;
  if (std::sscanf(cursor.c_str(), "%d.%d.%d.%d", &a, &b, &c, &d) != 4) {
    throw std::invalid_argument("bad ip_base: " + cursor);
  }
  const std::string current = cursor;
  if (++d > 254) {
    d = 1;
    if (++c > 254) throw std::invalid_argument("fleet ip space exhausted");
  }
  cursor = std::to_string(a) + "." + std::to_string(b) + "." + std::to_string(c) + "." +
           std::to_string(d);
  return current;
}

}  // namespace

FleetManifest FleetManifest::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  FleetManifest manifest;
  manifest.domain = doc.value("domain", manifest.domain);
  manifest.ip_base = doc.value("ip_base", manifest.ip_base);
  manifest.port_base = doc.value("port_base", manifest.port_base);

  for (const json& e : doc.value("endpoints", json::array())) {
    FleetEndpointSpec spec;
    spec.name = e.value("name", "");
    if (auto mode = endpoint_mode_from_string(e.value("mode", "accept-all"))) {
      spec.mode = *mode;
    } else {
      throw ParseError("unknown endpoint mode: " + e.value("mode", ""), 0);
    }
    if (auto tls = tls_profile_from_string(e.value("tls", "self-signed"))) {
      spec.tls = *tls;
    } else {
      throw ParseError("unknown tls profile: " + e.value("tls", ""), 0);
    }
    spec.path = e.value("path", spec.path);
    spec.ip = e.value("ip", spec.ip);
    spec.port = e.value("port", spec.port);
    spec.app_id = e.value("app_id", spec.app_id);
    spec.hostnames = e.value("hostnames", spec.hostnames);
    spec.store_record = e.value("store_record", spec.store_record);
    spec.injection_demo = e.value("injection_demo", spec.injection_demo);
    manifest.endpoints.push_back(std::move(spec));
  }
  for (const json& d : doc.value("decoys", json::array())) {
    const int count = d.value("count", 1);
    if (count > 1 && (d.contains("ip") || d.contains("port") || d.contains("hostnames"))) {
      throw ParseError("decoy entries with count > 1 must auto-assign addresses", 0);
    }
    for (int i = 0; i < count; ++i) {
      FleetDecoySpec spec;
      spec.name = d.value("name", "decoy");
      if (count > 1) spec.name += "-" + std::to_string(i);
      if (auto behavior = decoy_behavior_from_string(d.value("behavior", "html"))) {
        spec.behavior = *behavior;
      } else {
        throw ParseError("unknown decoy behavior: " + d.value("behavior", ""), 0);
      }
      spec.ip = d.value("ip", spec.ip);
      spec.port = d.value("port", spec.port);
      spec.hostnames = d.value("hostnames", spec.hostnames);
      spec.store_record = d.value("store_record", spec.store_record);
      manifest.decoys.push_back(std::move(spec));
    }
  }
  manifest.validate();
  return manifest;
}

std::string FleetManifest::to_json() const {
  json endpoints = json::array();
  for (const auto& e : this->endpoints) {
    endpoints.push_back({
        {"name", e.name},
        {"mode", std::string(skillprobe::to_string(e.mode))},
        {"tls", std::string(skillprobe::to_string(e.tls))},
        {"path", e.path},
        {"ip", e.ip},
        {"port", e.port},
        {"app_id", e.app_id},
        {"hostnames", e.hostnames},
        {"store_record", e.store_record},
        {"injection_demo", e.injection_demo},
    });
  }
  json decoys = json::array();
  for (const auto& d : this->decoys) {
    decoys.push_back({
        {"name", d.name},
        {"behavior", std::string(to_string(d.behavior))},
        {"ip", d.ip},
        {"port", d.port},
        {"hostnames", d.hostnames},
        {"store_record", d.store_record},
    });
  }
  json doc = {
      {"domain", domain},
      {"ip_base", ip_base},
      {"port_base", port_base},
      {"endpoints", std::move(endpoints)},
      {"decoys", std::move(decoys)},
  };
  return doc.dump(2) + "\n";
}

void FleetManifest::validate() const {
  std::set<std::string> names;
  std::set<std::pair<std::string, int>> addresses;
  auto check = [&](const std::string& name, const std::string& ip, int port) {
    if (name.empty()) throw std::invalid_argument("fleet spec with empty name");
    if (!names.insert(name).second) {
      throw std::invalid_argument("duplicate fleet spec name: " + name);
    }
    if (port != 0 && !addresses.insert({ip, port}).second) {
      throw std::invalid_argument("duplicate fleet listener address " + ip + ":" +
                                  std::to_string(port));
    }
  };
  for (const auto& spec : endpoints) check(spec.name, spec.ip, spec.port);
  for (const auto& spec : decoys) check(spec.name, spec.ip, spec.port);
}

namespace {

// Self-signed HTTPS server that is anything but a skill endpoint.
class DecoyServer {
 public:
  DecoyServer(DecoyBehavior behavior, const std::string& host, const std::string& bind_ip,
              int port) {
    TlsMaterial material = make_tls_material(TlsProfileKind::SelfSigned, host, nullptr);
    cert_ = pem_decode_chain(material.cert_pem).front();
    key_ = pem_decode_private_key(material.key_pem);
    server_ = std::make_unique<httplib::SSLServer>(cert_.get(), key_.get());
    if (!server_->is_valid()) throw TlsConfigError("decoy TLS setup failed");
    if (behavior == DecoyBehavior::Html) {
      auto handler = [](const httplib::Request&, httplib::Response& res) {
        res.status = 200;
        res.set_content("<html><body>It works!</body></html>", "text/html");
      };
      server_->Get(".*", handler);
      server_->Post(".*", handler);
    }
    // NotFound decoys keep httplib's default 404 for everything.

    if (port == 0) {
      port_ = server_->bind_to_any_port(bind_ip);
      if (port_ <= 0) throw BindError("decoy bind failed on " + bind_ip);
    } else {
      if (!server_->bind_to_port(bind_ip, port)) {
        throw BindError("decoy bind failed on " + bind_ip + ":" + std::to_string(port));
      }
      port_ = port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
  }

  ~DecoyServer() { stop(); }

  int port() const { return port_; }

  void stop() {
    if (stopped_.exchange(true)) return;
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  X509Ptr cert_;
  PKeyPtr key_;
  std::unique_ptr<httplib::SSLServer> server_;
  std::thread thread_;
  std::atomic<bool> stopped_{false};
  int port_ = 0;
};

}  // namespace

struct Fleet::Impl {
  FleetManifest manifest;
  std::unique_ptr<ChainServer> chain;
  std::unique_ptr<CloudSim> cloud;
  TlsAuthority tls_ca;
  std::string root_pem;
  std::string identity_key_pem;
  std::string identity_chain_pem;
  std::vector<std::unique_ptr<EndpointServer>> endpoint_servers;
  std::vector<std::unique_ptr<DecoyServer>> decoy_servers;
  std::vector<FleetListener> listeners;
  std::vector<std::pair<std::string, std::string>> store_records;  // skill_id, url
  std::atomic<bool> stopped{false};
};

Fleet::Fleet(FleetManifest manifest, FleetOptions options) : impl_(std::make_unique<Impl>()) {
  manifest.validate();

  CloudIdentityParams params;
  params.seed = options.seed;
  params.key_bits = options.key_bits;
  CloudIdentity identity = generate_identity(params);
  impl_->chain = std::make_unique<ChainServer>(identity, "127.0.0.1");
  impl_->identity_key_pem = pem_encode_private_key(identity.private_key.get());
  impl_->identity_chain_pem = pem_encode_chain(identity.cert_chain);
  impl_->root_pem = identity.root_pem();
  impl_->cloud = std::make_unique<CloudSim>(std::move(identity));
  impl_->tls_ca = make_tls_authority("Skillprobe Fleet TLS CA");

  std::string ip_cursor = manifest.ip_base;
  int port_cursor = manifest.port_base;
  auto allocate = [&](std::string& ip, int& port) {
    if (ip.empty()) ip = next_loopback_ip(ip_cursor);
    if (port == 0 && port_cursor > 0) port = port_cursor++;
  };

  for (auto& spec : manifest.endpoints) {
    allocate(spec.ip, spec.port);
    if (spec.hostnames.empty()) spec.hostnames = {spec.name + "." + manifest.domain};
    if (spec.app_id.empty()) spec.app_id = "amzn1.ask.skill.fleet-" + spec.name;

    FleetListener listener;
    listener.name = spec.name;
    listener.ip = spec.ip;
    listener.path = spec.path;
    listener.hostnames = spec.hostnames;
    listener.store_record = spec.store_record;
    listener.mode = spec.mode;

    if (spec.mode == EndpointMode::Offline) {
      // Appears in the host list; nothing listens there.
      listener.port = spec.port != 0 ? spec.port : 9;
    } else {
      impl_->cloud->register_skill(
          ApplicationId{spec.app_id},
          "https://" + spec.hostnames.front() + spec.path, {{"LookupIntent", {"num"}}});

      EndpointConfig config;
      config.mode = spec.mode;
      config.expected_app_id = ApplicationId{spec.app_id};
      config.path = spec.path;
      config.trust_root_pem = impl_->root_pem;
      config.state.injection_demo = spec.injection_demo;
      TlsMaterial material = make_tls_material(
          spec.tls, spec.hostnames.front(),
          spec.tls == TlsProfileKind::SelfSigned ? nullptr : &impl_->tls_ca);
      impl_->endpoint_servers.push_back(
          std::make_unique<EndpointServer>(std::move(config), std::move(material), spec.ip,
                                           spec.port));
      listener.port = impl_->endpoint_servers.back()->port();
    }
    impl_->listeners.push_back(listener);

    if (spec.store_record) {
      for (std::size_t i = 0; i < spec.hostnames.size(); ++i) {
        const std::string skill_id =
            i == 0 ? "skill-" + spec.name : "skill-" + spec.name + "-" + std::to_string(i);
        impl_->store_records.emplace_back(skill_id,
                                          "https://" + spec.hostnames[i] + "/privacy");
      }
    }
  }

  for (auto& spec : manifest.decoys) {
    allocate(spec.ip, spec.port);
    if (spec.hostnames.empty()) spec.hostnames = {spec.name + "." + manifest.domain};

    impl_->decoy_servers.push_back(std::make_unique<DecoyServer>(
        spec.behavior, spec.hostnames.front(), spec.ip, spec.port));

    FleetListener listener;
    listener.name = spec.name;
    listener.is_decoy = true;
    listener.ip = spec.ip;
    listener.port = impl_->decoy_servers.back()->port();
    listener.path = "/";
    listener.hostnames = spec.hostnames;
    listener.store_record = spec.store_record;
    impl_->listeners.push_back(listener);

    if (spec.store_record) {
      for (std::size_t i = 0; i < spec.hostnames.size(); ++i) {
        const std::string skill_id =
            i == 0 ? "skill-" + spec.name : "skill-" + spec.name + "-" + std::to_string(i);
        impl_->store_records.emplace_back(skill_id,
                                          "https://" + spec.hostnames[i] + "/privacy");
      }
    }
  }

  impl_->manifest = std::move(manifest);
}

Fleet::~Fleet() { stop(); }

void Fleet::stop() {
  if (impl_->stopped.exchange(true)) return;
  for (auto& server : impl_->endpoint_servers) server->stop();
  for (auto& server : impl_->decoy_servers) server->stop();
  if (impl_->chain) impl_->chain->stop();
}

CloudSim& Fleet::cloud() { return *impl_->cloud; }
const CloudIdentity& Fleet::identity() const { return impl_->cloud->identity(); }
std::string Fleet::signing_root_pem() const { return impl_->root_pem; }
const std::vector<FleetListener>& Fleet::listeners() const { return impl_->listeners; }

std::string Fleet::hosts_text() const {
  std::string out;
  for (const auto& listener : impl_->listeners) {
    out += listener.ip;
    if (listener.port != 443) out += ":" + std::to_string(listener.port);
    out += "\n";
  }
  return out;
}

std::string Fleet::resolver_text() const {
  std::string out;
  for (const auto& listener : impl_->listeners) {
    for (const auto& hostname : listener.hostnames) {
      out += hostname + " " + listener.ip + "\n";
    }
  }
  return out;
}

std::string Fleet::store_meta_text() const {
  std::string out;
  for (const auto& [skill_id, url] : impl_->store_records) {
    out += skill_id + "\t" + url + "\n";
  }
  return out;
}

void Fleet::write_artifacts(const std::string& directory) const {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(directory) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + name + " under " + directory);
    out << content;
  };
  write("hosts.txt", hosts_text());
  write("resolver.txt", resolver_text());
  write("store-meta.tsv", store_meta_text());
  write("root-ca.pem", impl_->root_pem);
  write("tls-ca.pem", impl_->tls_ca.cert_pem);
  write("cloud-key.pem", impl_->identity_key_pem);
  write("cloud-chain.pem", impl_->identity_chain_pem);

  json listeners = json::array();
  for (const auto& l : impl_->listeners) {
    listeners.push_back({
        {"name", l.name},
        {"decoy", l.is_decoy},
        {"ip", l.ip},
        {"port", l.port},
        {"path", l.path},
        {"hostnames", l.hostnames},
        {"mode", l.is_decoy ? "decoy" : std::string(skillprobe::to_string(l.mode))},
    });
  }
  json info = {
      {"schema", "skillprobe-fleet/1"},
      {"chain_locator", impl_->cloud->identity().chain_locator},
      {"listeners", std::move(listeners)},
  };
  write("fleet.json", info.dump(2) + "\n");
}

}  // namespace skillprobe
