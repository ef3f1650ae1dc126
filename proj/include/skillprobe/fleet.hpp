#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skillprobe/cloudsim.hpp"
#include "skillprobe/endpoint.hpp"

namespace skillprobe {

struct FleetEndpointSpec {
  std::string name;
  EndpointMode mode = EndpointMode::AcceptAll;
  TlsProfileKind tls = TlsProfileKind::SelfSigned;
  std::string path = "/alexa";
  std::string ip;      // empty: allocated from the manifest's ip_base
  int port = 0;        // 0: allocated from port_base, or OS-assigned
  std::string app_id;  // empty: derived from the name
  std::vector<std::string> hostnames;  // empty: ["<name>.<domain>"]
  bool store_record = true;
  bool injection_demo = false;
};

enum class DecoyBehavior { Html, NotFound };

struct FleetDecoySpec {
  std::string name;
  DecoyBehavior behavior = DecoyBehavior::Html;
  std::string ip;
  int port = 0;
  std::vector<std::string> hostnames;
  bool store_record = true;
};

// Desk-scale substitute for the internet: a set of skill endpoints plus
// plain web servers, all on loopback aliases.
struct FleetManifest {
  std::string domain = "fleet.test";
  std::string ip_base = "127.31.0.1";
  int port_base = 0;  // 0 = OS-assigned ports
  std::vector<FleetEndpointSpec> endpoints;
  std::vector<FleetDecoySpec> decoys;

  static FleetManifest from_json(std::string_view text);  // throws ParseError
  std::string to_json() const;
  // Duplicate explicit addresses or duplicate names abort before any
  // listener starts.
  void validate() const;
};

struct FleetListener {
  std::string name;
  bool is_decoy = false;
  std::string ip;
  int port = 0;
  std::string path;
  std::vector<std::string> hostnames;
  bool store_record = true;
  EndpointMode mode = EndpointMode::AcceptAll;
};

struct FleetOptions {
  std::optional<std::uint64_t> seed;
  int key_bits = 2048;
};

class Fleet {
 public:
  explicit Fleet(FleetManifest manifest, FleetOptions options = {});
  ~Fleet();
  Fleet(const Fleet&) = delete;
  Fleet& operator=(const Fleet&) = delete;

  void stop();  // idempotent

  CloudSim& cloud();
  const CloudIdentity& identity() const;
  std::string signing_root_pem() const;
  const std::vector<FleetListener>& listeners() const;

  // The files the scanner consumes.
  std::string hosts_text() const;
  std::string resolver_text() const;
  std::string store_meta_text() const;

  // hosts.txt, resolver.txt, store-meta.tsv, root-ca.pem, cloud-key.pem,
  // cloud-chain.pem, fleet.json into the directory.
  void write_artifacts(const std::string& directory) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace skillprobe
