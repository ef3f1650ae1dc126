#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "skillprobe/cloudsim.hpp"

namespace skillprobe {

// One ZMap-style inventory entry. Real lists are bare IPv4 lines (port
// 443); desk-scale fleets append ":port" since 50 loopback listeners
// cannot share one port.
struct HostRecord {
  std::string ip;
  int port = 443;

  std::string address() const { return ip + ":" + std::to_string(port); }
  friend auto operator<=>(const HostRecord&, const HostRecord&) = default;
};

class SourceUnreadable : public std::runtime_error {
 public:
  explicit SourceUnreadable(const std::string& what) : std::runtime_error(what) {}
};

struct LoadedHosts {
  std::vector<HostRecord> records;  // deduplicated, input order of first sight
  int skipped_lines = 0;
};

LoadedHosts load_hosts_text(std::string_view text);
LoadedHosts load_hosts_file(const std::string& path);  // throws SourceUnreadable

struct SkillStoreRecord {
  std::string skill_id;
  std::string privacy_policy_url;  // may be empty
};

// One record per line: skill_id <TAB> privacy_policy_url (url optional).
std::vector<SkillStoreRecord> load_store_meta_text(std::string_view text);
std::vector<SkillStoreRecord> load_store_meta_file(const std::string& path);

// Public-suffix matching over a bundled snapshot (exact, wildcard and
// exception rules). Replaceable with a full publicsuffix.org dump.
class PublicSuffixList {
 public:
  static PublicSuffixList from_text(std::string_view text);
  static PublicSuffixList from_file(const std::string& path);  // throws SourceUnreadable
  static const PublicSuffixList& bundled_snapshot();

  std::string public_suffix(std::string_view hostname) const;
  // Suffix plus one label; the hostname itself when it is already a suffix
  // or has a single label.
  std::string registered_domain(std::string_view hostname) const;

 private:
  std::set<std::string> exact_;
  std::set<std::string> wildcard_;   // stored without the "*."
  std::set<std::string> exception_;  // stored without the "!"
};

struct CandidateExtraction {
  std::set<std::string> candidates;
  int skipped_urls = 0;
};

// Hostname when its registered domain is a whitelisted hosting service,
// otherwise the registered domain itself.
CandidateExtraction extract_candidate_domains(const std::vector<SkillStoreRecord>& records,
                                              const std::set<std::string>& hosting_whitelist,
                                              const PublicSuffixList& psl);

class Resolver {
 public:
  virtual ~Resolver() = default;
  virtual std::optional<std::string> resolve(const std::string& hostname) = 0;
};

// "hostname ip" pairs, whitespace separated, one per line.
class FileResolver : public Resolver {
 public:
  static FileResolver from_text(std::string_view text);
  static FileResolver from_file(const std::string& path);  // throws SourceUnreadable
  explicit FileResolver(std::map<std::string, std::string> table);

  std::optional<std::string> resolve(const std::string& hostname) override;

 private:
  std::map<std::string, std::string> table_;
};

struct CandidateHost {
  std::string hostname;
  HostRecord host;
};

struct MatchStats {
  int unresolved = 0;
};

std::vector<CandidateHost> match_hosts(const std::set<std::string>& candidates,
                                       const std::vector<HostRecord>& hosts,
                                       Resolver& resolver, MatchStats* stats = nullptr);

struct ScanConfig {
  std::vector<std::string> path_list = default_scan_paths();
  int concurrency_limit = 8;
  int per_host_timeout_ms = 2000;
  int per_host_budget = 10;
  std::set<std::string> hosting_whitelist;
  int per_host_interval_ms = 200;

  static std::vector<std::string> default_scan_paths();
};

struct ScanFinding {
  std::string ip;
  int port = 443;
  std::string hostname;  // empty for direct-IP probes
  std::string path;
  std::string url;
  std::string response_excerpt;
  int round = 1;
};

struct ScanCounters {
  std::atomic<int> probes_sent{0};
  std::atomic<int> transport_failures{0};
  std::atomic<int> invalid_responses{0};
};

// One spoofed LaunchRequest, signed under the scanner's cloud identity with
// an arbitrary app-ID. Exactly one request per call; any server certificate
// is accepted (discovery, not conformance).
std::optional<ScanFinding> probe(const std::string& url, CloudSim& cloud,
                                 const ApplicationId& probe_app_id, int timeout_ms,
                                 ScanCounters* counters = nullptr,
                                 const std::map<std::string, std::string>& addr_map = {});

std::vector<ScanFinding> round1(const std::vector<CandidateHost>& candidates,
                                const ScanConfig& config, CloudSim& cloud,
                                const ApplicationId& probe_app_id,
                                ScanCounters* counters = nullptr);

class NoFindings : public std::runtime_error {
 public:
  NoFindings() : std::runtime_error("no non-root findings to select a path from") {}
};

// Most common non-root path, ties broken lexicographically; nullopt when
// only root findings exist (round 2 then falls back to "/" alone).
std::optional<std::string> most_common_path(const std::vector<ScanFinding>& findings);

// Probes exactly [common_path, "/"] per remaining host. Throws
// std::invalid_argument when a remaining host was already probed in round 1.
std::vector<ScanFinding> round2(const std::vector<HostRecord>& remaining_hosts,
                                const std::set<std::string>& round1_probed_addresses,
                                const std::string& common_path, const ScanConfig& config,
                                CloudSim& cloud, const ApplicationId& probe_app_id,
                                ScanCounters* counters = nullptr);

class Geolocator {
 public:
  virtual ~Geolocator() = default;
  virtual std::string country(const std::string& ip) = 0;
};

class StubGeolocator : public Geolocator {
 public:
  std::string country(const std::string&) override { return "Unknown"; }
};

struct ScanReport {
  std::vector<ScanFinding> findings;  // sorted by ip, then path
  std::vector<std::string> unique_endpoint_ips;
  std::map<std::string, int> path_histogram;
  std::map<std::string, int> country_histogram;
  int round1_findings = 0;
  int round2_findings = 0;
};

ScanReport build_report(std::vector<ScanFinding> findings, Geolocator& geo);
std::string report_to_json(const ScanReport& report);

struct ScanPipelineResult {
  ScanReport report;
  std::set<std::string> candidates;
  int matched_candidate_hosts = 0;
  std::set<std::string> round1_probed_addresses;
  std::optional<std::string> round2_path;
  int skipped_store_urls = 0;
  int unresolved_candidates = 0;
  int probes_sent = 0;
  int transport_failures = 0;
};

// The full two-round pipeline over in-memory inputs.
ScanPipelineResult run_scan(const std::vector<HostRecord>& hosts,
                            const std::vector<SkillStoreRecord>& store_records,
                            Resolver& resolver, const ScanConfig& config, CloudSim& cloud,
                            const ApplicationId& probe_app_id, bool round2_enabled,
                            Geolocator& geo, const PublicSuffixList& psl);

}  // namespace skillprobe
