#include "skillprobe/scanner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "skillprobe/encoding.hpp"

namespace skillprobe {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SourceUnreadable("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) {
    text.remove_prefix(1);
  }
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) {
    text.remove_suffix(1);
  }
  return std::string(text);
}

bool valid_ipv4(std::string_view text) {
  int octets = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t dot = text.find('.', pos);
    std::string_view part =
        dot == std::string_view::npos ? text.substr(pos) : text.substr(pos, dot - pos);
    if (part.empty() || part.size() > 3) return false;
    int value = 0;
    for (char c : part) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
      value = value * 10 + (c - '0');
    }
    if (value > 255) return false;
    ++octets;
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return octets == 4;
}

}  // namespace

LoadedHosts load_hosts_text(std::string_view text) {
  LoadedHosts out;
  std::set<HostRecord> seen;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = trim(nl == std::string_view::npos ? text.substr(pos)
                                                         : text.substr(pos, nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line[0] == '#') continue;

    HostRecord record;
    const auto colon = line.find(':');
    std::string ip_part = colon == std::string::npos ? line : line.substr(0, colon);
    if (colon != std::string::npos) {
      const std::string port_part = line.substr(colon + 1);
      int port = 0;
      auto [ptr, ec] = std::from_chars(port_part.data(), port_part.data() + port_part.size(), port);
      if (ec != std::errc{} || ptr != port_part.data() + port_part.size() || port <= 0 ||
          port > 65535) {
        ++out.skipped_lines;
        continue;
      }
      record.port = port;
    }
    if (!valid_ipv4(ip_part)) {
      ++out.skipped_lines;
      continue;
    }
    record.ip = ip_part;
    if (seen.insert(record).second) out.records.push_back(record);
  }
  return out;
}

LoadedHosts load_hosts_file(const std::string& path) { return load_hosts_text(read_file(path)); }

std::vector<SkillStoreRecord> load_store_meta_text(std::string_view text) {
  std::vector<SkillStoreRecord> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = trim(nl == std::string_view::npos ? text.substr(pos)
                                                         : text.substr(pos, nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line[0] == '#') continue;
    SkillStoreRecord record;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      record.skill_id = line;
    } else {
      record.skill_id = trim(line.substr(0, tab));
      record.privacy_policy_url = trim(line.substr(tab + 1));
    }
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<SkillStoreRecord> load_store_meta_file(const std::string& path) {
  return load_store_meta_text(read_file(path));
}

namespace {

// Small snapshot: common TLDs, a few second-level country suffixes, and
// the classic wildcard/exception pair so all three rule kinds stay
// exercised. Replace with a full publicsuffix.org dump for live use.
constexpr const char* kBundledSuffixSnapshot = R"(// skillprobe public-suffix snapshot
com
net
org
edu
gov
mil
int
info
biz
io
dev
app
co
me
us
uk
co.uk
org.uk
ac.uk
de
fr
nl
be
at
ch
es
it
pt
pl
cz
se
no
fi
dk
ie
gr
hu
ro
sk
ru
tr
com.tr
il
co.il
jp
co.jp
ne.jp
cn
com.cn
kr
co.kr
in
co.in
au
com.au
net.au
org.au
nz
co.nz
za
co.za
br
com.br
mx
com.mx
ar
com.ar
cl
ca
eu
test
example
invalid
localhost
*.ck
!www.ck
)";

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_labels(std::string_view host) {
  std::vector<std::string> labels;
  std::size_t pos = 0;
  while (pos <= host.size()) {
    const std::size_t dot = host.find('.', pos);
    labels.emplace_back(dot == std::string_view::npos ? host.substr(pos)
                                                      : host.substr(pos, dot - pos));
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return labels;
}

}  // namespace

PublicSuffixList PublicSuffixList::from_text(std::string_view text) {
  PublicSuffixList psl;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = trim(nl == std::string_view::npos ? text.substr(pos)
                                                         : text.substr(pos, nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.rfind("//", 0) == 0) continue;
    line = lowercase(line);
    if (line[0] == '!') {
      psl.exception_.insert(line.substr(1));
    } else if (line.rfind("*.", 0) == 0) {
      psl.wildcard_.insert(line.substr(2));
    } else {
      psl.exact_.insert(line);
    }
  }
  return psl;
}

PublicSuffixList PublicSuffixList::from_file(const std::string& path) {
  return from_text(read_file(path));
}

const PublicSuffixList& PublicSuffixList::bundled_snapshot() {
  static const PublicSuffixList kList = from_text(kBundledSuffixSnapshot);
  return kList;
}

std::string PublicSuffixList::public_suffix(std::string_view hostname) const {
  std::string host = lowercase(hostname);
  while (!host.empty() && host.back() == '.') host.pop_back();
  const std::vector<std::string> labels = split_labels(host);

  std::size_t best = 1;  // the implicit "*" rule: the last label
  for (std::size_t start = 0; start < labels.size(); ++start) {
    std::string suffix;
    for (std::size_t i = start; i < labels.size(); ++i) {
      if (!suffix.empty()) suffix += '.';
      suffix += labels[i];
    }
    const std::size_t suffix_labels = labels.size() - start;
    if (exception_.count(suffix)) {
      // Exception rule: the public suffix is the rule minus its first label.
      best = std::max(best, suffix_labels - 1);
      break;
    }
    if (exact_.count(suffix)) {
      best = std::max(best, suffix_labels);
    }
    // "*.foo" makes "<anything>.foo" a public suffix.
    if (start > 0 && wildcard_.count(suffix)) {
      best = std::max(best, suffix_labels + 1);
    }
  }
  if (best >= labels.size()) best = labels.size();
  std::string out;
  for (std::size_t i = labels.size() - best; i < labels.size(); ++i) {
    if (!out.empty()) out += '.';
    out += labels[i];
  }
  return out;
}

std::string PublicSuffixList::registered_domain(std::string_view hostname) const {
  std::string host = lowercase(hostname);
  while (!host.empty() && host.back() == '.') host.pop_back();
  const std::string suffix = public_suffix(host);
  if (host == suffix) return host;
  const std::vector<std::string> labels = split_labels(host);
  const std::size_t suffix_labels = split_labels(suffix).size();
  std::string out;
  for (std::size_t i = labels.size() - suffix_labels - 1; i < labels.size(); ++i) {
    if (!out.empty()) out += '.';
    out += labels[i];
  }
  return out;
}

CandidateExtraction extract_candidate_domains(const std::vector<SkillStoreRecord>& records,
                                              const std::set<std::string>& hosting_whitelist,
                                              const PublicSuffixList& psl) {
  CandidateExtraction out;
  for (const auto& record : records) {
    if (record.privacy_policy_url.empty()) continue;
    const auto parsed = parse_url(record.privacy_policy_url);
    if (!parsed || parsed->host.empty()) {
      ++out.skipped_urls;
      continue;
    }
    if (valid_ipv4(parsed->host)) {
      out.candidates.insert(parsed->host);
      continue;
    }
    const std::string domain = psl.registered_domain(parsed->host);
    if (hosting_whitelist.count(domain)) {
      out.candidates.insert(lowercase(parsed->host));
    } else {
      out.candidates.insert(domain);
    }
  }
  return out;
}

FileResolver FileResolver::from_text(std::string_view text) {
  std::map<std::string, std::string> table;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = trim(nl == std::string_view::npos ? text.substr(pos)
                                                         : text.substr(pos, nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string hostname, ip;
    if (fields >> hostname >> ip && valid_ipv4(ip)) {
      table[lowercase(hostname)] = ip;
    }
  }
  return FileResolver(std::move(table));
}

FileResolver FileResolver::from_file(const std::string& path) {
  return from_text(read_file(path));
}

FileResolver::FileResolver(std::map<std::string, std::string> table)
    : table_(std::move(table)) {}

std::optional<std::string> FileResolver::resolve(const std::string& hostname) {
  auto it = table_.find(lowercase(hostname));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::vector<CandidateHost> match_hosts(const std::set<std::string>& candidates,
                                       const std::vector<HostRecord>& hosts,
                                       Resolver& resolver, MatchStats* stats) {
  std::map<std::string, std::vector<HostRecord>> by_ip;
  for (const auto& host : hosts) by_ip[host.ip].push_back(host);

  std::vector<CandidateHost> out;
  for (const auto& candidate : candidates) {
    auto ip = resolver.resolve(candidate);
    if (!ip) {
      if (stats) ++stats->unresolved;
      continue;
    }
    auto it = by_ip.find(*ip);
    if (it == by_ip.end()) continue;
    for (const auto& host : it->second) out.push_back({candidate, host});
  }
  return out;
}

std::vector<std::string> ScanConfig::default_scan_paths() {
  return {"/",      "/alexa", "/echo",  "/api",       "/endpoint",
          "/skill", "/iot",   "/voice", "/assistant", "/amazon"};
}

std::optional<ScanFinding> probe(const std::string& url, CloudSim& cloud,
                                 const ApplicationId& probe_app_id, int timeout_ms,
                                 ScanCounters* counters,
                                 const std::map<std::string, std::string>& addr_map) {
  RequestEnvelope env = build_request(probe_app_id, "LaunchRequest", {}, now_utc(),
                                      cloud.fresh_request_id());
  SignedMessage msg = sign_request(cloud.identity(), env);

  TlsTrust trust = TlsTrust::insecure();
  trust.addr_map = addr_map;
  if (counters) counters->probes_sent.fetch_add(1);
  DispatchResult res = dispatch(msg, url, trust, timeout_ms);
  if (!res.ok()) {
    if (counters) counters->transport_failures.fetch_add(1);
    return std::nullopt;
  }
  if (res.status != 200 || !is_valid_skill_response(res.body)) {
    if (counters) counters->invalid_responses.fetch_add(1);
    return std::nullopt;
  }

  const auto parsed = parse_url(url);
  ScanFinding finding;
  if (parsed) {
    finding.path = parsed->path;
    finding.port = parsed->port;
  }
  finding.url = url;
  finding.response_excerpt = res.body.substr(0, 120);
  return finding;
}

namespace {

void sort_findings(std::vector<ScanFinding>& findings) {
  std::sort(findings.begin(), findings.end(), [](const ScanFinding& a, const ScanFinding& b) {
    return std::tie(a.ip, a.port, a.path, a.hostname) <
           std::tie(b.ip, b.port, b.path, b.hostname);
  });
}

// Probes one target (hostname or bare ip) over the given paths, honoring
// the per-host interval between successive requests.
std::vector<ScanFinding> probe_target(const std::string& display_host, const HostRecord& host,
                                      const std::vector<std::string>& paths,
                                      const ScanConfig& config, CloudSim& cloud,
                                      const ApplicationId& probe_app_id,
                                      ScanCounters* counters, int round) {
  std::map<std::string, std::string> addr_map;
  std::string url_host = host.ip;
  if (!display_host.empty() && display_host != host.ip) {
    url_host = display_host;
    addr_map[display_host] = host.ip;
  }

  std::vector<ScanFinding> findings;
  bool first = true;
  for (const auto& path : paths) {
    if (!first) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config.per_host_interval_ms));
    }
    first = false;
    const std::string url =
        "https://" + url_host + ":" + std::to_string(host.port) + path;
    auto finding =
        probe(url, cloud, probe_app_id, config.per_host_timeout_ms, counters, addr_map);
    if (finding) {
      finding->ip = host.ip;
      finding->port = host.port;
      finding->hostname = display_host == host.ip ? "" : display_host;
      finding->round = round;
      findings.push_back(std::move(*finding));
    }
  }
  return findings;
}

struct TargetJob {
  std::string display_host;
  HostRecord host;
  std::vector<std::string> paths;
};

std::vector<ScanFinding> run_jobs(const std::vector<TargetJob>& jobs, const ScanConfig& config,
                                  CloudSim& cloud, const ApplicationId& probe_app_id,
                                  ScanCounters* counters, int round) {
  std::vector<ScanFinding> findings;
  std::mutex findings_mutex;
  std::atomic<std::size_t> next{0};

  const int workers = std::max(1, std::min<int>(config.concurrency_limit,
                                                static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t index = next.fetch_add(1);
        if (index >= jobs.size()) return;
        const TargetJob& job = jobs[index];
        auto found = probe_target(job.display_host, job.host, job.paths, config, cloud,
                                  probe_app_id, counters, round);
        std::lock_guard lock(findings_mutex);
        for (auto& f : found) findings.push_back(std::move(f));
      }
    });
  }
  for (auto& thread : pool) thread.join();
  sort_findings(findings);
  return findings;
}

}  // namespace

std::vector<ScanFinding> round1(const std::vector<CandidateHost>& candidates,
                                const ScanConfig& config, CloudSim& cloud,
                                const ApplicationId& probe_app_id, ScanCounters* counters) {
  std::vector<std::string> paths = config.path_list;
  if (config.per_host_budget >= 0 &&
      paths.size() > static_cast<std::size_t>(config.per_host_budget)) {
    paths.resize(static_cast<std::size_t>(config.per_host_budget));
  }
  std::vector<TargetJob> jobs;
  jobs.reserve(candidates.size());
  for (const auto& candidate : candidates) {
    jobs.push_back({candidate.hostname, candidate.host, paths});
  }
  return run_jobs(jobs, config, cloud, probe_app_id, counters, 1);
}

std::optional<std::string> most_common_path(const std::vector<ScanFinding>& findings) {
  if (findings.empty()) throw NoFindings();
  std::map<std::string, int> counts;
  for (const auto& finding : findings) {
    if (finding.path != "/") ++counts[finding.path];
  }
  if (counts.empty()) return std::nullopt;
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    // map iteration is lexicographic, so ties keep the earlier path
    if (it->second > best->second) best = it;
  }
  return best->first;
}

std::vector<ScanFinding> round2(const std::vector<HostRecord>& remaining_hosts,
                                const std::set<std::string>& round1_probed_addresses,
                                const std::string& common_path, const ScanConfig& config,
                                CloudSim& cloud, const ApplicationId& probe_app_id,
                                ScanCounters* counters) {
  for (const auto& host : remaining_hosts) {
    if (round1_probed_addresses.count(host.address())) {
      throw std::invalid_argument("host " + host.address() + " was already probed in round 1");
    }
  }
  std::vector<std::string> paths = {common_path};
  if (common_path != "/") paths.push_back("/");
  std::vector<TargetJob> jobs;
  jobs.reserve(remaining_hosts.size());
  for (const auto& host : remaining_hosts) {
    jobs.push_back({host.ip, host, paths});
  }
  return run_jobs(jobs, config, cloud, probe_app_id, counters, 2);
}

ScanReport build_report(std::vector<ScanFinding> findings, Geolocator& geo) {
  ScanReport report;
  sort_findings(findings);
  std::set<std::string> ips;
  for (const auto& finding : findings) {
    ++report.path_histogram[finding.path];
    if (finding.round == 1) ++report.round1_findings;
    if (finding.round == 2) ++report.round2_findings;
    if (ips.insert(finding.ip).second) report.unique_endpoint_ips.push_back(finding.ip);
  }
  std::sort(report.unique_endpoint_ips.begin(), report.unique_endpoint_ips.end());
  for (const auto& ip : report.unique_endpoint_ips) ++report.country_histogram[geo.country(ip)];
  report.findings = std::move(findings);
  return report;
}

std::string report_to_json(const ScanReport& report) {
  using nlohmann::json;
  json findings = json::array();
  for (const auto& f : report.findings) {
    findings.push_back({
        {"ip", f.ip},
        {"port", f.port},
        {"hostname", f.hostname},
        {"path", f.path},
        {"url", f.url},
        {"response_excerpt", f.response_excerpt},
        {"round", f.round},
    });
  }
  json doc = {
      {"schema", "skillprobe-scan-report/1"},
      {"findings", std::move(findings)},
      {"unique_endpoints", report.unique_endpoint_ips},
      {"path_histogram", report.path_histogram},
      {"country_histogram", report.country_histogram},
      {"round1_findings", report.round1_findings},
      {"round2_findings", report.round2_findings},
  };
  return doc.dump(2) + "\n";
}

ScanPipelineResult run_scan(const std::vector<HostRecord>& hosts,
                            const std::vector<SkillStoreRecord>& store_records,
                            Resolver& resolver, const ScanConfig& config, CloudSim& cloud,
                            const ApplicationId& probe_app_id, bool round2_enabled,
                            Geolocator& geo, const PublicSuffixList& psl) {
  ScanPipelineResult result;
  ScanCounters counters;

  CandidateExtraction extraction =
      extract_candidate_domains(store_records, config.hosting_whitelist, psl);
  result.candidates = extraction.candidates;
  result.skipped_store_urls = extraction.skipped_urls;

  MatchStats match_stats;
  std::vector<CandidateHost> pairs =
      match_hosts(extraction.candidates, hosts, resolver, &match_stats);
  result.unresolved_candidates = match_stats.unresolved;
  result.matched_candidate_hosts = static_cast<int>(pairs.size());

  std::vector<ScanFinding> findings =
      round1(pairs, config, cloud, probe_app_id, &counters);
  for (const auto& pair : pairs) result.round1_probed_addresses.insert(pair.host.address());

  if (round2_enabled) {
    std::optional<std::string> common;
    if (!findings.empty()) common = most_common_path(findings);
    const std::string round2_path = common.value_or("/");
    result.round2_path = round2_path;

    std::vector<HostRecord> remaining;
    for (const auto& host : hosts) {
      if (!result.round1_probed_addresses.count(host.address())) remaining.push_back(host);
    }
    std::vector<ScanFinding> extra = round2(remaining, result.round1_probed_addresses,
                                            round2_path, config, cloud, probe_app_id,
                                            &counters);
    for (auto& finding : extra) findings.push_back(std::move(finding));
  }

  result.report = build_report(std::move(findings), geo);
  result.probes_sent = counters.probes_sent.load();
  result.transport_failures = counters.transport_failures.load();
  return result;
}

}  // namespace skillprobe
