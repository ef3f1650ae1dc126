#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "skillprobe/attack.hpp"
#include "skillprobe/cloudsim.hpp"
#include "skillprobe/encoding.hpp"
#include "skillprobe/endpoint.hpp"
#include "skillprobe/fleet.hpp"
#include "skillprobe/scanner.hpp"
#include "skillprobe/vetting.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skillprobe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

void install_signal_handlers() {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
}

void wait_for_signal() {
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

void save_identity(const CloudIdentity& identity, const std::string& path) {
  json doc = {
      {"schema", "skillprobe-identity/1"},
      {"key_pem", pem_encode_private_key(identity.private_key.get())},
      {"chain_pem", pem_encode_chain(identity.cert_chain)},
      {"chain_locator", identity.chain_locator},
  };
  write_file(path, doc.dump(2) + "\n");
}

CloudIdentity load_identity(const std::string& path) {
  json doc = json::parse(read_file(path));
  CloudIdentity identity;
  identity.private_key = pem_decode_private_key(doc.at("key_pem").get<std::string>());
  identity.cert_chain = pem_decode_chain(doc.at("chain_pem").get<std::string>());
  if (identity.cert_chain.empty()) throw std::runtime_error("identity chain is empty");
  identity.chain_locator = doc.at("chain_locator").get<std::string>();
  identity.leaf_public = certificate_public_key(identity.cert_chain.front().get());
  return identity;
}

std::map<std::string, std::string> parse_resolve_flags(const std::vector<std::string>& flags) {
  std::map<std::string, std::string> addr_map;
  for (const auto& flag : flags) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--resolve expects host=ip");
    addr_map[flag.substr(0, eq)] = flag.substr(eq + 1);
  }
  return addr_map;
}

std::vector<Slot> parse_slot_flags(const std::vector<std::string>& flags) {
  std::vector<Slot> slots;
  for (const auto& flag : flags) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--slot expects name=value");
    slots.push_back({flag.substr(0, eq), flag.substr(eq + 1)});
  }
  return slots;
}

Instant timestamp_or_now(const std::string& text) {
  if (text.empty()) return now_utc();
  auto parsed = parse_rfc3339(text);
  if (!parsed) throw CLI::ValidationError("--timestamp must be RFC 3339 UTC");
  return *parsed;
}

// --- cloud -------------------------------------------------------------------

struct CloudKeygenArgs {
  std::string out;
  std::uint64_t seed = 0;
  bool seeded = false;
  int bits = 2048;
  std::string locator_host = "127.0.0.1";
  int locator_port = 0;
  std::string locator_path = "/chain/cloud.pem";
};

int cmd_cloud_keygen(const CloudKeygenArgs& args) {
  CloudIdentityParams params;
  if (args.seeded) params.seed = args.seed;
  params.key_bits = args.bits;
  params.locator_host = args.locator_host;
  params.locator_port = args.locator_port;
  params.locator_path = args.locator_path;
  CloudIdentity identity = generate_identity(params);
  save_identity(identity, args.out);
  std::cout << "identity written to " << args.out << "\n"
            << "chain locator: " << identity.chain_locator << "\n";
  return kExitOk;
}

int cmd_cloud_serve(const std::string& identity_path, const std::string& bind, int port) {
  CloudIdentity identity = load_identity(identity_path);
  ChainServer server(identity, bind, port);
  save_identity(identity, identity_path);  // persist the bound locator
  std::cout << "serving certificate chain at " << server.locator() << "\n";
  install_signal_handlers();
  wait_for_signal();
  server.stop();
  return kExitOk;
}

struct CloudSignArgs {
  std::string identity_path;
  std::string app_id;
  std::string intent = "LaunchRequest";
  std::vector<std::string> slots;
  std::string timestamp;
  std::string request_id;
  std::string out;
};

int cmd_cloud_sign(const CloudSignArgs& args) {
  CloudSim cloud(load_identity(args.identity_path));
  const Instant now = timestamp_or_now(args.timestamp);
  RequestEnvelope env =
      build_request(ApplicationId{args.app_id}, args.intent, parse_slot_flags(args.slots), now,
                    args.request_id.empty() ? cloud.fresh_request_id() : args.request_id);
  RecordedRequest recorded;
  recorded.message = sign_request(cloud.identity(), env);
  recorded.captured_at = now;
  recorded.source_application_id = env.application_id;
  write_file(args.out, serialize_recorded_request(recorded));
  std::cout << "signed request written to " << args.out << " ("
            << recorded.message.body.size() << " body bytes)\n";
  return kExitOk;
}

// --- endpoint ------------------------------------------------------------------

struct EndpointServeArgs {
  std::string mode = "valid";
  std::string tls = "standard";
  std::string app_id;
  std::string path = "/alexa";
  std::string bind = "127.0.0.1";
  int port = 0;
  std::string host = "endpoint.zoo.test";
  std::string trust_root;
  std::string cert, key;
  std::string tls_ca_cert, tls_ca_key;
  std::string tls_ca_out;
  std::int64_t tolerance = 150;
  std::vector<std::string> locator_allow;
  std::string custom_intent = "LookupIntent";
  bool injection_demo = false;
  bool track_request_ids = false;
};

int cmd_endpoint_serve(const EndpointServeArgs& args) {
  auto mode = endpoint_mode_from_string(args.mode);
  if (!mode) throw CLI::ValidationError("unknown --mode " + args.mode);
  if (*mode == EndpointMode::Offline) {
    std::cout << "offline mode is represented by not running a server\n";
    return kExitOk;
  }
  auto tls_kind = tls_profile_from_string(args.tls);
  if (!tls_kind) throw CLI::ValidationError("unknown --tls " + args.tls);

  TlsMaterial material;
  if (!args.cert.empty() && !args.key.empty()) {
    material.kind = *tls_kind;
    material.cert_pem = read_file(args.cert);
    material.key_pem = read_file(args.key);
  } else if (*tls_kind == TlsProfileKind::SelfSigned) {
    material = make_tls_material(*tls_kind, args.host, nullptr);
  } else {
    TlsAuthority authority;
    if (!args.tls_ca_cert.empty() && !args.tls_ca_key.empty()) {
      authority.cert_pem = read_file(args.tls_ca_cert);
      authority.key_pem = read_file(args.tls_ca_key);
    } else {
      authority = make_tls_authority("Skillprobe Testbed TLS CA");
      if (!args.tls_ca_out.empty()) {
        write_file((fs::path(args.tls_ca_out) / "tls-ca.pem").string(), authority.cert_pem);
        write_file((fs::path(args.tls_ca_out) / "tls-ca-key.pem").string(), authority.key_pem);
        std::cout << "ephemeral TLS authority written under " << args.tls_ca_out << "\n";
      }
    }
    material = make_tls_material(*tls_kind, args.host, &authority);
  }

  EndpointConfig config;
  config.mode = *mode;
  config.expected_app_id = ApplicationId{args.app_id};
  config.path = args.path;
  config.timestamp_tolerance_s = args.tolerance;
  config.state.custom_intent = args.custom_intent;
  config.state.injection_demo = args.injection_demo;
  config.track_request_ids = args.track_request_ids;
  if (!args.trust_root.empty()) config.trust_root_pem = read_file(args.trust_root);
  if (!args.locator_allow.empty()) config.locator_rules.allowed_hosts = args.locator_allow;

  EndpointServer server(std::move(config), std::move(material), args.bind, args.port);
  std::cout << "endpoint (" << args.mode << ", " << args.tls << ") listening on https://"
            << args.bind << ":" << server.port() << args.path << "\n";
  install_signal_handlers();
  wait_for_signal();
  server.stop();
  return kExitOk;
}

// --- vet ------------------------------------------------------------------------

struct VetArgs {
  std::string endpoint_url;
  std::string profile = "alexa-baseline";
  std::string report;
  std::string identity_path;
  std::string app_id;
  std::string custom_intent = "LookupIntent:num";
  std::string tls_root;
  bool insecure_tls = false;
  bool serve_chain = false;
  std::vector<std::string> resolve;
  std::int64_t tolerance = 150;
};

int cmd_vet(const VetArgs& args) {
  auto profile = vetting_profile_from_string(args.profile);
  if (!profile) throw CLI::ValidationError("unknown --profile " + args.profile);
  if (!args.insecure_tls && args.tls_root.empty()) {
    throw CLI::ValidationError("provide --tls-root or --insecure-tls");
  }

  CloudIdentity identity = load_identity(args.identity_path);
  std::unique_ptr<ChainServer> chain;
  if (args.serve_chain) {
    chain = std::make_unique<ChainServer>(identity, "127.0.0.1");
    std::cout << "chain served at " << chain->locator() << "\n";
  }
  CloudSim cloud(std::move(identity));

  std::string intent = args.custom_intent, slot = "num";
  if (const auto colon = intent.find(':'); colon != std::string::npos) {
    slot = intent.substr(colon + 1);
    intent = intent.substr(0, colon);
  }
  const SkillRegistration& target =
      cloud.register_skill(ApplicationId{args.app_id}, args.endpoint_url, {{intent, {slot}}});

  TlsTrust trust =
      args.insecure_tls ? TlsTrust::insecure() : TlsTrust::strict(read_file(args.tls_root));
  trust.addr_map = parse_resolve_flags(args.resolve);

  auto suite = build_probe_suite(*profile, cloud, target, now_utc(), args.tolerance);
  VettingVerdict verdict = run_vetting(suite, args.endpoint_url, trust, *profile);

  std::cout << "profile: " << to_string(*profile) << "\n";
  for (const auto& outcome : verdict.outcomes) {
    std::cout << "  " << to_string(outcome.kind)
              << (outcome.intent.empty() ? "" : " (" + outcome.intent + ")") << ": "
              << (outcome.conforming ? "ok" : "NOT CONFORMING") << " (status " << outcome.status
              << ")\n";
  }
  for (const auto& finding : verdict.findings) std::cout << "finding: " << finding << "\n";
  std::cout << (verdict.passed ? "PASSED" : "FAILED") << "\n";

  if (!args.report.empty()) write_file(args.report, verdict_to_json(verdict));
  return verdict.passed ? kExitOk : kExitAssertion;
}

// --- attack ----------------------------------------------------------------------

struct AttackCaptureArgs {
  std::string identity_path;
  std::string intent = "LaunchRequest";
  std::vector<std::string> slots;
  std::string timestamp;
  std::string out;
};

int cmd_attack_capture(const AttackCaptureArgs& args) {
  CloudSim cloud(load_identity(args.identity_path));
  std::vector<Slot> slots = parse_slot_flags(args.slots);

  // The mock skill's schema mimics whatever we are about to type in.
  std::vector<std::pair<std::string, std::vector<std::string>>> schema;
  if (!is_default_intent(args.intent)) {
    std::vector<std::string> slot_names;
    for (const auto& s : slots) slot_names.push_back(s.name);
    schema.push_back({args.intent, slot_names});
  } else {
    schema.push_back({"LookupIntent", {"num"}});
  }
  const SkillRegistration& attacker = register_mock_skill(cloud, schema);
  RecordedRequest recorded =
      capture(cloud, attacker, args.intent, std::move(slots), timestamp_or_now(args.timestamp));
  write_file(args.out, serialize_recorded_request(recorded));
  std::cout << "captured request for mock skill " << attacker.application_id.value
            << " written to " << args.out << "\n";
  return kExitOk;
}

struct AttackReplayArgs {
  std::string in;
  std::string victim_url;
  int times = 1;
  std::string tls_root;
  bool insecure_tls = false;
  std::vector<std::string> resolve;
  std::string report;
};

int cmd_attack_replay(const AttackReplayArgs& args) {
  RecordedRequest recorded = parse_recorded_request(read_file(args.in));
  TlsTrust trust = !args.insecure_tls && !args.tls_root.empty()
                       ? TlsTrust::strict(read_file(args.tls_root))
                       : TlsTrust::insecure();
  trust.addr_map = parse_resolve_flags(args.resolve);

  auto results = replay(recorded, args.victim_url, trust, args.times);
  json attempts = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const ReplayResult& r = results[i];
    std::cout << "attempt " << (i + 1) << ": " << (r.accepted ? "ACCEPTED" : "rejected")
              << " (status " << r.status << ", " << r.latency.count() << " ms)\n";
    attempts.push_back({{"accepted", r.accepted},
                        {"status", r.status},
                        {"transport", std::string(to_string(r.transport))},
                        {"latency_ms", r.latency.count()},
                        {"body", r.response_body}});
  }
  if (!args.report.empty()) {
    json doc = {{"schema", "skillprobe-replay/1"},
                {"victim", args.victim_url},
                {"attempts", std::move(attempts)}};
    write_file(args.report, doc.dump(2) + "\n");
  }
  return kExitOk;
}

struct AttackDemoArgs {
  std::string identity_path;
  std::string victim_url;
  std::string payload = "0 OR 1=1";
  std::string tls_root;
  bool insecure_tls = false;
  bool serve_chain = false;
  std::vector<std::string> resolve;
};

int cmd_attack_demo(const AttackDemoArgs& args) {
  CloudIdentity identity = load_identity(args.identity_path);
  std::unique_ptr<ChainServer> chain;
  if (args.serve_chain) chain = std::make_unique<ChainServer>(identity, "127.0.0.1");
  CloudSim cloud(std::move(identity));
  const SkillRegistration& attacker = register_mock_skill(cloud, {{"LookupIntent", {"num"}}});

  TlsTrust trust = !args.insecure_tls && !args.tls_root.empty()
                       ? TlsTrust::strict(read_file(args.tls_root))
                       : TlsTrust::insecure();
  trust.addr_map = parse_resolve_flags(args.resolve);

  try {
    InjectionDemoReport report =
        run_injection_demo(cloud, attacker, args.victim_url, trust, args.payload, now_utc());
    std::cout << "payload:        " << report.payload << "\n"
              << "composed query: " << report.composed_query << "\n"
              << "victim said:    " << report.speech_text << "\n";
    return kExitOk;
  } catch (const DemoPreconditionFailed& e) {
    std::cout << "demo precondition failed: " << e.what() << "\n";
    return kExitAssertion;
  }
}

// --- scan ------------------------------------------------------------------------

struct ScanArgs {
  std::string hosts;
  std::string store_meta;
  std::string resolver;
  std::string identity_path;
  std::string report;
  bool round2 = false;
  std::vector<std::string> whitelist;
  std::vector<std::string> paths;
  int concurrency = 8;
  int interval_ms = 200;
  int timeout_ms = 2000;
  std::string probe_app_id = "amzn1.ask.skill.scanner-probe";
  std::string psl_path;
  bool serve_chain = false;
  bool i_understand_scanning = false;
};

int cmd_scan(const ScanArgs& args) {
  LoadedHosts hosts = load_hosts_file(args.hosts);
  for (const auto& host : hosts.records) {
    if (host.ip.rfind("127.", 0) != 0 && !args.i_understand_scanning) {
      std::cerr << "host list contains non-loopback address " << host.ip << ".\n"
                << "Scanning hosts outside this machine requires --i-understand-scanning.\n"
                << "Only probe infrastructure you are authorized to test. Each probe is a\n"
                << "single spoofed LaunchRequest per path; that intent only triggers a\n"
                << "welcome message and changes no server state.\n";
      return kExitUsage;
    }
  }

  CloudIdentity identity = load_identity(args.identity_path);
  std::unique_ptr<ChainServer> chain;
  if (args.serve_chain) {
    chain = std::make_unique<ChainServer>(identity, "127.0.0.1");
    std::cout << "chain served at " << chain->locator() << "\n";
  }
  CloudSim cloud(std::move(identity));

  auto store = load_store_meta_file(args.store_meta);
  FileResolver resolver = FileResolver::from_file(args.resolver);

  ScanConfig config;
  if (!args.paths.empty()) config.path_list = args.paths;
  config.concurrency_limit = args.concurrency;
  config.per_host_interval_ms = args.interval_ms;
  config.per_host_timeout_ms = args.timeout_ms;
  config.hosting_whitelist.insert(args.whitelist.begin(), args.whitelist.end());

  const PublicSuffixList* psl = &PublicSuffixList::bundled_snapshot();
  PublicSuffixList custom_psl;
  if (!args.psl_path.empty()) {
    custom_psl = PublicSuffixList::from_file(args.psl_path);
    psl = &custom_psl;
  }

  StubGeolocator geo;
  ScanPipelineResult result =
      run_scan(hosts.records, store, resolver, config, cloud, ApplicationId{args.probe_app_id},
               args.round2, geo, *psl);

  std::cout << "hosts: " << hosts.records.size() << " (skipped " << hosts.skipped_lines
            << " lines)\n"
            << "candidates: " << result.candidates.size() << " ("
            << result.unresolved_candidates << " unresolved, " << result.skipped_store_urls
            << " bad urls)\n"
            << "round-1 pairs: " << result.matched_candidate_hosts << "\n"
            << "probes sent: " << result.probes_sent << " (" << result.transport_failures
            << " transport failures)\n";
  if (result.round2_path) std::cout << "round-2 path: " << *result.round2_path << "\n";
  std::cout << "findings: " << result.report.findings.size() << " urls over "
            << result.report.unique_endpoint_ips.size() << " endpoints ("
            << result.report.round1_findings << " round 1, " << result.report.round2_findings
            << " round 2)\n";
  for (const auto& finding : result.report.findings) {
    std::cout << "  [round " << finding.round << "] " << finding.url << "\n";
  }
  if (!args.report.empty()) write_file(args.report, report_to_json(result.report));
  return kExitOk;
}

// --- fleet ------------------------------------------------------------------------

int cmd_fleet_up(const std::string& manifest_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, int bits, bool no_block) {
  FleetManifest manifest = FleetManifest::from_json(read_file(manifest_path));
  FleetOptions options;
  options.seed = seed;
  options.key_bits = bits;
  Fleet fleet(std::move(manifest), options);
  fleet.write_artifacts(out_dir);
  write_file((fs::path(out_dir) / "fleet.pid").string(), std::to_string(getpid()) + "\n");
  std::cout << "fleet up: " << fleet.listeners().size() << " listeners; artifacts in "
            << out_dir << "\n";
  for (const auto& l : fleet.listeners()) {
    std::cout << "  " << l.name << " " << l.ip << ":" << l.port;
    if (l.is_decoy) {
      std::cout << " (decoy)";
    } else {
      std::cout << " (" << to_string(l.mode) << " at " << l.path << ")";
    }
    std::cout << "\n";
  }
  if (no_block) {
    fleet.stop();
    return kExitOk;
  }
  install_signal_handlers();
  wait_for_signal();
  fleet.stop();
  std::error_code ec;
  fs::remove(fs::path(out_dir) / "fleet.pid", ec);
  return kExitOk;
}

int cmd_fleet_down(const std::string& out_dir, const std::string& pid_file) {
  const std::string path =
      !pid_file.empty() ? pid_file : (fs::path(out_dir) / "fleet.pid").string();
  std::ifstream in(path);
  pid_t pid = 0;
  if (!(in >> pid) || pid <= 0) {
    std::cerr << "no usable pid in " << path << "\n";
    return kExitAssertion;
  }
  if (kill(pid, SIGTERM) != 0) {
    std::cerr << "kill(" << pid << ") failed: " << std::strerror(errno) << "\n";
    return kExitAssertion;
  }
  std::cout << "sent SIGTERM to fleet pid " << pid << "\n";
  return kExitOk;
}

// --- matrix ----------------------------------------------------------------------

int cmd_matrix(const std::string& profile_arg, const std::string& report, int bits) {
  std::vector<VettingProfileName> profiles;
  if (profile_arg == "both") {
    profiles = {VettingProfileName::AlexaBaseline, VettingProfileName::Strict};
  } else if (auto profile = vetting_profile_from_string(profile_arg)) {
    profiles = {*profile};
  } else {
    throw CLI::ValidationError("unknown --profile " + profile_arg);
  }

  MatrixOptions options;
  options.key_bits = bits;
  bool all_match = true;
  json docs = json::object();
  for (VettingProfileName profile : profiles) {
    MatrixResult result = run_verdict_matrix(profile, options);
    std::cout << matrix_to_text(result);
    const bool match = matrix_matches_expected(result);
    std::cout << "matches expected pattern: " << (match ? "yes" : "NO") << "\n\n";
    all_match = all_match && match;
    docs[std::string(to_string(profile))] = json::parse(matrix_to_json(result));
  }
  if (!report.empty()) write_file(report, docs.dump(2) + "\n");
  return all_match ? kExitOk : kExitAssertion;
}

// --- e2e attack --------------------------------------------------------------------

int cmd_e2e_attack(const std::string& victim_mode_arg, std::int64_t stale_s,
                   const std::string& report, int bits) {
  auto victim_mode = endpoint_mode_from_string(victim_mode_arg);
  if (!victim_mode || *victim_mode == EndpointMode::Offline) {
    throw CLI::ValidationError("unknown --victim-mode " + victim_mode_arg);
  }

  CloudIdentityParams params;
  params.key_bits = bits;
  CloudIdentity identity = generate_identity(params);
  ChainServer chain(identity, "127.0.0.1");
  CloudSim cloud(identity);

  const std::string host = "victim.e2e.test";
  const TlsAuthority authority = make_tls_authority("Skillprobe Testbed TLS CA");
  TlsTrust trust = TlsTrust::strict(authority.cert_pem, {{host, "127.0.0.1"}});

  const SkillRegistration& victim_skill =
      cloud.register_skill(ApplicationId{"amzn1.ask.skill.victim"},
                           "https://victim.e2e.test/alexa", {{"LookupIntent", {"num"}}});

  auto start = [&](EndpointMode mode) {
    EndpointConfig config;
    config.mode = mode;
    config.expected_app_id = victim_skill.application_id;
    config.trust_root_pem = cloud.identity().root_pem();
    return std::make_unique<EndpointServer>(
        std::move(config), make_tls_material(TlsProfileKind::Standard, host, &authority),
        "127.0.0.1");
  };
  auto victim = start(*victim_mode);
  auto control = start(EndpointMode::Valid);

  std::cout << "[1] attacker registers a mock skill mimicking the victim schema\n";
  const SkillRegistration& attacker = register_mock_skill(cloud, victim_skill.intent_schema);
  std::cout << "    mock application-ID: " << attacker.application_id.value << "\n";

  std::cout << "[2] the text interface signs the attacker's command line\n";
  RecordedRequest recorded = capture(cloud, attacker, "LaunchRequest", {}, now_utc() - stale_s);
  std::cout << "[3] request recorded (" << recorded.message.body.size()
            << " body bytes; the app-ID inside is the attacker's and cannot be edited "
               "without breaking the signature)\n";

  std::cout << "[4] replaying at the victim (" << to_string(*victim_mode)
            << ") and the control (valid)\n";
  ReplayResult against_victim = replay(recorded, victim->url(host), trust, 1).front();
  ReplayResult against_control = replay(recorded, control->url(host), trust, 1).front();

  auto describe = [](const ReplayResult& r) {
    std::string out = r.accepted ? "ACCEPTED" : "rejected";
    out += " (status " + std::to_string(r.status);
    if (!r.accepted && r.status == 400) out += ", " + r.response_body;
    return out + ")";
  };
  std::cout << "    victim:  " << describe(against_victim) << "\n";
  std::cout << "    control: " << describe(against_control) << "\n";

  const bool control_detects =
      !against_control.accepted &&
      against_control.response_body.find("AppIdMismatch") != std::string::npos;
  const bool demonstrated = against_victim.accepted && control_detects;
  std::cout << (demonstrated
                    ? "spoofing demonstrated: checking the application-ID is what stops it\n"
                    : "no spoofing demonstrated\n");

  if (!report.empty()) {
    json doc = {
        {"schema", "skillprobe-e2e-attack/1"},
        {"victim_mode", std::string(to_string(*victim_mode))},
        {"stale_seconds", stale_s},
        {"victim",
         {{"accepted", against_victim.accepted},
          {"status", against_victim.status},
          {"body", against_victim.response_body}}},
        {"control",
         {{"accepted", against_control.accepted},
          {"status", against_control.status},
          {"body", against_control.response_body}}},
        {"demonstrated", demonstrated},
    };
    write_file(report, doc.dump(2) + "\n");
  }
  return demonstrated ? kExitOk : kExitAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skillprobe: a testbed for smart-home skill endpoint authentication"};
  app.require_subcommand(1);
  app.set_config("--config")->envname("SKILLPROBE_CONFIG");

  auto* cloud = app.add_subcommand("cloud", "signing-cloud simulator");
  cloud->require_subcommand(1);

  CloudKeygenArgs keygen_args;
  auto* keygen = cloud->add_subcommand("keygen", "generate a signing identity");
  keygen->add_option("--out", keygen_args.out, "identity file to write")->required();
  auto* seed_opt = keygen->add_option("--seed", keygen_args.seed, "deterministic seed");
  keygen->add_option("--bits", keygen_args.bits, "RSA key size");
  keygen->add_option("--locator-host", keygen_args.locator_host);
  keygen->add_option("--locator-port", keygen_args.locator_port);
  keygen->add_option("--locator-path", keygen_args.locator_path);

  std::string serve_identity, serve_bind = "127.0.0.1";
  int serve_port = 0;
  auto* cloud_serve = cloud->add_subcommand("serve", "serve the certificate chain");
  cloud_serve->add_option("--identity", serve_identity)->required();
  cloud_serve->add_option("--bind", serve_bind);
  cloud_serve->add_option("--port", serve_port);

  CloudSignArgs sign_args;
  auto* cloud_sign = cloud->add_subcommand("sign", "sign a request envelope");
  cloud_sign->add_option("--identity", sign_args.identity_path)->required();
  cloud_sign->add_option("--app-id", sign_args.app_id)->required();
  cloud_sign->add_option("--intent", sign_args.intent);
  cloud_sign->add_option("--slot", sign_args.slots, "name=value (repeatable)");
  cloud_sign->add_option("--timestamp", sign_args.timestamp, "RFC 3339, default now");
  cloud_sign->add_option("--request-id", sign_args.request_id);
  cloud_sign->add_option("--out", sign_args.out, "recorded-request file")->required();

  EndpointServeArgs endpoint_args;
  auto* endpoint = app.add_subcommand("endpoint", "skill endpoint servers");
  endpoint->require_subcommand(1);
  auto* endpoint_serve = endpoint->add_subcommand("serve", "run one zoo endpoint");
  endpoint_serve->add_option("--mode", endpoint_args.mode,
                             "valid|ignore-app-id|ignore-timestamp|accept-all|reject-all");
  endpoint_serve->add_option("--tls", endpoint_args.tls, "standard|wildcard|self-signed");
  endpoint_serve->add_option("--app-id", endpoint_args.app_id)->required();
  endpoint_serve->add_option("--path", endpoint_args.path);
  endpoint_serve->add_option("--bind", endpoint_args.bind);
  endpoint_serve->add_option("--port", endpoint_args.port);
  endpoint_serve->add_option("--host", endpoint_args.host,
                             "name the certificate is issued for");
  endpoint_serve->add_option("--trust-root", endpoint_args.trust_root,
                             "signing root CA PEM for request verification");
  endpoint_serve->add_option("--cert", endpoint_args.cert);
  endpoint_serve->add_option("--key", endpoint_args.key);
  endpoint_serve->add_option("--tls-ca-cert", endpoint_args.tls_ca_cert);
  endpoint_serve->add_option("--tls-ca-key", endpoint_args.tls_ca_key);
  endpoint_serve->add_option("--tls-ca-out", endpoint_args.tls_ca_out,
                             "directory to dump an ephemeral TLS CA into");
  endpoint_serve->add_option("--tolerance", endpoint_args.tolerance,
                             "timestamp window in seconds");
  endpoint_serve->add_option("--locator-allow", endpoint_args.locator_allow,
                             "allowed chain locator hosts (repeatable)");
  endpoint_serve->add_option("--custom-intent", endpoint_args.custom_intent);
  endpoint_serve->add_flag("--injection-demo", endpoint_args.injection_demo);
  endpoint_serve->add_flag("--track-request-ids", endpoint_args.track_request_ids);

  VetArgs vet_args;
  auto* vet = app.add_subcommand("vet", "run a vetting profile against an endpoint");
  vet->add_option("--endpoint", vet_args.endpoint_url)->required();
  vet->add_option("--profile", vet_args.profile, "alexa-baseline|strict");
  vet->add_option("--report", vet_args.report);
  vet->add_option("--identity", vet_args.identity_path)->required();
  vet->add_option("--app-id", vet_args.app_id, "the endpoint's expected app-ID")->required();
  vet->add_option("--custom-intent", vet_args.custom_intent, "NAME[:SLOT]");
  vet->add_option("--tls-root", vet_args.tls_root);
  vet->add_flag("--insecure-tls", vet_args.insecure_tls);
  vet->add_flag("--serve-chain", vet_args.serve_chain);
  vet->add_option("--resolve", vet_args.resolve, "host=ip (repeatable)");
  vet->add_option("--tolerance", vet_args.tolerance);

  auto* attack = app.add_subcommand("attack", "cloud spoofing attack steps");
  attack->require_subcommand(1);

  AttackCaptureArgs capture_args;
  auto* attack_capture = attack->add_subcommand("capture", "record a signed request");
  attack_capture->add_option("--identity", capture_args.identity_path)->required();
  attack_capture->add_option("--intent", capture_args.intent);
  attack_capture->add_option("--slot", capture_args.slots, "name=value (repeatable)");
  attack_capture->add_option("--timestamp", capture_args.timestamp);
  attack_capture->add_option("--out", capture_args.out)->required();

  AttackReplayArgs replay_args;
  auto* attack_replay = attack->add_subcommand("replay", "replay a recorded request");
  attack_replay->add_option("--in", replay_args.in)->required();
  attack_replay->add_option("--victim", replay_args.victim_url)->required();
  attack_replay->add_option("--times", replay_args.times);
  attack_replay->add_option("--tls-root", replay_args.tls_root);
  attack_replay->add_flag("--insecure-tls", replay_args.insecure_tls);
  attack_replay->add_option("--resolve", replay_args.resolve);
  attack_replay->add_option("--report", replay_args.report);

  AttackDemoArgs demo_args;
  auto* attack_demo = attack->add_subcommand("demo-injection", "payload delivery demo");
  attack_demo->add_option("--identity", demo_args.identity_path)->required();
  attack_demo->add_option("--victim", demo_args.victim_url)->required();
  attack_demo->add_option("--payload", demo_args.payload);
  attack_demo->add_option("--tls-root", demo_args.tls_root);
  attack_demo->add_flag("--insecure-tls", demo_args.insecure_tls);
  attack_demo->add_flag("--serve-chain", demo_args.serve_chain);
  attack_demo->add_option("--resolve", demo_args.resolve);

  ScanArgs scan_args;
  auto* scan = app.add_subcommand("scan", "two-round endpoint discovery");
  scan->add_option("--hosts", scan_args.hosts)->required();
  scan->add_option("--store-meta", scan_args.store_meta)->required();
  scan->add_option("--resolver", scan_args.resolver)->required();
  scan->add_option("--identity", scan_args.identity_path)->required();
  scan->add_option("--report", scan_args.report);
  scan->add_flag("--round2", scan_args.round2);
  scan->add_option("--whitelist", scan_args.whitelist, "hosting domains (repeatable)");
  scan->add_option("--path", scan_args.paths, "override the probe path list");
  scan->add_option("--concurrency", scan_args.concurrency);
  scan->add_option("--interval-ms", scan_args.interval_ms);
  scan->add_option("--timeout-ms", scan_args.timeout_ms);
  scan->add_option("--probe-app-id", scan_args.probe_app_id);
  scan->add_option("--psl", scan_args.psl_path, "public suffix snapshot file");
  scan->add_flag("--serve-chain", scan_args.serve_chain);
  scan->add_flag("--i-understand-scanning", scan_args.i_understand_scanning);

  auto* fleet = app.add_subcommand("fleet", "synthetic endpoint fleets");
  fleet->require_subcommand(1);
  std::string fleet_manifest, fleet_out = "fleet-out";
  std::uint64_t fleet_seed = 0;
  int fleet_bits = 2048;
  bool fleet_no_block = false;
  auto* fleet_up = fleet->add_subcommand("up", "start a fleet and emit scanner inputs");
  fleet_up->add_option("--manifest", fleet_manifest)->required();
  fleet_up->add_option("--out", fleet_out);
  auto* fleet_seed_opt = fleet_up->add_option("--seed", fleet_seed);
  fleet_up->add_option("--bits", fleet_bits);
  fleet_up->add_flag("--no-block", fleet_no_block,
                     "start, write artifacts, stop, exit (smoke testing)");

  std::string fleet_down_out = "fleet-out", fleet_down_pid;
  auto* fleet_down = fleet->add_subcommand("down", "stop a running fleet");
  fleet_down->add_option("--out", fleet_down_out);
  fleet_down->add_option("--pid-file", fleet_down_pid);

  std::string matrix_profile = "both", matrix_report;
  int matrix_bits = 2048;
  auto* matrix = app.add_subcommand("matrix", "run the 18-setting vetting matrix");
  matrix->add_option("--profile", matrix_profile, "alexa-baseline|strict|both");
  matrix->add_option("--report", matrix_report);
  matrix->add_option("--bits", matrix_bits);

  std::string e2e_mode = "ignore-app-id", e2e_report;
  std::int64_t e2e_stale = 0;
  int e2e_bits = 2048;
  auto* e2e = app.add_subcommand("e2e-attack", "victim/control spoofing demonstration");
  e2e->add_option("--victim-mode", e2e_mode);
  e2e->add_option("--stale", e2e_stale, "age the captured request by N seconds");
  e2e->add_option("--report", e2e_report);
  e2e->add_option("--bits", e2e_bits);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (keygen->parsed()) {
      keygen_args.seeded = seed_opt->count() > 0;
      return cmd_cloud_keygen(keygen_args);
    }
    if (cloud_serve->parsed()) return cmd_cloud_serve(serve_identity, serve_bind, serve_port);
    if (cloud_sign->parsed()) return cmd_cloud_sign(sign_args);
    if (endpoint_serve->parsed()) return cmd_endpoint_serve(endpoint_args);
    if (vet->parsed()) return cmd_vet(vet_args);
    if (attack_capture->parsed()) return cmd_attack_capture(capture_args);
    if (attack_replay->parsed()) return cmd_attack_replay(replay_args);
    if (attack_demo->parsed()) return cmd_attack_demo(demo_args);
    if (scan->parsed()) return cmd_scan(scan_args);
    if (fleet_up->parsed()) {
      return cmd_fleet_up(fleet_manifest, fleet_out,
                          fleet_seed_opt->count() > 0 ? std::optional(fleet_seed) : std::nullopt,
                          fleet_bits, fleet_no_block);
    }
    if (fleet_down->parsed()) return cmd_fleet_down(fleet_down_out, fleet_down_pid);
    if (matrix->parsed()) return cmd_matrix(matrix_profile, matrix_report, matrix_bits);
    if (e2e->parsed()) return cmd_e2e_attack(e2e_mode, e2e_stale, e2e_report, e2e_bits);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAssertion;
  }
  return kExitUsage;
}
