#include "skillprobe/vetting.hpp"

#include <json.hpp>

#include <sstream>

namespace skillprobe {

using nlohmann::json;

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::FunctionalIntent: return "functional-intent";
    case ProbeKind::EmptySignature: return "empty-signature";
    case ProbeKind::InvalidSignature: return "invalid-signature";
    case ProbeKind::ForeignChainLocator: return "foreign-chain-locator";
    case ProbeKind::WrongAppId: return "wrong-app-id";
    case ProbeKind::StaleTimestamp: return "stale-timestamp";
    case ProbeKind::ReplayedRequest: return "replayed-request";
    case ProbeKind::MalformedBody: return "malformed-body";
  }
  return "functional-intent";
}

std::string_view to_string(VettingProfileName profile) {
  return profile == VettingProfileName::AlexaBaseline ? "alexa-baseline" : "strict";
}

std::optional<VettingProfileName> vetting_profile_from_string(std::string_view name) {
  if (name == "alexa-baseline") return VettingProfileName::AlexaBaseline;
  if (name == "strict") return VettingProfileName::Strict;
  return std::nullopt;
}

std::vector<Probe> build_probe_suite(VettingProfileName profile, CloudSim& cloud,
                                     const SkillRegistration& target, Instant now,
                                     std::int64_t assumed_tolerance_s) {
  std::vector<Probe> suite;

  for (const auto& intent : default_intents()) {
    suite.push_back({ProbeKind::FunctionalIntent, intent,
                     cloud.text_interface(target, intent, {}, now)});
  }
  if (auto custom = target.custom_intent()) {
    std::vector<Slot> slots;
    if (!custom->second.empty()) slots.push_back({custom->second.front(), "1"});
    suite.push_back({ProbeKind::FunctionalIntent, custom->first,
                     cloud.text_interface(target, custom->first, std::move(slots), now)});
  }

  // Valid body, empty signature header.
  {
    SignedMessage msg = cloud.text_interface(target, "LaunchRequest", {}, now);
    msg.signature.clear();
    suite.push_back({ProbeKind::EmptySignature, "", std::move(msg)});
  }
  // Valid body carrying the signature of a different body.
  {
    SignedMessage msg = cloud.text_interface(target, "LaunchRequest", {}, now);
    msg.signature = cloud.text_interface(target, "StopIntent", {}, now).signature;
    suite.push_back({ProbeKind::InvalidSignature, "", std::move(msg)});
  }
  // Correctly signed, chain locator pointing outside the allowed rules.
  {
    SignedMessage msg = cloud.text_interface(target, "LaunchRequest", {}, now);
    msg.chain_locator = "https://chains.invalid/chain/cloud.pem";
    suite.push_back({ProbeKind::ForeignChainLocator, "", std::move(msg)});
  }

  if (profile == VettingProfileName::Strict) {
    // Correctly signed for a different registered skill.
    {
      const SkillRegistration& decoy = cloud.register_skill(
          cloud.fresh_application_id("vetting-decoy"), "https://decoy.invalid/alexa", {});
      suite.push_back({ProbeKind::WrongAppId, "",
                       cloud.text_interface(decoy, "LaunchRequest", {}, now)});
    }
    suite.push_back({ProbeKind::StaleTimestamp, "",
                     cloud.text_interface(target, "LaunchRequest", {},
                                          now - (assumed_tolerance_s + 60))});
    suite.push_back({ProbeKind::ReplayedRequest, suite.front().intent, suite.front().message});
    // Signed truncated body: the signature verifies but the body no longer
    // parses, so only the body-parse check can catch it.
    {
      std::string body = cloud.text_interface(target, "LaunchRequest", {}, now).body;
      suite.push_back({ProbeKind::MalformedBody, "",
                       cloud.sign_raw_body(body.substr(0, body.size() / 2))});
    }
  }
  return suite;
}

namespace {

bool expects_accept(ProbeKind kind) { return kind == ProbeKind::FunctionalIntent; }

bool outcome_conforming(ProbeKind kind, const DispatchResult& res) {
  if (kind == ProbeKind::ReplayedRequest) {
    // Dual outcome: a replay inside the freshness window is rejected only
    // by endpoints that track request ids; accepting it with a valid
    // duplicate response is also in-contract.
    if (!res.ok()) return false;
    return res.status != 200 || is_valid_skill_response(res.body);
  }
  if (expects_accept(kind)) {
    return res.ok() && res.status == 200 && is_valid_skill_response(res.body);
  }
  // Rejection must be an active non-200 answer; silence does not count.
  return res.ok() && res.status != 200;
}

std::string finding_text(const Probe& probe, const DispatchResult& res) {
  std::ostringstream out;
  if (!res.ok()) {
    out << to_string(probe.kind) << " probe got no response (" << to_string(res.error) << ")";
    return out.str();
  }
  switch (probe.kind) {
    case ProbeKind::FunctionalIntent:
      out << "functional probe " << probe.intent
          << " was not answered with a valid skill response (status " << res.status << ")";
      break;
    case ProbeKind::EmptySignature:
      out << "empty-signature probe was accepted (endpoint does not verify the cloud signature)";
      break;
    case ProbeKind::InvalidSignature:
      out << "invalid-signature probe was accepted (endpoint does not verify the cloud signature)";
      break;
    case ProbeKind::ForeignChainLocator:
      out << "foreign-chain-locator probe was accepted (endpoint does not validate the "
             "certificate chain URL)";
      break;
    case ProbeKind::WrongAppId:
      out << "wrong-application-ID probe was accepted (endpoint does not verify the "
             "application-ID)";
      break;
    case ProbeKind::StaleTimestamp:
      out << "stale-timestamp probe was accepted (endpoint does not verify the timestamp)";
      break;
    case ProbeKind::ReplayedRequest:
      out << "replayed-request probe was answered with an invalid response";
      break;
    case ProbeKind::MalformedBody:
      out << "malformed-body probe was accepted (endpoint does not parse the request body)";
      break;
  }
  return out.str();
}

}  // namespace

VettingVerdict run_vetting(const std::vector<Probe>& suite, const std::string& endpoint_url,
                           const TlsTrust& trust, VettingProfileName profile,
                           int timeout_ms) {
  VettingVerdict verdict;
  verdict.profile = profile;
  if (suite.empty()) throw std::invalid_argument("probe suite is empty");

  for (std::size_t i = 0; i < suite.size(); ++i) {
    const Probe& probe = suite[i];
    DispatchResult res = dispatch(probe.message, endpoint_url, trust, timeout_ms);

    if (i == 0 && res.error == TransportError::Tls) {
      verdict.outcomes.push_back({probe.kind, probe.intent, 0, res.error, false});
      verdict.findings.push_back(
          "TlsCertificate: endpoint certificate failed validation, test terminated (" +
          res.error_detail + ")");
      verdict.passed = false;
      return verdict;
    }
    if (i == 0 && (res.error == TransportError::Connect || res.error == TransportError::Timeout)) {
      verdict.outcomes.push_back({probe.kind, probe.intent, 0, res.error, false});
      verdict.findings.push_back("EndpointUnreachable: no response from endpoint (" +
                                 std::string(to_string(res.error)) + ")");
      verdict.passed = false;
      return verdict;
    }

    ProbeOutcome outcome{probe.kind, probe.intent, res.status, res.error,
                         outcome_conforming(probe.kind, res)};
    if (!outcome.conforming) verdict.findings.push_back(finding_text(probe, res));
    verdict.outcomes.push_back(std::move(outcome));
  }

  verdict.passed = true;
  for (const auto& outcome : verdict.outcomes) verdict.passed = verdict.passed && outcome.conforming;
  return verdict;
}

std::string verdict_to_json(const VettingVerdict& verdict) {
  json outcomes = json::array();
  for (const auto& o : verdict.outcomes) {
    outcomes.push_back({
        {"probe", std::string(to_string(o.kind))},
        {"intent", o.intent},
        {"status", o.status},
        {"transport", std::string(to_string(o.transport))},
        {"conforming", o.conforming},
    });
  }
  json doc = {
      {"schema", "skillprobe-verdict/1"},
      {"profile", std::string(to_string(verdict.profile))},
      {"passed", verdict.passed},
      {"findings", verdict.findings},
      {"outcomes", std::move(outcomes)},
  };
  return doc.dump(2) + "\n";
}

namespace {

constexpr EndpointMode kAllModes[] = {
    EndpointMode::Valid,     EndpointMode::IgnoreAppId, EndpointMode::IgnoreTimestamp,
    EndpointMode::AcceptAll, EndpointMode::RejectAll,   EndpointMode::Offline,
};

constexpr TlsProfileKind kAllTls[] = {
    TlsProfileKind::Standard,
    TlsProfileKind::Wildcard,
    TlsProfileKind::SelfSigned,
};

}  // namespace

MatrixResult run_verdict_matrix(VettingProfileName profile, const MatrixOptions& options) {
  CloudIdentityParams params;
  params.key_bits = options.key_bits;
  params.locator_host = options.bind_ip;
  CloudIdentity identity = generate_identity(params);
  ChainServer chain_server(identity, options.bind_ip);
  CloudSim cloud(identity);

  const SkillRegistration& target = cloud.register_skill(
      ApplicationId{"amzn1.ask.skill.matrix-target"},
      "https://" + options.endpoint_host + "/alexa",
      {{"LookupIntent", {"num"}}});

  TlsAuthority tls_ca = make_tls_authority("Skillprobe Testbed TLS CA");
  TlsTrust trust = TlsTrust::strict(tls_ca.cert_pem, {{options.endpoint_host, options.bind_ip}});

  MatrixResult result;
  result.profile = profile;

  for (EndpointMode mode : kAllModes) {
    for (TlsProfileKind tls : kAllTls) {
      MatrixCell cell{mode, tls, false, {}};
      std::string url;
      std::optional<EndpointServer> server;
      if (mode == EndpointMode::Offline) {
        // A port nothing listens on; the discard port is never bound here.
        url = "https://" + options.endpoint_host + ":9/alexa";
      } else {
        EndpointConfig config;
        config.mode = mode;
        config.expected_app_id = target.application_id;
        config.trust_root_pem = identity.root_pem();
        config.timestamp_tolerance_s = options.tolerance_s;
        server.emplace(std::move(config), make_tls_material(tls, options.endpoint_host, &tls_ca),
                       options.bind_ip);
        url = server->url(options.endpoint_host);
      }

      std::vector<Probe> suite = build_probe_suite(profile, cloud, target, now_utc());
      VettingVerdict verdict = run_vetting(suite, url, trust, profile, 2000);
      cell.passed = verdict.passed;
      cell.findings = verdict.findings;
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

bool expected_matrix_pass(VettingProfileName profile, EndpointMode mode, TlsProfileKind tls) {
  if (tls == TlsProfileKind::SelfSigned) return false;
  if (profile == VettingProfileName::AlexaBaseline) {
    return mode == EndpointMode::Valid || mode == EndpointMode::IgnoreAppId ||
           mode == EndpointMode::IgnoreTimestamp;
  }
  return mode == EndpointMode::Valid;
}

bool matrix_matches_expected(const MatrixResult& result) {
  for (const auto& cell : result.cells) {
    if (cell.passed != expected_matrix_pass(result.profile, cell.mode, cell.tls)) return false;
  }
  return result.cells.size() == 18;
}

std::string matrix_to_json(const MatrixResult& result) {
  json cells = json::array();
  for (const auto& cell : result.cells) {
    cells.push_back({
        {"mode", std::string(to_string(cell.mode))},
        {"tls", std::string(to_string(cell.tls))},
        {"passed", cell.passed},
        {"expected", expected_matrix_pass(result.profile, cell.mode, cell.tls)},
        {"findings", cell.findings},
    });
  }
  json doc = {
      {"schema", "skillprobe-matrix/1"},
      {"profile", std::string(to_string(result.profile))},
      {"matches_expected", matrix_matches_expected(result)},
      {"cells", std::move(cells)},
  };
  return doc.dump(2) + "\n";
}

std::string matrix_to_text(const MatrixResult& result) {
  std::ostringstream out;
  out << "profile: " << to_string(result.profile) << "\n";
  out << "implementation      standard  wildcard  self-signed\n";
  for (EndpointMode mode : kAllModes) {
    out << std::string(to_string(mode));
    for (std::size_t pad = std::string(to_string(mode)).size(); pad < 20; ++pad) out << ' ';
    for (TlsProfileKind tls : kAllTls) {
      bool passed = false;
      for (const auto& cell : result.cells) {
        if (cell.mode == mode && cell.tls == tls) passed = cell.passed;
      }
      out << (passed ? "pass      " : "FAIL      ");
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace skillprobe
