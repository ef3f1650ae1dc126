#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skillprobe/cloudsim.hpp"
#include "skillprobe/endpoint.hpp"

namespace skillprobe {

enum class ProbeKind {
  FunctionalIntent,
  EmptySignature,
  InvalidSignature,
  ForeignChainLocator,
  WrongAppId,
  StaleTimestamp,
  ReplayedRequest,
  MalformedBody,
};

std::string_view to_string(ProbeKind kind);

struct Probe {
  ProbeKind kind;
  std::string intent;  // set for FunctionalIntent / ReplayedRequest
  SignedMessage message;
};

enum class VettingProfileName { AlexaBaseline, Strict };

std::string_view to_string(VettingProfileName profile);
std::optional<VettingProfileName> vetting_profile_from_string(std::string_view name);

// Deterministic suite: 7 functional probes (6 defaults + the registration's
// custom intent) followed by the security probes. Strict appends the
// extended probes of the countermeasure profile. Registers a throwaway
// decoy skill to mint the wrong-application-ID probe.
std::vector<Probe> build_probe_suite(VettingProfileName profile, CloudSim& cloud,
                                     const SkillRegistration& target, Instant now,
                                     std::int64_t assumed_tolerance_s = 150);

struct ProbeOutcome {
  ProbeKind kind;
  std::string intent;
  int status = 0;
  TransportError transport = TransportError::None;
  bool conforming = false;
};

struct VettingVerdict {
  VettingProfileName profile = VettingProfileName::AlexaBaseline;
  std::vector<ProbeOutcome> outcomes;
  bool passed = false;
  std::vector<std::string> findings;
};

// Dispatches probes in order. A TLS failure on the first dispatch
// terminates immediately with a single TlsCertificate finding; an
// unreachable endpoint terminates with an EndpointUnreachable finding.
VettingVerdict run_vetting(const std::vector<Probe>& suite, const std::string& endpoint_url,
                           const TlsTrust& trust, VettingProfileName profile,
                           int timeout_ms = 5000);

std::string verdict_to_json(const VettingVerdict& verdict);

// --- The 6x3 matrix --------------------------------------------------------

struct MatrixOptions {
  int key_bits = 2048;
  std::string bind_ip = "127.0.0.1";
  std::string endpoint_host = "endpoint.matrix.test";
  std::int64_t tolerance_s = 150;
};

struct MatrixCell {
  EndpointMode mode;
  TlsProfileKind tls;
  bool passed = false;
  std::vector<std::string> findings;
};

struct MatrixResult {
  VettingProfileName profile;
  std::vector<MatrixCell> cells;  // modes x tls profiles, row-major
};

// Spins up the whole zoo against a fresh cloud identity and vets every
// (mode, certificate) setting under the given profile.
MatrixResult run_verdict_matrix(VettingProfileName profile, const MatrixOptions& options = {});

// The reference pass/fail pattern for a profile (the baseline pattern is
// the published test matrix; the strict pattern follows from applying the
// extended probes to each mode's policy).
bool expected_matrix_pass(VettingProfileName profile, EndpointMode mode, TlsProfileKind tls);
bool matrix_matches_expected(const MatrixResult& result);

std::string matrix_to_json(const MatrixResult& result);
std::string matrix_to_text(const MatrixResult& result);

}  // namespace skillprobe
