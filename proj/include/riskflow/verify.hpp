#pragma once

// The acceptance suite: 13 self-contained checks exercised by both the CLI
// verify command and the test harness, with a machine-readable JSON report.

#include <cstdint>
#include <string>
#include <vector>

namespace riskflow::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyConfig {
  std::uint64_t seed = 97;
  std::string filter;  // substring match on check names; empty = all
};

// Test hook: deliberately breaks the aggregation convention by a factor of 2
// so the verify command can demonstrate that the suite catches it.
extern bool inject_convention_bug;

std::vector<CheckResult> run_checks(const VerifyConfig& config);

std::string report_json(const std::vector<CheckResult>& results, std::uint64_t seed);

}  // namespace riskflow::verify
