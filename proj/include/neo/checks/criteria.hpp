#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace neo::checks {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;  // the property itself held
  std::string detail;
  double seconds = 0;
  double limit_seconds = 0;

  bool ok() const { return passed && seconds < limit_seconds; }
};

struct CriteriaOptions {
  std::uint64_t seed = 0;
  // Where the ablation writes its runs and report.
  std::filesystem::path work_dir = "neo_check_work";
};

// Ids 1..10; see README for what each one establishes.
std::vector<int> criterion_ids();

CriterionResult run_criterion(int id, const CriteriaOptions& options);

// "PASS  3 oracle equivalence  max rel 2.1e-15 ... (1.2 s, limit 120 s)"
std::string format_result(const CriterionResult& result);

}  // namespace neo::checks
