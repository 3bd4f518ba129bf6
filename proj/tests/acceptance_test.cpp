// Runs every acceptance criterion once, printing one PASS/FAIL line each.
// Exit status is non-zero if any criterion fails or exceeds its time limit.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "neo/checks/criteria.hpp"

int main(int argc, char** argv) {
  neo::checks::CriteriaOptions options;
  options.work_dir = std::filesystem::temp_directory_path() / "neo_acceptance";
  std::vector<int> ids = neo::checks::criterion_ids();
  if (argc > 1) {
    ids.clear();
    for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  }
  int failures = 0;
  for (int id : ids) {
    const auto result = neo::checks::run_criterion(id, options);
    std::printf("%s\n", neo::checks::format_result(result).c_str());
    std::fflush(stdout);
    failures += !result.ok();
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(ids.size()) - failures, ids.size());
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
