#pragma once

#include <string>
#include <vector>

namespace eqdisc {

struct CheckResult {
    std::string name;
    bool passed = false;
    bool skipped = false; // conditional checks report SKIPPED(reason) in detail
    std::string detail;
};

struct CheckOptions {
    // JSON file with physical input levels for the conditional
    // reference-number check; the check reports SKIPPED(ranges-unavailable)
    // without it.
    std::string ranges_path;
};

std::vector<std::string> check_names();
CheckResult run_check(const std::string& name, const CheckOptions& options = {});
std::vector<CheckResult> run_all_checks(const CheckOptions& options = {});

} // namespace eqdisc
