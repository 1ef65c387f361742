#pragma once

// End-to-end acceptance checks. Each check prints one PASS/FAIL line.

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace pmdas::acceptance {

struct Check {
    std::string name;
    std::function<bool(std::ostream& detail)> run;
};

const std::vector<Check>& checks();

/// Runs the checks whose name contains `filter` (all if empty); true if all pass.
bool run_all(std::ostream& out, const std::string& filter = {});

}  // namespace pmdas::acceptance
