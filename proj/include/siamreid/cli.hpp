#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace siamreid {

/// Exit codes: 0 success, 2 usage or input error, 3 training failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace siamreid
