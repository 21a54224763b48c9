#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rod {

// Entry point behind the rod_cli binary. `args` excludes the program name.
// Returns 0 on success, 1 on usage errors, 2 on data errors, 3 on numerical
// failures.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rod
