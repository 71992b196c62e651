#pragma once

#include <string>
#include <vector>

namespace evoquer::cli {

// Entry point shared by main() and the tests. `args` excludes the program
// name. Returns 0 on success, 1 on usage/validation errors, 2 on runtime
// errors.
int dispatch(const std::vector<std::string>& args);

}  // namespace evoquer::cli
