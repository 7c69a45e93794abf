#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ctranatd {

// Runs one command line (without the program name). Returns the exit status:
// 0 on success, 2 on a usage error, 1 on any other failure. Failures print a
// single "error: <category>: <message>" line to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctranatd
