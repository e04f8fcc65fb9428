#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stpp::cli {

/// Runs the `stpp` command line. Errors are written to `err` as a single
/// JSON object `{"error": {"type", "message", "problems"?}}`; the return
/// value is the process exit code.
[[nodiscard]] int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stpp::cli
