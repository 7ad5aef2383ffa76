#pragma once

#include <iosfwd>

namespace bthick::cli {

/// Entry point behind the `bthick` binary. Results go to `out` as JSON,
/// diagnostics and usage text to `err`. Returns 0 on success, 1 on usage
/// errors and contract violations, 2 on I/O errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bthick::cli
