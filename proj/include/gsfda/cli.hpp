#pragma once

#include <string>
#include <vector>

namespace gsfda {

// Full command-line front end, callable in-process: args is argv without the
// program name. Returns the process exit code: 0 success, 2 bad
// config/usage, 3 numeric failure, 4 I/O failure. All run artifacts are
// written under the --out directory; stdout carries only short progress and
// result lines.
int run_cli(const std::vector<std::string>& args);

}  // namespace gsfda
