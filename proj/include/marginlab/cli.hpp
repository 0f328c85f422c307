#pragma once

// Command-line entry point, callable from tests without spawning a process.
// Exit codes: 0 success, 1 configuration/input error, 2 numeric abort,
// 3 acceptance-check failure under --assert.

#include <string>
#include <vector>

namespace marginlab {

int cli_main(const std::vector<std::string>& args);

}  // namespace marginlab
