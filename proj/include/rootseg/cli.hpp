#pragma once

namespace rootseg {

/// Exit codes: 0 success, 1 usage error, 2 data or configuration error.
int run_cli(int argc, char** argv);

}  // namespace rootseg
