#pragma once

#include <string>
#include <vector>

namespace edgeprune {

// Batch frontend: gen-data, train-toy, prune, acdc, eap, eval, sweep,
// export-dot, intersect, faithfulness-scatter, export-zoo.
// Returns a process exit code; errors print to stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace edgeprune
