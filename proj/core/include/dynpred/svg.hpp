#pragma once

#include "dynpred/harness.hpp"

#include <string>
#include <vector>

namespace dynpred {

// One line chart per (metric in {tdauc, brier}, landmark): horizon on x,
// metric on y, one polyline per method, undefined cells left as gaps. The
// C index is rendered as a table-style SVG. Returns the files written
// (relative to out_dir). Output bytes are deterministic.
std::vector<std::string> plot_results(const BenchmarkResult& results,
                                      const std::string& out_dir);

}  // namespace dynpred
