#pragma once

#include <string>

#include "flowtrace/tracestore.hpp"

namespace flowtrace {

struct AnalyzeOptions {
  bool loops = true;
  bool cycles = true;
  bool diamonds = true;
  bool csv = false;
};

// Signature tables, size distributions and summary counts for a dataset.
std::string render_analysis(const Dataset& dataset, const AnalyzeOptions& options);

}  // namespace flowtrace
