#pragma once

#include "fedspca/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedspca {

/// One ADMM round as recorded in the trace CSV.
struct TraceRow {
  int round = 0;  // cumulative across deflation phases
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double mean_abs_cosine = 1.0;
  std::uint64_t bytes_sent = 0;  // cumulative session byte count
};

/// Result of one solver run (possibly spanning a deflation schedule).
struct SolveResult {
  LoadingMatrix loadings;
  bool converged = false;
  int rounds = 0;                  // total master updates
  std::vector<int> phase_rounds;   // per deflation phase
  std::vector<TraceRow> trace;
  std::uint64_t messages_sent = 0;
  std::uint64_t bytes_sent = 0;
};

/// Writes rows in the trace CSV layout:
/// round,objective,primal_residual,dual_residual,mean_abs_cosine,bytes_sent
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows,
                     bool append = false);

}  // namespace fedspca
