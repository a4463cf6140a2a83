#pragma once

#include "fedspca/types.hpp"

#include <string>
#include <vector>

namespace fedspca {

/// Reads a comma-separated numeric matrix. `skip_header` drops the first
/// line; `drop_cols` removes the given zero-based columns (e.g. id / label
/// columns) before conversion.
Matrix read_matrix_csv(const std::string& path, bool skip_header = false,
                       const std::vector<int>& drop_cols = {});

/// Writes with 17-significant-digit decimal formatting, one row per line.
void write_matrix_csv(const std::string& path, const Matrix& m);

}  // namespace fedspca
