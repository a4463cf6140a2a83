#include "fedspca/csv.hpp"

#include "fedspca/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fedspca {

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Matrix read_matrix_csv(const std::string& path, bool skip_header,
                       const std::vector<int>& drop_cols) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (std::find(drop_cols.begin(), drop_cols.end(), col) == drop_cols.end()) {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(cell, &used);
        } catch (const std::exception&) {
          throw std::invalid_argument(path + ": non-numeric cell '" + cell + "'");
        }
        row.push_back(v);
      }
      ++col;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::invalid_argument(path + ": ragged rows (line " +
                                  std::to_string(rows.size() + 1) + ")");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no data rows");

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_value(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::invalid_argument("write failed for " + path);
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::invalid_argument("cannot write " + path);
  if (!append) {
    out << "round,objective,primal_residual,dual_residual,mean_abs_cosine,bytes_sent\n";
  }
  for (const auto& r : rows) {
    out << r.round << ',' << format_value(r.objective) << ',' << format_value(r.primal_residual)
        << ',' << format_value(r.dual_residual) << ',' << format_value(r.mean_abs_cosine) << ','
        << r.bytes_sent << '\n';
  }
}

}  // namespace fedspca
