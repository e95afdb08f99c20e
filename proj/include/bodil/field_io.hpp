#pragma once

#include <string>
#include <vector>

#include "bodil/grid.hpp"

namespace bodil {

// Field files: a single UTF-8 JSON header line
//   {"shape":[...],"dtype":"f64","order":"row-major","axes":[...]}
// terminated by '\n', followed by the raw little-endian float64 payload in
// row-major order. This code targets little-endian hosts and writes the
// in-memory representation directly.

struct RawField {
  std::vector<int> shape;
  std::vector<std::string> axes;
  std::vector<double> values;

  int64_t size() const;
};

void write_field_file(const std::string& path, const RawField& raw);
void write_field_file(const std::string& path, const Field& field);

// Convenience for dense matrices (covariances, correlations): shape
// [rows, cols] with axes ["i", "j"].
void write_matrix_field(const std::string& path, int rows, int cols,
                        const std::vector<double>& row_major_values);

// Throws std::runtime_error with a descriptive message on malformed headers,
// unsupported dtype/order, or payload size mismatch.
RawField read_field_file(const std::string& path);

} // namespace bodil
