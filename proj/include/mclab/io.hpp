#pragma once

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace mclab {

/// File-system failure; the message carries the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Formats a double with 17 significant digits (lossless round trip).
std::string format_double(double v);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// Matrix CSV: one line per row, comma-separated decimals, no header.
std::string matrix_to_csv(const Matrix& A);
Matrix matrix_from_csv(const std::string& text);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& A);
Matrix read_matrix_csv(const std::filesystem::path& path);

// Observation CSV: header `row,col,y`, zero-based indices.
std::string observations_to_csv(const ObservationSet& obs);
ObservationSet observations_from_csv(const std::string& text, const Dims& dims);
void write_observations_csv(const std::filesystem::path& path, const ObservationSet& obs);
ObservationSet read_observations_csv(const std::filesystem::path& path, const Dims& dims);

}  // namespace mclab
