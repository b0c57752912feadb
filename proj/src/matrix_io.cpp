#include "mclab/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string_view>
#include <vector>

namespace mclab {

namespace fs = std::filesystem;

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << contents;
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename temp file onto '" + path.string() + "'");
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto line = trim(text.substr(start, pos - start));
    if (!line.empty()) out.push_back(line);
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
  // std::from_chars for double does not accept a leading '+'.
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("line " + std::to_string(line_no) + ": cannot parse number '" +
                                std::string(s) + "'");
  return v;
}

std::uint32_t parse_index(std::string_view s, std::size_t line_no) {
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("line " + std::to_string(line_no) + ": cannot parse index '" +
                                std::string(s) + "'");
  return v;
}

}  // namespace

std::string matrix_to_csv(const Matrix& A) {
  std::string out;
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    for (Eigen::Index k = 0; k < A.cols(); ++k) {
      if (k) out += ',';
      out += format_double(A(j, k));
    }
    out += '\n';
  }
  return out;
}

Matrix matrix_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw std::invalid_argument("matrix CSV: no rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<double> row;
    for (auto cell : split(lines[i], ',')) row.push_back(parse_double(cell, i + 1));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("matrix CSV: ragged row at line " + std::to_string(i + 1));
    rows.push_back(std::move(row));
  }
  Matrix A(rows.size(), rows.front().size());
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t k = 0; k < rows[j].size(); ++k) A(j, k) = rows[j][k];
  if (!A.allFinite()) throw std::invalid_argument("matrix CSV: non-finite entry");
  return A;
}

void write_matrix_csv(const fs::path& path, const Matrix& A) {
  write_file_atomic(path, matrix_to_csv(A));
}

Matrix read_matrix_csv(const fs::path& path) { return matrix_from_csv(read_file(path)); }

std::string observations_to_csv(const ObservationSet& obs) {
  std::string out = "row,col,y\n";
  for (const auto& o : obs.records) {
    out += std::to_string(o.row);
    out += ',';
    out += std::to_string(o.col);
    out += ',';
    out += format_double(o.y);
    out += '\n';
  }
  return out;
}

ObservationSet observations_from_csv(const std::string& text, const Dims& dims) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != "row,col,y")
    throw std::invalid_argument("observation CSV: expected header 'row,col,y'");
  ObservationSet obs{dims, {}};
  obs.records.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != 3)
      throw std::invalid_argument("observation CSV: line " + std::to_string(i + 1) +
                                  " must have 3 fields");
    obs.records.push_back(
        {parse_index(cells[0], i + 1), parse_index(cells[1], i + 1), parse_double(cells[2], i + 1)});
  }
  obs.validate();
  return obs;
}

void write_observations_csv(const fs::path& path, const ObservationSet& obs) {
  write_file_atomic(path, observations_to_csv(obs));
}

ObservationSet read_observations_csv(const fs::path& path, const Dims& dims) {
  return observations_from_csv(read_file(path), dims);
}

}  // namespace mclab
