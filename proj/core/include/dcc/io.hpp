#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dcc/datagen.hpp"
#include "dcc/linalg.hpp"

namespace dcc {

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view text);

// Column-per-sample matrices (memberships K × N, features D × N) are stored
// one sample per line under the header "<prefix>0,...,<prefix>{rows-1}".
void write_sample_matrix_csv(const std::filesystem::path& path, const Matrix& m, char prefix);
Matrix read_sample_matrix_csv(const std::filesystem::path& path, char prefix);

// Header "i,j,y", zero-based indices. `n` is not stored; the reader takes it
// from the caller (e.g. the seen count of the ground truth).
void write_annotations_csv(const std::filesystem::path& path, const AnnotationSet& ann);
AnnotationSet read_annotations_csv(const std::filesystem::path& path, std::size_t n);

// K rows × K columns, no header.
void write_plain_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_plain_matrix_csv(const std::filesystem::path& path);

// Minimal CSV table: first line is the header, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws DataError if absent
};
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace dcc
