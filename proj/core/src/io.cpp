#include "dcc/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "dcc/error.hpp"

namespace dcc {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::uint32_t parse_index(std::string_view text) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("not an index: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw DataError("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("csv column '" + std::string(name) + "' not found");
}

CsvTable read_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty csv");
  strip_cr(line);
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != t.header.size()) {
      throw DataError(path.string() + ": row has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  auto out = open_out(path);
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  if (!out) throw IoError("failed writing " + path.string());
}

void write_sample_matrix_csv(const std::filesystem::path& path, const Matrix& m, char prefix) {
  CsvTable t;
  for (std::size_t r = 0; r < m.rows(); ++r) t.header.push_back(prefix + std::to_string(r));
  for (std::size_t c = 0; c < m.cols(); ++c) {
    std::vector<std::string> row;
    for (std::size_t r = 0; r < m.rows(); ++r) row.push_back(format_double(m(r, c)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

Matrix read_sample_matrix_csv(const std::filesystem::path& path, char prefix) {
  const CsvTable t = read_csv(path);
  for (std::size_t r = 0; r < t.header.size(); ++r) {
    if (t.header[r] != prefix + std::to_string(r)) {
      throw DataError(path.string() + ": unexpected header field '" + t.header[r] + "'");
    }
  }
  Matrix m(t.header.size(), t.rows.size());
  for (std::size_t c = 0; c < t.rows.size(); ++c)
    for (std::size_t r = 0; r < t.header.size(); ++r) m(r, c) = parse_double(t.rows[c][r]);
  if (!m.all_finite()) throw DataError(path.string() + ": non-finite value");
  return m;
}

void write_annotations_csv(const std::filesystem::path& path, const AnnotationSet& ann) {
  auto out = open_out(path);
  out << "i,j,y\n";
  for (const auto& a : ann.triplets) out << a.i << ',' << a.j << ',' << int(a.y) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

AnnotationSet read_annotations_csv(const std::filesystem::path& path, std::size_t n) {
  const CsvTable t = read_csv(path);
  if (t.header != std::vector<std::string>{"i", "j", "y"}) {
    throw DataError(path.string() + ": expected header i,j,y");
  }
  AnnotationSet ann;
  ann.n = n;
  ann.triplets.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    const auto y = parse_index(r[2]);
    if (y > 1) throw DataError(path.string() + ": label must be 0 or 1");
    ann.triplets.push_back({parse_index(r[0]), parse_index(r[1]), static_cast<std::uint8_t>(y)});
  }
  ann.validate();
  return ann;
}

void write_plain_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_out(path);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Matrix read_plain_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) throw DataError(path.string() + ": ragged matrix");
    for (const auto& f : fields) data.push_back(parse_double(f));
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace dcc
