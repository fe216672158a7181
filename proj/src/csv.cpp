#include "gsfda/csv.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace gsfda {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& cell, long line_no) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw ParseError("non-numeric cell '" + cell + "'", line_no);
  }
  while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
  if (pos != cell.size()) throw ParseError("non-numeric cell '" + cell + "'", line_no);
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, bool has_labels) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto header = split_line(line);
  std::size_t dim = header.size();
  if (has_labels) {
    if (header.empty() || header.back() != "label")
      throw ParseError("expected trailing 'label' column in header", line_no);
    --dim;
  }
  if (dim == 0) throw ParseError("no feature columns in header", line_no);
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j] != "f" + std::to_string(j))
      throw ParseError("expected header column 'f" + std::to_string(j) + "', got '" +
                           header[j] + "'",
                       line_no);
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, got " +
                           std::to_string(cells.size()),
                       line_no);
    for (std::size_t j = 0; j < dim; ++j) values.push_back(parse_double(cells[j], line_no));
    if (has_labels) {
      const double lv = parse_double(cells[dim], line_no);
      const long li = std::lround(lv);
      if (lv != static_cast<double>(li) || li < 0)
        throw ParseError("label must be a nonnegative integer, got '" + cells[dim] + "'",
                         line_no);
      labels.push_back(static_cast<int>(li));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", line_no);

  Dataset ds;
  ds.features = Matrix(rows, dim, std::move(values));
  ds.labels = std::move(labels);
  ds.name = path;
  return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t j = 0; j < ds.dim(); ++j) {
    if (j) out << ',';
    out << 'f' << j;
  }
  if (ds.labeled()) out << ",label";
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      if (j) out << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
      out << buf;
    }
    if (ds.labeled()) out << ',' << ds.labels[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace gsfda
