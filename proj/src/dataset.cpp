#include "probe/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "probe/errors.hpp"

namespace probe {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

int category_code(Column& col, const std::string& value) {
  auto it = std::find(col.categories.begin(), col.categories.end(), value);
  if (it != col.categories.end()) return static_cast<int>(it - col.categories.begin());
  col.categories.push_back(value);
  return static_cast<int>(col.categories.size()) - 1;
}

}  // namespace

Dataset::Dataset(std::vector<Column> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) return;
  n_rows_ = columns_[0].type == ColumnType::numeric ? columns_[0].values.size()
                                                    : columns_[0].codes.size();
  for (const Column& c : columns_) {
    const std::size_t rows = c.type == ColumnType::numeric ? c.values.size() : c.codes.size();
    if (rows != n_rows_) {
      throw ValidationError("dataset: column '" + c.name + "' has inconsistent row count");
    }
  }
}

const Column& Dataset::column(const std::string& name) const {
  for (const Column& c : columns_) {
    if (c.name == name) return c;
  }
  throw ValidationError("dataset: missing column '" + name + "'");
}

bool Dataset::has_column(const std::string& name) const {
  for (const Column& c : columns_) {
    if (c.name == name) return true;
  }
  return false;
}

std::vector<std::string> Dataset::numeric_column_names() const {
  std::vector<std::string> names;
  for (const Column& c : columns_) {
    if (c.type == ColumnType::numeric) names.push_back(c.name);
  }
  return names;
}

std::vector<double> Dataset::numeric_row(const std::vector<std::string>& cols, std::size_t row) const {
  std::vector<double> out;
  out.reserve(cols.size());
  for (const std::string& name : cols) {
    const Column& c = column(name);
    if (c.type != ColumnType::numeric) {
      throw ValidationError("dataset: column '" + name + "' is not numeric");
    }
    out.push_back(c.values.at(row));
  }
  return out;
}

Dataset make_numeric_dataset(const std::vector<std::pair<std::string, std::vector<double>>>& cols) {
  std::vector<Column> columns;
  for (const auto& [name, values] : cols) {
    Column c;
    c.name = name;
    c.type = ColumnType::numeric;
    c.values = values;
    columns.push_back(std::move(c));
  }
  return Dataset(std::move(columns));
}

Dataset make_categorical_dataset(const std::string& name, const std::vector<std::string>& values) {
  Column c;
  c.name = name;
  c.type = ColumnType::categorical;
  for (const std::string& v : values) c.codes.push_back(category_code(c, v));
  std::vector<Column> columns;
  columns.push_back(std::move(c));
  return Dataset(std::move(columns));
}

Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open CSV file: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("empty CSV file: " + path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_row(line);
  if (header.empty()) {
    throw ValidationError("CSV header row is empty: " + path.string());
  }

  std::vector<std::vector<std::string>> raw_rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_row(line);
    if (cells.size() != header.size()) {
      throw ValidationError("malformed CSV row at line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].empty()) {
        throw ValidationError("empty cell at line " + std::to_string(line_no) + ", column " +
                              header[j]);
      }
    }
    raw_rows.push_back(std::move(cells));
  }

  std::vector<Column> columns(header.size());
  for (std::size_t j = 0; j < header.size(); ++j) {
    Column& col = columns[j];
    col.name = header[j];
    auto it = schema.types.find(col.name);
    if (it != schema.types.end()) {
      col.type = it->second;
    } else {
      col.type = ColumnType::numeric;
      double tmp = 0.0;
      for (const auto& row : raw_rows) {
        if (!parse_double(row[j], tmp)) {
          col.type = ColumnType::categorical;
          break;
        }
      }
    }
    for (std::size_t r = 0; r < raw_rows.size(); ++r) {
      const std::string& cell = raw_rows[r][j];
      if (col.type == ColumnType::numeric) {
        double v = 0.0;
        if (!parse_double(cell, v)) {
          throw ValidationError("cell '" + cell + "' is not numeric at line " +
                                std::to_string(r + 2) + ", column " + col.name);
        }
        col.values.push_back(v);
      } else {
        col.codes.push_back(category_code(col, cell));
      }
    }
  }
  return Dataset(std::move(columns));
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot write CSV file: " + path.string());
  }
  out.precision(17);
  for (std::size_t j = 0; j < data.n_cols(); ++j) {
    out << data.column(j).name << (j + 1 < data.n_cols() ? "," : "\n");
  }
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    for (std::size_t j = 0; j < data.n_cols(); ++j) {
      const Column& c = data.column(j);
      if (c.type == ColumnType::numeric) {
        out << c.values[r];
      } else {
        out << c.categories[static_cast<std::size_t>(c.codes[r])];
      }
      out << (j + 1 < data.n_cols() ? "," : "\n");
    }
  }
}

}  // namespace probe
