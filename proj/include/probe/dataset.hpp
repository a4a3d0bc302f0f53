#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace probe {

enum class ColumnType { numeric, categorical };

struct Column {
  std::string name;
  ColumnType type = ColumnType::numeric;
  std::vector<double> values;            // numeric rows
  std::vector<int> codes;                // categorical rows, index into categories
  std::vector<std::string> categories;   // distinct values in first-seen order
};

/// Column-typed sample table. Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Column> columns);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(std::size_t i) const { return columns_.at(i); }
  const Column& column(const std::string& name) const;  // ValidationError if absent
  bool has_column(const std::string& name) const;

  /// Names of all numeric columns, in table order.
  std::vector<std::string> numeric_column_names() const;

  /// Row values for a set of numeric columns.
  std::vector<double> numeric_row(const std::vector<std::string>& cols, std::size_t row) const;

 private:
  std::vector<Column> columns_;
  std::size_t n_rows_ = 0;
};

/// Convenience builder for in-memory numeric data.
Dataset make_numeric_dataset(const std::vector<std::pair<std::string, std::vector<double>>>& cols);

/// Convenience builder for a single categorical column.
Dataset make_categorical_dataset(const std::string& name, const std::vector<std::string>& values);

struct CsvSchema {
  /// Explicit column types; anything absent is inferred (numeric when every
  /// cell parses as a double, categorical otherwise).
  std::map<std::string, ColumnType> types;
};

/// UTF-8, header row, comma separated. Empty or non-parsing cells are
/// rejected with row/column coordinates.
Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

void write_csv(const std::filesystem::path& path, const Dataset& data);

}  // namespace probe
