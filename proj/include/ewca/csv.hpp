#pragma once

// CSV in and out. Input files hold one sample per row; internally the data
// is transposed to the d x n layout. Output numbers use the shortest decimal
// form that parses back to the same double.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "ewca/types.hpp"

namespace ewca {

struct CsvTable {
  Matrix data;                            // d x n
  std::vector<std::string> feature_names;  // empty without a header
  std::optional<std::vector<int>> labels;
  std::vector<std::string> label_names;    // label_names[code]
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

inline std::optional<Index> parse_index(std::string_view s) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || value < 0) {
    return std::nullopt;
  }
  return static_cast<Index>(value);
}

}  // namespace detail

// Reads a numeric table. Blank lines and lines starting with '#' are
// skipped. `label_column` names a header field, or gives a 0-based column
// index; its cells are coded 0, 1, ... in order of first appearance.
inline CsvTable parse_csv(std::istream& in, bool has_header,
                          const std::optional<std::string>& label_column,
                          const std::string& source = "<input>") {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> width;
  std::optional<std::size_t> label_idx;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<std::string> label_names;
  std::map<std::string, int, std::less<>> codes;

  auto resolve_label = [&](std::size_t columns) {
    if (!label_column) return;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == *label_column) {
        label_idx = c;
        return;
      }
    }
    if (auto idx = detail::parse_index(*label_column); idx && static_cast<std::size_t>(*idx) < columns) {
      label_idx = static_cast<std::size_t>(*idx);
      return;
    }
    throw UnknownLabelColumn(source + ": label column '" + *label_column + "' not found");
  };

  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const std::vector<std::string_view> fields = detail::split_fields(view);
    if (header_pending) {
      for (auto f : fields) header.emplace_back(f);
      width = fields.size();
      resolve_label(fields.size());
      header_pending = false;
      continue;
    }
    if (!width) {
      width = fields.size();
      resolve_label(fields.size());
    }
    if (fields.size() != *width) {
      throw RaggedRows(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(*width) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (label_idx && c == *label_idx) {
        const std::string name(fields[c]);
        auto it = codes.find(name);
        if (it == codes.end()) {
          it = codes.emplace(name, static_cast<int>(label_names.size())).first;
          label_names.push_back(name);
        }
        labels.push_back(it->second);
        continue;
      }
      const std::optional<double> value = detail::parse_double(fields[c]);
      if (!value || !std::isfinite(*value)) {
        throw NonNumericCell(source + ":" + std::to_string(line_no) + ": column " +
                             std::to_string(c + 1) + ": cannot use '" + std::string(fields[c]) +
                             "' as a finite number");
      }
      row.push_back(*value);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw ParseError(source + ": no data rows");
  }
  const std::size_t d = rows.front().size();
  if (d == 0) {
    throw ParseError(source + ": no numeric columns");
  }

  CsvTable table;
  table.data.resize(static_cast<Index>(d), static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t i = 0; i < d; ++i) {
      table.data(static_cast<Index>(i), static_cast<Index>(j)) = rows[j][i];
    }
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!label_idx || c != *label_idx) table.feature_names.push_back(header[c]);
  }
  if (label_idx) {
    table.labels = std::move(labels);
    table.label_names = std::move(label_names);
  }
  return table;
}

inline CsvTable ingest_csv(const std::string& path, bool has_header,
                           const std::optional<std::string>& label_column = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_csv(in, has_header, label_column, path);
}

// Shortest round-trip decimal representation.
inline std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

class CsvWriter {
 public:
  // Opens `path` and writes the "# ewca <version> <command>" provenance line.
  CsvWriter(const std::string& path, const std::string& provenance) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    out_ << "# " << provenance << '\n';
  }

  void header(const std::vector<std::string>& names) { row(names); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    out_.flush();
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

  // Each row of `m` becomes one line.
  void matrix(const Matrix& m) {
    std::vector<std::string> cells(static_cast<std::size_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) cells[static_cast<std::size_t>(j)] = format_double(m(i, j));
      row(cells);
    }
  }

 private:
  std::string path_;
  std::ofstream out_;
};

inline void write_matrix_csv(const std::string& path, const Matrix& m,
                             const std::string& provenance,
                             const std::vector<std::string>& header = {}) {
  CsvWriter writer(path, provenance);
  if (!header.empty()) writer.header(header);
  writer.matrix(m);
}

}  // namespace ewca
