#include "kst/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

#include "kst/errors.hpp"

namespace kst {

double parse_cell(const std::string& text, Index row, Index col) {
  const char* first = text.data();
  const char* last = first + text.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  double value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last)
    throw input_error("non-numeric cell at row " + std::to_string(row + 1) + ", col " +
                      std::to_string(col + 1) + ": '" + text + "'");
  if (!std::isfinite(value))
    throw input_error("non-finite value at row " + std::to_string(row + 1) + ", col " +
                      std::to_string(col + 1));
  return value;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open file: " + path);
  return in;
}

}  // namespace

Dataset load_csv(const std::string& path, bool has_header, std::optional<Index> label_column) {
  std::ifstream in = open_or_throw(path);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  Index file_row = 0;
  Index width = -1;
  bool skipped_header = !has_header;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++file_row;
      continue;
    }
    if (!skipped_header) {
      skipped_header = true;
      ++file_row;
      continue;
    }
    std::vector<std::string> cells = split_commas(line);
    const Index ncells = static_cast<Index>(cells.size());
    if (width < 0) {
      width = ncells;
      if (label_column && (*label_column < 0 || *label_column >= width))
        throw input_error("label column " + std::to_string(*label_column) +
                          " out of range for " + std::to_string(width) + " columns");
    } else if (ncells != width) {
      throw input_error("ragged row " + std::to_string(file_row + 1) + ": expected " +
                        std::to_string(width) + " cells, got " + std::to_string(ncells));
    }

    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(width));
    for (Index c = 0; c < ncells; ++c) {
      const double v = parse_cell(cells[static_cast<std::size_t>(c)], file_row, c);
      if (label_column && c == *label_column) {
        const double rounded = std::nearbyint(v);
        if (rounded != v)
          throw input_error("label at row " + std::to_string(file_row + 1) +
                            " is not an integer");
        labels.push_back(static_cast<int>(rounded));
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
    ++file_row;
  }
  if (rows.empty()) throw input_error("empty data file: " + path);

  Dataset out;
  out.source = path;
  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(rows.front().size());
  out.X.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j)
      out.X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if (label_column) out.labels = std::move(labels);
  return out;
}

Dataset load_usps(const std::string& path) {
  std::ifstream in = open_or_throw(path);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  Index file_row = 0;
  bool saw_label_10 = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> cells;
    std::string tok;
    while (fields >> tok) cells.push_back(tok);
    if (cells.empty()) {
      ++file_row;
      continue;
    }
    if (cells.size() != 257)
      throw input_error("usps row " + std::to_string(file_row + 1) + ": expected 257 fields, got " +
                        std::to_string(cells.size()));

    const double lab = parse_cell(cells[0], file_row, 0);
    const double rounded = std::nearbyint(lab);
    if (rounded != lab || rounded < 0 || rounded > 10)
      throw input_error("usps row " + std::to_string(file_row + 1) + ": bad label " + cells[0]);
    int label = static_cast<int>(rounded);
    if (label == 10) saw_label_10 = true;

    std::vector<double> px(256);
    for (Index c = 0; c < 256; ++c) px[static_cast<std::size_t>(c)] = parse_cell(cells[static_cast<std::size_t>(c) + 1], file_row, c + 1);
    rows.push_back(std::move(px));
    labels.push_back(label);
    ++file_row;
  }
  if (rows.empty()) throw input_error("empty usps file: " + path);

  // 1..10 labelling convention: 10 stands for digit 0.
  if (saw_label_10)
    for (int& l : labels) l = l == 10 ? 0 : l;

  Dataset out;
  out.source = path;
  const Index n = static_cast<Index>(rows.size());
  out.X.resize(n, 256);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < 256; ++j)
      out.X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  out.labels = std::move(labels);
  return out;
}

Dataset augment_labels(const Dataset& data, int n_classes) {
  if (!data.labels) throw input_error("augment_labels: dataset has no labels");
  if (n_classes < 1) throw input_error("augment_labels: n_classes must be >= 1");
  const Index n = data.n();
  if (static_cast<Index>(data.labels->size()) != n)
    throw input_error("augment_labels: label count does not match rows");

  Dataset out;
  out.source = data.source;
  out.labels = data.labels;
  out.X.resize(n, data.dim() + n_classes);
  out.X.leftCols(data.dim()) = data.X;
  out.X.rightCols(n_classes).setZero();
  for (Index i = 0; i < n; ++i) {
    const int l = (*data.labels)[static_cast<std::size_t>(i)];
    if (l < 0 || l >= n_classes)
      throw input_error("augment_labels: label " + std::to_string(l) + " out of range [0, " +
                        std::to_string(n_classes) + ") at row " + std::to_string(i + 1));
    out.X(i, data.dim() + l) = 1.0;
  }
  return out;
}

Matrix strip_label_block(const Matrix& X_augmented, int n_classes) {
  if (X_augmented.cols() <= n_classes)
    throw input_error("strip_label_block: fewer columns than the label block");
  return X_augmented.leftCols(X_augmented.cols() - n_classes);
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot write file: " + tmp);
    out << content;
    if (!out) throw input_error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw input_error("rename failed for " + path + ": " + ec.message());
}

void write_matrix_csv(const std::string& path, const Matrix& X) {
  std::string body;
  body.reserve(static_cast<std::size_t>(X.size()) * 12);
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index j = 0; j < X.cols(); ++j) {
      if (j > 0) body += ',';
      body += format_double(X(i, j));
    }
    body += '\n';
  }
  atomic_write_text(path, body);
}

void write_csv(const std::string& path, const Dataset& data, bool with_labels) {
  if (with_labels && !data.labels) throw input_error("write_csv: dataset has no labels");
  std::string body;
  body.reserve(static_cast<std::size_t>(data.X.size()) * 12);
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) {
      if (j > 0) body += ',';
      body += format_double(data.X(i, j));
    }
    if (with_labels) {
      body += ',';
      body += std::to_string((*data.labels)[static_cast<std::size_t>(i)]);
    }
    body += '\n';
  }
  atomic_write_text(path, body);
}

}  // namespace kst
