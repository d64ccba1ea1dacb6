#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kst/types.hpp"

namespace kst {

struct Dataset {
  Matrix X;
  std::optional<std::vector<int>> labels;
  std::string source;

  Index n() const { return X.rows(); }
  Index dim() const { return X.cols(); }
};

// Rectangular numeric CSV. label_column (0-based) is extracted into labels
// and removed from X. Errors name the offending 1-based row and column.
Dataset load_csv(const std::string& path, bool has_header = false,
                 std::optional<Index> label_column = std::nullopt);

// Whitespace-separated lines: label then 256 pixel values. Labels are
// normalized to 0..9 (files using 1..10 have 10 mapped to 0).
Dataset load_usps(const std::string& path);

// Appends a one-hot block per row; d' = d + n_classes.
Dataset augment_labels(const Dataset& data, int n_classes);

// Drops the trailing one-hot block again.
Matrix strip_label_block(const Matrix& X_augmented, int n_classes);

// Shortest round-trip decimal encoding; optional label column is appended
// last when present.
void write_csv(const std::string& path, const Dataset& data, bool with_labels = false);
void write_matrix_csv(const std::string& path, const Matrix& X);

// Parse one float64; throws input_error naming (row, col) on failure or
// non-finite value. Shared by the CSV and USPS readers.
double parse_cell(const std::string& text, Index row, Index col);

std::string format_double(double v);

// Writes content to path via temp file + rename, so readers never observe a
// partial file.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace kst
