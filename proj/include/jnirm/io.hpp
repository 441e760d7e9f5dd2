#pragma once

#include "jnirm/simulate.hpp"
#include "jnirm/types.hpp"

#include <string>
#include <vector>

namespace jnirm {

/// Numeric CSV with an optional header row and an optional leading column
/// of row labels (detected when the first field of the first data row is
/// not a number). Empty cells and NA become NaN.
struct CsvTable {
  std::vector<std::string> header;  // numeric columns only; empty when the file has none
  std::string row_label_name;
  std::vector<std::string> row_labels;
  MatrixXd values;
};

CsvTable read_csv(const std::string& path);

/// Adjacency matrix CSV (N x N, optional header) or an edge list whose
/// header starts with `from,to` (1-based ids, optional weight column; pairs
/// not listed are observed zeros). `n_nodes` overrides the inferred size of
/// an edge list.
NetworkData read_network(const std::string& path, DataKind kind, int n_nodes = 0);

/// Persons in rows, items in columns. A non-numeric first row is the header.
ItemResponses read_items(const std::string& path, DataKind kind);

/// Writes with a header row; numbers use 10 significant digits, NaN as NA.
void write_csv(const std::string& path, const MatrixXd& values, const std::vector<std::string>& header);
/// Same, with a leading string column (`row_label_name` heads it).
void write_csv(const std::string& path, const MatrixXd& values, const std::vector<std::string>& header,
               const std::string& row_label_name, const std::vector<std::string>& row_labels);

std::string format_number(double x);
std::vector<std::string> numbered(const std::string& prefix, Eigen::Index n);

GenerativeParams read_generative_params(const std::string& path);
void write_generative_params(const std::string& path, const GenerativeParams& params);

}  // namespace jnirm
