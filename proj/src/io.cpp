#include "jnirm/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace jnirm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan"; }

bool parse_double(const std::string& s, double& out) {
  if (is_missing(s)) {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<std::vector<double>> rows;
  CsvTable t;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  bool have_header = false;
  bool labelled = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    std::vector<double> row(cells.size());
    std::vector<bool> ok(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) ok[i] = parse_double(cells[i], row[i]);
    const bool tail_numeric = std::all_of(ok.begin() + 1, ok.end(), [](bool b) { return b; });
    const bool numeric = ok[0] && tail_numeric;
    const auto fail = [&](const std::string& what) {
      return DataError(path + ":" + std::to_string(line_no) + ": " + what);
    };
    if (!have_header && rows.empty() && !numeric) {
      t.header = cells;
      have_header = true;
      continue;
    }
    if (rows.empty() && have_header && !ok[0] && tail_numeric && cells.size() > 1) {
      labelled = true;
      t.row_label_name = t.header.front();
      t.header.erase(t.header.begin());
    }
    if (labelled) {
      if (!tail_numeric) throw fail("non-numeric value");
      t.row_labels.push_back(cells[0]);
      row.erase(row.begin());
    } else if (!numeric) {
      throw fail("non-numeric value");
    }
    if (rows.empty()) width = have_header ? t.header.size() : row.size();
    if (row.size() != width)
      throw fail("expected " + std::to_string(width) + " fields, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) width = t.header.size();
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

NetworkData read_network(const std::string& path, DataKind kind, int n_nodes) {
  CsvTable t = read_csv(path);
  const bool edge_list = t.header.size() >= 2 && t.header.size() <= 3 && t.header[0] == "from" && t.header[1] == "to";
  MatrixXd X;
  if (edge_list) {
    int n = n_nodes;
    for (Eigen::Index r = 0; r < t.values.rows(); ++r)
      for (int c = 0; c < 2; ++c) {
        const double id = t.values(r, c);
        if (std::isnan(id) || id < 1 || id != std::floor(id))
          throw DataError(path + ": node ids must be positive integers (row " + std::to_string(r + 1) + ")");
        if (n_nodes == 0) n = std::max(n, static_cast<int>(id));
        else if (id > n_nodes) throw DataError(path + ": node id exceeds the declared node count");
      }
    if (n < 2) throw DataError(path + ": edge list describes fewer than two nodes");
    X = MatrixXd::Zero(n, n);
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
      const auto a = static_cast<Eigen::Index>(t.values(r, 0)) - 1;
      const auto b = static_cast<Eigen::Index>(t.values(r, 1)) - 1;
      if (a == b) throw DataError(path + ": self-loop on node " + std::to_string(a + 1));
      X(a, b) = t.values.cols() == 3 ? t.values(r, 2) : 1.0;
    }
  } else {
    X = std::move(t.values);
    if (X.rows() != X.cols())
      throw DataError(path + ": adjacency matrix must be square, got " + std::to_string(X.rows()) + "x" +
                      std::to_string(X.cols()));
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, i) = std::numeric_limits<double>::quiet_NaN();
  NetworkData net(std::move(X), kind);
  try {
    net.validate();
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
  return net;
}

ItemResponses read_items(const std::string& path, DataKind kind) {
  CsvTable t = read_csv(path);
  if (t.values.rows() == 0 || t.values.cols() == 0) throw DataError(path + ": no item responses");
  ItemResponses items(std::move(t.values), kind);
  items.item_ids = t.header.empty() ? numbered("item", items.n_items()) : t.header;
  try {
    items.validate();
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
  return items;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "NA";
  if (x == 0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::vector<std::string> numbered(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

void write_csv(const std::string& path, const MatrixXd& values, const std::vector<std::string>& header) {
  write_csv(path, values, header, "", {});
}

void write_csv(const std::string& path, const MatrixXd& values, const std::vector<std::string>& header,
               const std::string& row_label_name, const std::vector<std::string>& row_labels) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols())
    throw std::invalid_argument("header width does not match the table");
  const bool labelled = !row_labels.empty();
  if (labelled && static_cast<Eigen::Index>(row_labels.size()) != values.rows())
    throw std::invalid_argument("row labels do not match the table");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  if (labelled) out << row_label_name << (header.empty() ? "" : ",");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (labelled) out << row_labels[static_cast<std::size_t>(i)] << (values.cols() ? "," : "");
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_number(values(i, j));
    out << '\n';
  }
}

namespace {

using nlohmann::json;

MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw DataError(what + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(i)].size()) != cols)
      throw DataError(what + " has ragged rows");
    for (Eigen::Index k = 0; k < cols; ++k)
      M(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  }
  return M;
}

json matrix_to_json(const MatrixXd& M) {
  json j = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    j.push_back(row);
  }
  return j;
}

}  // namespace

GenerativeParams read_generative_params(const std::string& path) {
  std::ifstream in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  try {
    GenerativeParams p;
    p.N = j.value("N", 100);
    p.K = j.at("K").get<int>();
    p.D = j.value("D", 0);
    p.delta = j.at("delta").get<double>();
    p.rho = j.value("rho", 0.0);
    p.sigma2_e = j.value("sigma2_e", 1.0);
    p.sigma2_eps = j.value("sigma2_eps", 1.0);
    p.Sigma_utheta = matrix_from_json(j.at("Sigma_utheta"), "Sigma_utheta");
    if (p.D > 0) {
      const auto beta = j.at("Beta").get<std::vector<double>>();
      p.Beta = Eigen::Map<const VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
      p.A = matrix_from_json(j.at("A"), "A");
      if (j.contains("subscale")) p.subscale = j["subscale"].get<std::vector<int>>();
    }
    p.network_kind = parse_data_kind(j.value("network_kind", std::string("binary")));
    p.item_kind = parse_data_kind(j.value("item_kind", std::string("continuous")));
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_generative_params(const std::string& path, const GenerativeParams& p) {
  json j;
  j["N"] = p.N;
  j["K"] = p.K;
  j["D"] = p.D;
  j["delta"] = p.delta;
  j["rho"] = p.rho;
  j["sigma2_e"] = p.sigma2_e;
  j["sigma2_eps"] = p.sigma2_eps;
  j["Sigma_utheta"] = matrix_to_json(p.Sigma_utheta);
  if (p.has_items()) {
    j["Beta"] = std::vector<double>(p.Beta.data(), p.Beta.data() + p.Beta.size());
    j["A"] = matrix_to_json(p.A);
    if (!p.subscale.empty()) j["subscale"] = p.subscale;
  }
  j["network_kind"] = to_string(p.network_kind);
  j["item_kind"] = to_string(p.item_kind);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace jnirm
